"""Model layer: traversal, probabilities, revenue, brute force, JSON."""

import json
from fractions import Fraction

import pytest

from dfopt.errors import DomainError, SizeGuardError, ValidationError
from dfopt.instancegen import GeneratorConfig, TreeShape, generate_instance
from dfopt.model import (
    AssortmentVector,
    DecisionForest,
    Leaf,
    ProductCatalog,
    PurchaseTree,
    Split,
    brute_force_optimal,
    choice_probability,
    expected_revenue,
    instance_from_json,
    instance_to_json,
    traverse,
)

from cases import (
    five_product_tree,
    greedy_gap_tree,
    single_leaf_tree,
    single_tree_forest,
    split_relax_tree,
)


def seeded_instance(seed, n=8, num_trees=3, leaves=8, kind="t3"):
    shape = (
        TreeShape(kind=kind, leaves=leaves)
        if kind == "t3"
        else TreeShape(kind=kind, depth=3)
    )
    config = GeneratorConfig(n=n, num_trees=num_trees, shape=shape, seed=seed)
    return generate_instance(config)


# ---------------------------------------------------------------------------
# construction and validation
# ---------------------------------------------------------------------------


class TestTreeValidation:
    def test_missing_child_rejected(self):
        with pytest.raises(ValidationError):
            PurchaseTree({0: Split(1, 1, 2), 1: Leaf(0)}, root=0)

    def test_two_parents_rejected(self):
        nodes = {0: Split(1, 1, 2), 1: Split(2, 2, 3), 2: Leaf(0), 3: Leaf(0)}
        with pytest.raises(ValidationError):
            PurchaseTree(nodes, root=0)

    def test_orphan_rejected(self):
        nodes = {0: Leaf(0), 5: Leaf(1)}
        with pytest.raises(ValidationError):
            PurchaseTree(nodes, root=0)

    def test_repeated_product_on_path_rejected(self):
        nodes = {
            0: Split(1, 1, 2),
            1: Split(1, 3, 4),
            2: Leaf(0),
            3: Leaf(0),
            4: Leaf(0),
        }
        with pytest.raises(ValidationError):
            PurchaseTree(nodes, root=0)

    def test_repeat_across_branches_allowed(self):
        _, tree = split_relax_tree()
        assert tree.products == (1, 2)

    def test_index_sets(self):
        _, tree = greedy_gap_tree()
        assert tree.left_leaves[1] == (6, 7, 8, 9)
        assert tree.right_leaves[1] == (10, 11)
        assert tree.product_left_leaves[3] == (6, 8, 10)
        assert tree.product_right_leaves[3] == (7, 9, 11)
        assert tree.leaf_in_products[6] == (1, 2, 3)
        assert tree.leaf_out_products[11] == (1, 3)

    def test_weights_must_sum_to_one(self):
        tree = single_leaf_tree()
        with pytest.raises(ValidationError):
            DecisionForest(trees=(tree, tree), weights=(0.7, 0.2))

    def test_negative_revenue_rejected(self):
        with pytest.raises(ValidationError):
            ProductCatalog(n=2, revenues=(1, -1))


# ---------------------------------------------------------------------------
# traverse
# ---------------------------------------------------------------------------


class TestTraverse:
    def test_five_product_walk(self):
        _, tree = five_product_tree()
        option, leaf = traverse(tree, AssortmentVector.from_set(5, {1, 3, 4, 5}))
        assert option == 5

    def test_single_leaf(self):
        tree = single_leaf_tree(option=0)
        for s in [set(), {1}, {1, 2}]:
            option, leaf = traverse(tree, AssortmentVector.from_set(2, s))
            assert option == 0
            assert leaf == 0

    def test_greedy_gap_tree_full_assortment(self):
        _, tree = greedy_gap_tree()
        option, leaf = traverse(tree, AssortmentVector.from_set(3, {1, 2, 3}))
        assert (option, leaf) == (1, 6)

    def test_fractional_input_rejected(self):
        _, tree = five_product_tree()
        with pytest.raises(DomainError):
            traverse(tree, (0.5, 0, 0, 0, 0))

    def test_generated_options_stay_offered(self):
        # leaf options are consistent by construction: never an off-assortment buy
        for seed in range(30):
            catalog, forest = seeded_instance(seed)
            for mask_seed in range(5):
                members = {i for i in range(1, 9) if (seed + mask_seed + i) % 3 == 0}
                x = AssortmentVector.from_set(8, members)
                for tree in forest.trees:
                    option, _ = traverse(tree, x)
                    assert option == 0 or option in members


# ---------------------------------------------------------------------------
# choice probabilities and revenue
# ---------------------------------------------------------------------------


class TestChoiceProbability:
    def test_single_leaf_no_purchase(self):
        forest = single_tree_forest(single_leaf_tree())
        for s in [set(), {1}]:
            assert choice_probability(forest, 0, AssortmentVector.from_set(1, s)) == 1

    def test_five_product_probabilities(self):
        _, tree = five_product_tree()
        forest = single_tree_forest(tree)
        x = AssortmentVector.from_set(5, {1, 3, 4, 5})
        assert choice_probability(forest, 5, x) == 1
        for j in [1, 3, 4, 0]:
            assert choice_probability(forest, j, x) == 0

    def test_rejects_unoffered_option(self):
        _, tree = five_product_tree()
        forest = single_tree_forest(tree)
        with pytest.raises(DomainError):
            choice_probability(forest, 2, AssortmentVector.from_set(5, {1, 3}))

    def test_matches_per_tree_tally(self):
        catalog, forest = seeded_instance(11, num_trees=3)
        x = AssortmentVector.from_set(8, {1, 4, 6})
        for option in [0, 1, 4, 6]:
            expected = sum(
                w
                for tree, w in zip(forest.trees, forest.weights)
                if traverse(tree, x)[0] == option
            )
            assert choice_probability(forest, option, x) == pytest.approx(expected)

    def test_probabilities_sum_to_one(self):
        for seed in range(100):
            catalog, forest = seeded_instance(seed, n=6, num_trees=4, leaves=4)
            members = {i for i in range(1, 7) if (seed >> i) & 1}
            x = AssortmentVector.from_set(6, members)
            total = sum(
                choice_probability(forest, j, x) for j in sorted(members) + [0]
            )
            assert total == pytest.approx(1.0, abs=1e-12)


class TestExpectedRevenue:
    def test_single_leaf_zero(self):
        catalog = ProductCatalog(n=2, revenues=(5, 7))
        forest = single_tree_forest(single_leaf_tree())
        for s in [set(), {1}, {1, 2}]:
            assert expected_revenue(catalog, forest, AssortmentVector.from_set(2, s)) == 0

    def test_greedy_gap_tree_value(self):
        catalog, tree = greedy_gap_tree()
        forest = single_tree_forest(tree)
        x = AssortmentVector.from_set(3, {1, 2, 3})
        assert expected_revenue(catalog, forest, x) == 20

    def test_permutation_invariance(self):
        catalog, forest = seeded_instance(3, num_trees=4)
        x = AssortmentVector.from_set(8, {2, 3, 7})
        base = expected_revenue(catalog, forest, x)
        perm = [2, 0, 3, 1]
        shuffled = DecisionForest(
            trees=tuple(forest.trees[i] for i in perm),
            weights=tuple(forest.weights[i] for i in perm),
        )
        assert expected_revenue(catalog, shuffled, x) == pytest.approx(base, rel=1e-15)

    def test_revenue_scaling(self):
        catalog, forest = seeded_instance(5)
        scaled = ProductCatalog(n=catalog.n, revenues=tuple(3 * r for r in catalog.revenues))
        x_base, v_base = brute_force_optimal(catalog, forest)
        x_scaled, v_scaled = brute_force_optimal(scaled, forest)
        assert x_base == x_scaled
        assert float(v_scaled) == pytest.approx(3 * float(v_base), rel=1e-12)


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------


class TestBruteForce:
    def test_greedy_gap_instance(self):
        catalog, tree = greedy_gap_tree()
        forest = single_tree_forest(tree)
        x, value = brute_force_optimal(catalog, forest)
        assert value == 20
        assert x.support() == {1, 2, 3}

    def test_all_zero_revenues(self):
        catalog = ProductCatalog(n=3, revenues=(0, 0, 0))
        _, tree = greedy_gap_tree()
        forest = single_tree_forest(tree)
        x, value = brute_force_optimal(catalog, forest)
        assert value == 0
        assert x.support() == set()  # lexicographically smallest tie

    def test_split_relax_tree_enumeration(self):
        catalog, tree = split_relax_tree()
        forest = single_tree_forest(tree)
        x, value = brute_force_optimal(catalog, forest)
        by_hand = max(
            expected_revenue(catalog, forest, AssortmentVector.from_set(2, s))
            for s in [set(), {1}, {2}, {1, 2}]
        )
        assert value == by_hand

    def test_cardinality_restriction(self):
        catalog, forest = seeded_instance(9, n=6, num_trees=3, leaves=4)
        x, value = brute_force_optimal(catalog, forest, cardinality=2)
        assert len(x.support()) == 2
        best = max(
            float(expected_revenue(catalog, forest, AssortmentVector.from_set(6, {i, j})))
            for i in range(1, 7)
            for j in range(i + 1, 7)
        )
        assert float(value) == pytest.approx(best)

    def test_size_guard(self):
        catalog = ProductCatalog(n=26, revenues=(1,) * 26)
        forest = single_tree_forest(single_leaf_tree())
        with pytest.raises(SizeGuardError):
            brute_force_optimal(catalog, forest)

    def test_matches_slow_reference(self):
        # independent oracle: plain traverse-based evaluation of every subset
        for seed in range(5):
            catalog, forest = seeded_instance(seed, n=6, num_trees=3, leaves=4)
            best_val = None
            best_set = None
            for mask in range(1 << 6):
                members = {i for i in range(1, 7) if (mask >> (6 - i)) & 1}
                v = float(
                    expected_revenue(catalog, forest, AssortmentVector.from_set(6, members))
                )
                if best_val is None or v > best_val:
                    best_val, best_set = v, members
            x, value = brute_force_optimal(catalog, forest)
            assert float(value) == pytest.approx(best_val)
            assert float(
                expected_revenue(catalog, forest, x)
            ) == pytest.approx(best_val)


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


class TestJson:
    def test_round_trip_bytes(self):
        catalog, forest = seeded_instance(7)
        text = instance_to_json(catalog, forest)
        catalog2, forest2 = instance_from_json(text)
        assert instance_to_json(catalog2, forest2) == text

    def test_round_trip_preserves_semantics(self):
        catalog, forest = seeded_instance(13)
        catalog2, forest2 = instance_from_json(instance_to_json(catalog, forest))
        x = AssortmentVector.from_set(catalog.n, {1, 2, 5})
        assert float(expected_revenue(catalog, forest, x)) == pytest.approx(
            float(expected_revenue(catalog2, forest2, x))
        )

    def test_rational_revenues_round_trip(self):
        catalog = ProductCatalog(n=2, revenues=(Fraction(1, 2), Fraction(1, 3)))
        forest = single_tree_forest(single_leaf_tree())
        text = instance_to_json(catalog, forest)
        obj = json.loads(text)
        assert obj["revenues"] == ["0.5", "1/3"]
        catalog2, _ = instance_from_json(text)
        assert catalog2.revenues == (Fraction(1, 2), Fraction(1, 3))

    def test_schema_shape(self):
        catalog, forest = seeded_instance(1, num_trees=2)
        obj = json.loads(instance_to_json(catalog, forest))
        assert set(obj) == {"n", "revenues", "trees", "lambda"}
        node = obj["trees"][0]["nodes"][obj["trees"][0]["root"]]
        assert "split" in node or "leaf" in node
