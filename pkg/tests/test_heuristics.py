"""Heuristics: local search, restarts, nested assortments, fixed-size swaps."""

import pytest

from dfopt.errors import DomainError
from dfopt.heuristics import divide_and_conquer, local_search, ls10, revenue_ordered
from dfopt.instancegen import GeneratorConfig, TreeShape, generate_instance
from dfopt.model import (
    AssortmentVector,
    ProductCatalog,
    brute_force_optimal,
    expected_revenue,
)

from cases import greedy_gap_tree, roa_gap_instance, single_tree_forest


def seeded_instance(seed, n=10, num_trees=5, leaves=8):
    return generate_instance(
        GeneratorConfig(
            n=n, num_trees=num_trees, shape=TreeShape("t3", leaves=leaves), seed=seed
        )
    )


class TestLocalSearch:
    def test_start_at_optimum_stays(self):
        catalog, tree = greedy_gap_tree()
        forest = single_tree_forest(tree)
        start = AssortmentVector.from_set(3, {1, 2, 3})
        res = local_search(catalog, forest, start)
        assert res.iterations == 0
        assert res.value == 20

    def test_greedy_gap_from_empty(self):
        # the 8-assortment landscape is 0/0/0/18/19/18/18/20: the best first
        # add is {3} (18), whose neighbors {1,3} and {2,3} only tie, so the
        # empty-start search stalls below the optimum of 20
        catalog, tree = greedy_gap_tree()
        forest = single_tree_forest(tree)
        res = local_search(catalog, forest)
        assert res.value == 18
        assert res.assortment.support() == {3}
        # a restart covering {1, 2} escapes: from 19 the best add reaches 20
        start = AssortmentVector.from_set(3, {1, 2})
        assert local_search(catalog, forest, start).value == 20

    def test_never_beats_brute_force(self):
        for seed in range(25):
            catalog, forest = seeded_instance(seed)
            res = local_search(catalog, forest)
            _, z_star = brute_force_optimal(catalog, forest)
            assert float(res.value) <= float(z_star) + 1e-12

    def test_value_recomputed_exactly(self):
        catalog, forest = seeded_instance(3)
        res = local_search(catalog, forest)
        assert res.value == expected_revenue(catalog, forest, res.assortment)

    def test_strictly_improving_no_revisit(self):
        # replay the trajectory: values must strictly increase step by step
        catalog, forest = seeded_instance(7)
        seen = set()
        members = set()
        value = expected_revenue(catalog, forest, AssortmentVector.from_set(10, set()))
        seen.add(frozenset())
        while True:
            best = None
            best_value = value
            for i in range(1, 11):
                cand = members - {i} if i in members else members | {i}
                v = expected_revenue(
                    catalog, forest, AssortmentVector.from_set(10, cand)
                )
                if v > best_value:
                    best_value = v
                    best = cand
            if best is None:
                break
            assert frozenset(best) not in seen
            seen.add(frozenset(best))
            members, value = best, best_value


class TestLs10:
    def test_single_product_always_optimal(self):
        catalog = ProductCatalog(n=1, revenues=(4,))
        from dfopt.model import Leaf, PurchaseTree, Split

        tree = PurchaseTree(
            {0: Split(1, 1, 2), 1: Leaf(1), 2: Leaf(0)}, root=0
        )
        forest = single_tree_forest(tree)
        res = ls10(catalog, forest, seed=0)
        _, z_star = brute_force_optimal(catalog, forest)
        assert res.value == z_star

    def test_deterministic_per_seed(self):
        catalog, forest = seeded_instance(5)
        a = ls10(catalog, forest, seed=42)
        b = ls10(catalog, forest, seed=42)
        assert a.assortment == b.assortment and a.value == b.value
        c = ls10(catalog, forest, seed=43)
        assert c.value <= float(brute_force_optimal(catalog, forest)[1]) + 1e-12

    def test_dominates_empty_start_with_controlled_seeding(self):
        for seed in range(20):
            catalog, forest = seeded_instance(seed)
            plain = local_search(catalog, forest)
            multi = ls10(catalog, forest, seed=seed, include_empty_start=True)
            assert float(multi.value) >= float(plain.value) - 1e-12


class TestRevenueOrdered:
    def test_single_product(self):
        catalog, forest = seeded_instance(1, n=1, num_trees=2, leaves=2)
        res = revenue_ordered(catalog, forest)
        assert res.value == expected_revenue(
            catalog, forest, AssortmentVector.from_set(1, {1})
        )

    def test_strictly_suboptimal_fixture(self):
        catalog, forest = roa_gap_instance()
        res = revenue_ordered(catalog, forest)
        _, z_star = brute_force_optimal(catalog, forest)
        assert float(res.value) < float(z_star)
        assert res.value == 0
        assert z_star == 9

    def test_never_beats_brute_force(self):
        for seed in range(25):
            catalog, forest = seeded_instance(seed)
            res = revenue_ordered(catalog, forest)
            _, z_star = brute_force_optimal(catalog, forest)
            assert float(res.value) <= float(z_star) + 1e-12

    def test_candidates_are_nested_prefixes(self):
        catalog, forest = seeded_instance(9)
        ranked = sorted(
            range(1, 11), key=lambda i: (-catalog.revenues[i - 1], i)
        )
        best = max(
            float(
                expected_revenue(
                    catalog,
                    forest,
                    AssortmentVector.from_set(10, set(ranked[:k])),
                )
            )
            for k in range(1, 11)
        )
        assert float(revenue_ordered(catalog, forest).value) == pytest.approx(best)


class TestDivideAndConquer:
    def test_full_cardinality_no_moves(self):
        catalog, forest = seeded_instance(2)
        res = divide_and_conquer(catalog, forest, b=10, seed=1)
        assert res.assortment.support() == set(range(1, 11))
        assert res.iterations == 0

    def test_bad_cardinality(self):
        catalog, forest = seeded_instance(2)
        with pytest.raises(DomainError):
            divide_and_conquer(catalog, forest, b=0)

    def test_cardinality_preserved_and_bounded(self):
        for seed in range(15):
            catalog, forest = seeded_instance(seed)
            res = divide_and_conquer(catalog, forest, b=3, seed=seed)
            assert len(res.assortment.support()) == 3
            _, z_star = brute_force_optimal(catalog, forest, cardinality=3)
            assert float(res.value) <= float(z_star) + 1e-12

    def test_deterministic_per_seed(self):
        catalog, forest = seeded_instance(4)
        a = divide_and_conquer(catalog, forest, b=4, seed=9)
        b = divide_and_conquer(catalog, forest, b=4, seed=9)
        assert a.assortment == b.assortment and a.value == b.value
