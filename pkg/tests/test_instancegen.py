"""Generators: shapes, consistency, determinism, reduction semantics."""

from fractions import Fraction

import numpy as np
import pytest

from dfopt.errors import ConfigError, DomainError
from dfopt.instancegen import (
    Cnf3Formula,
    GeneratorConfig,
    TreeShape,
    gen_lambda,
    gen_t1,
    gen_t2,
    gen_t3,
    generate_instance,
    gen_revenues,
    max3sat_to_instance,
    parse_dimacs,
    random_formula,
)
from dfopt.model import (
    AssortmentVector,
    Leaf,
    Split,
    brute_force_optimal,
    expected_revenue,
    instance_to_json,
    traverse,
    validate_instance,
)


def cfg(kind, seed=0, n=8, num_trees=3, depth=3, leaves=8):
    shape = (
        TreeShape(kind="t3", leaves=leaves)
        if kind == "t3"
        else TreeShape(kind=kind, depth=depth)
    )
    return GeneratorConfig(n=n, num_trees=num_trees, shape=shape, seed=seed)


class TestConfig:
    def test_depth_needs_enough_products(self):
        with pytest.raises(ConfigError):
            cfg("t1", n=2, depth=3)

    def test_bad_revenue_range(self):
        with pytest.raises(ConfigError):
            GeneratorConfig(
                n=3, num_trees=1, shape=TreeShape("t3", leaves=4), revenue_range=(5, 1)
            )

    def test_from_obj(self):
        config = GeneratorConfig.from_obj(
            {"n": 10, "num_trees": 5, "shape": {"type": "T3", "leaves": 8}, "seed": 7}
        )
        assert config.shape.kind == "t3"
        assert config.revenue_range == (1, 100)


class TestT1:
    def test_minimal_shape(self):
        forest = gen_t1(cfg("t1", n=2, depth=1, num_trees=1, seed=4))
        tree = forest.trees[0]
        assert len(tree.split_ids) == 1
        assert len(tree.leaf_ids) == 2
        (s,) = tree.split_ids
        left_leaf = tree.nodes[s].left
        right_leaf = tree.nodes[s].right
        assert tree.nodes[left_leaf].option in (tree.split_product(s), 0)
        assert tree.nodes[right_leaf].option == 0

    def test_one_product_per_level(self):
        for seed in range(50):
            forest = gen_t1(cfg("t1", seed=seed))
            for tree in forest.trees:
                assert len(tree.leaf_ids) == 8
                per_level = {}
                for s in tree.split_ids:
                    per_level.setdefault(tree.depth[s], set()).add(tree.split_product(s))
                assert all(len(v) == 1 for v in per_level.values())
                products = [next(iter(v)) for v in per_level.values()]
                assert len(set(products)) == len(products)

    def test_deterministic_json(self):
        a = generate_instance(cfg("t1", seed=123))
        b = generate_instance(cfg("t1", seed=123))
        assert instance_to_json(*a) == instance_to_json(*b)
        c = generate_instance(cfg("t1", seed=124))
        assert instance_to_json(*a) != instance_to_json(*c)


class TestT2:
    def test_depth_one_matches_t1_distribution(self):
        # with one split per tree both families draw one uniform product
        f1 = gen_t1(cfg("t1", n=5, depth=1, num_trees=40, seed=9))
        f2 = gen_t2(cfg("t2", n=5, depth=1, num_trees=40, seed=9))
        p1 = sorted(t.split_product(t.split_ids[0]) for t in f1.trees)
        p2 = sorted(t.split_product(t.split_ids[0]) for t in f2.trees)
        assert set(p1) <= set(range(1, 6)) and set(p2) <= set(range(1, 6))

    def test_assumption_holds_by_construction(self):
        for seed in range(200):
            forest = gen_t2(cfg("t2", seed=seed, num_trees=1))
            tree = forest.trees[0]  # construction would have raised otherwise
            assert len(tree.leaf_ids) == 8

    def test_sibling_repetition_exists(self):
        # unlike the per-level family, siblings at equal depth may share a product
        found = False
        for seed in range(100):
            forest = gen_t2(cfg("t2", seed=seed, num_trees=2))
            for tree in forest.trees:
                for d, splits in tree.splits_at_depth.items():
                    products = [tree.split_product(s) for s in splits]
                    if len(set(products)) < len(products):
                        found = True
        assert found


class TestT3:
    def test_minimal(self):
        forest = gen_t3(cfg("t3", n=4, leaves=2, num_trees=1, seed=1))
        assert len(forest.trees[0].split_ids) == 1

    def test_leaf_count_exact(self):
        for seed in range(200):
            forest = gen_t3(cfg("t3", seed=seed, num_trees=1))
            tree = forest.trees[0]
            assert len(tree.leaf_ids) == 8
            assert len(tree.split_ids) == 7

    def test_unbalanced_in_general(self):
        depth_spread = False
        for seed in range(30):
            forest = gen_t3(cfg("t3", seed=seed, num_trees=1))
            tree = forest.trees[0]
            depths = {tree.depth[l] for l in tree.leaf_ids}
            if len(depths) > 1:
                depth_spread = True
        assert depth_spread

    def test_small_n_guard(self):
        with pytest.raises(ConfigError):
            gen_t3(cfg("t3", n=2, leaves=16, num_trees=1, seed=0))


class TestLeafOptions:
    def test_candidate_sets(self):
        for seed in range(50):
            forest = gen_t1(cfg("t1", seed=seed, num_trees=2))
            for tree in forest.trees:
                for l in tree.leaf_ids:
                    allowed = set(tree.leaf_in_products[l]) | {0}
                    assert tree.leaf_option(l) in allowed

    def test_traverse_never_leaves_assortment(self):
        rng = np.random.default_rng(0)
        for seed in range(100):
            kind = ["t1", "t2", "t3"][seed % 3]
            catalog, forest = generate_instance(cfg(kind, seed=seed, num_trees=2))
            members = {i for i in range(1, 9) if rng.integers(0, 2)}
            x = AssortmentVector.from_set(8, members)
            for tree in forest.trees:
                option, _ = traverse(tree, x)
                assert option == 0 or option in members


class TestLambda:
    def test_single_tree(self):
        rng = np.random.default_rng(0)
        assert gen_lambda(1, rng) == (1.0,)

    def test_sums_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            lam = gen_lambda(7, rng)
            assert abs(sum(lam) - 1.0) <= 1e-12
            assert all(v >= 0 for v in lam)

    def test_coordinate_mean(self):
        # Dirichlet(1,..,1) coordinate: mean 1/F, var (F-1)/(F^2 (F+1))
        rng = np.random.default_rng(2)
        f = 4
        draws = 100_000
        total = np.zeros(f)
        raw = rng.exponential(1.0, size=(draws, f))
        sums = raw.sum(axis=1, keepdims=True)
        total = (raw / sums).mean(axis=0)
        sigma_mean = np.sqrt((f - 1) / (f**2 * (f + 1)) / draws)
        assert np.all(np.abs(total - 1 / f) < 3 * sigma_mean + 1e-12)


class TestRevenues:
    def test_constant_range(self):
        rng = np.random.default_rng(0)
        assert gen_revenues(4, (5, 5), rng) == (5, 5, 5, 5)

    def test_default_range(self):
        catalog, _ = generate_instance(cfg("t3", seed=3))
        assert all(1 <= r <= 100 for r in catalog.revenues)

    def test_seeded_reproducibility(self):
        r1 = gen_revenues(10, (1, 100), np.random.Generator(np.random.PCG64(5)))
        r2 = gen_revenues(10, (1, 100), np.random.Generator(np.random.PCG64(5)))
        assert r1 == r2


class TestMax3Sat:
    def test_example_clause_shape(self):
        formula = Cnf3Formula(num_vars=8, clauses=((5, -7, 8),))
        catalog, forest = max3sat_to_instance(formula)
        assert catalog.n == 9
        assert catalog.revenues[8] == 1 and sum(catalog.revenues[:8]) == 0
        tree = forest.trees[0]
        root = tree.nodes[tree.root]
        assert root.product == 9
        assert isinstance(tree.nodes[root.right], Leaf)
        assert tree.nodes[root.right].option == 0
        chain = []
        node = tree.nodes[root.left]
        while isinstance(node, Split):
            chain.append(node.product)
            # the fall-through branch continues toward the next clause literal
            nxt_left = tree.nodes[node.left]
            nxt_right = tree.nodes[node.right]
            node = nxt_right if isinstance(nxt_left, Leaf) and (
                not isinstance(nxt_right, Leaf) or nxt_left.option == 9
            ) else nxt_left
        assert chain == [5, 7, 8]

    def test_single_clause_satisfying(self):
        formula = Cnf3Formula(num_vars=8, clauses=((5, -7, 8),))
        catalog, forest = max3sat_to_instance(formula)
        x = AssortmentVector.from_set(9, {5, 8, 9})
        assert expected_revenue(catalog, forest, x) == 1
        x_unsat = AssortmentVector.from_set(9, {7, 9})
        assert expected_revenue(catalog, forest, x_unsat) == 0
        x_no_signal = AssortmentVector.from_set(9, {5, 8})
        assert expected_revenue(catalog, forest, x_no_signal) == 0

    def test_two_of_three_satisfiable(self):
        # x1 can satisfy at most two of these three clauses at once
        formula = Cnf3Formula(
            num_vars=3,
            clauses=((1, 2, 3), (1, -2, -3), (-1, 2, -3)),
        )
        best = max(
            formula.satisfied_count([a, b, c])
            for a in (False, True)
            for b in (False, True)
            for c in (False, True)
        )
        catalog, forest = max3sat_to_instance(formula)
        _, value = brute_force_optimal(catalog, forest)
        assert value == Fraction(best, 3)

    def test_malformed_clause(self):
        with pytest.raises(DomainError):
            Cnf3Formula(num_vars=4, clauses=((1, 1, 2),))

    def test_reduction_matches_assignment_enumeration(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            formula = random_formula(rng, num_vars=6, num_clauses=7)
            catalog, forest = max3sat_to_instance(formula)
            validate_instance(catalog, forest)
            best = max(
                formula.satisfied_count(
                    [(mask >> i) & 1 == 1 for i in range(6)]
                )
                for mask in range(64)
            )
            _, value = brute_force_optimal(catalog, forest)
            assert value == Fraction(best, 7)


class TestDimacs:
    def test_parse(self):
        text = "c comment\np cnf 4 2\n1 -2 3 0\n-1 2 4 0\n"
        formula = parse_dimacs(text)
        assert formula.num_vars == 4
        assert formula.clauses == ((1, -2, 3), (-1, 2, 4))

    def test_rejects_short_clause(self):
        with pytest.raises(DomainError):
            parse_dimacs("p cnf 3 1\n1 2 0\n")
