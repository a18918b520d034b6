"""Synthetic instance generators and the 3-CNF reduction.

Three tree families are supported:

- T1: balanced depth-d trees; one product per depth level, the d products
  drawn without replacement, so products repeat heavily across splits.
- T2: balanced depth-d trees; each split draws its product independently,
  excluding only the products on its ancestor splits.
- T3: unbalanced trees grown by L-1 uniform leaf expansions.

Leaf options are always drawn uniformly from the products known to be offered
when the leaf is reached, plus the no-purchase option, so traversal never
returns an option outside the assortment.  Tree weights are uniform on the
probability simplex (normalized exponential draws) and revenues are uniform
integers.

Reproducibility: all randomness flows through one numpy PCG64 generator per
instance; sampling without replacement uses an explicit partial Fisher-Yates
pass so streams are identical across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .errors import ConfigError, DomainError
from .model import (
    DecisionForest,
    Leaf,
    Node,
    ProductCatalog,
    PurchaseTree,
    Split,
)


@dataclass(frozen=True)
class TreeShape:
    """Shape selector: kind in {"t1", "t2", "t3"} with depth or leaf count."""

    kind: str
    depth: int | None = None
    leaves: int | None = None

    def __post_init__(self):
        if self.kind in ("t1", "t2"):
            if self.depth is None or self.depth < 1:
                raise ConfigError(f"{self.kind} needs depth >= 1")
        elif self.kind == "t3":
            if self.leaves is None or self.leaves < 2:
                raise ConfigError("t3 needs leaves >= 2")
        else:
            raise ConfigError(f"unknown tree shape {self.kind!r}")


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    num_trees: int
    shape: TreeShape
    revenue_range: tuple[int, int] = (1, 100)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.num_trees < 1:
            raise ConfigError("num_trees must be >= 1")
        lo, hi = self.revenue_range
        if lo > hi or lo < 0:
            raise ConfigError(f"empty or negative revenue range {self.revenue_range}")
        if self.shape.kind in ("t1", "t2") and self.n < self.shape.depth:
            raise ConfigError(
                f"{self.shape.kind} depth {self.shape.depth} needs n >= depth"
            )

    @classmethod
    def from_obj(cls, obj: dict) -> "GeneratorConfig":
        shape_obj = obj["shape"]
        shape = TreeShape(
            kind=str(shape_obj["type"]).lower(),
            depth=shape_obj.get("depth"),
            leaves=shape_obj.get("leaves"),
        )
        rr = obj.get("revenue_range", [1, 100])
        return cls(
            n=int(obj["n"]),
            num_trees=int(obj["num_trees"]),
            shape=shape,
            revenue_range=(int(rr[0]), int(rr[1])),
            seed=int(obj.get("seed", 0)),
        )


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sample_without_replacement(rng, pool: list[int], k: int) -> list[int]:
    """First k entries of a partial Fisher-Yates shuffle of ``pool`` (copied)."""
    pool = list(pool)
    if k > len(pool):
        raise ConfigError(f"cannot draw {k} items from {len(pool)}")
    for i in range(k):
        j = int(rng.integers(i, len(pool)))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def _choice(rng, seq):
    return seq[int(rng.integers(0, len(seq)))]


def assign_leaf_options(tree_nodes: dict[int, Node], root: int, rng) -> PurchaseTree:
    """Fill placeholder leaves with options consistent with their path.

    A leaf's candidate set is the products on splits the leaf lies left of,
    plus the no-purchase option; leaves with no left splits get option 0.
    Leaves are visited in ascending node id so draws are reproducible.
    """
    tree = PurchaseTree(tree_nodes, root)
    filled = dict(tree_nodes)
    for l in tree.leaf_ids:
        candidates = sorted(tree.leaf_in_products[l]) + [0]
        filled[l] = Leaf(_choice(rng, candidates))
    return PurchaseTree(filled, root)


def _balanced_arena(depth: int) -> tuple[dict[int, Node], int]:
    """Perfect tree with heap ids: node k has children 2k, 2k+1; root 1."""
    nodes: dict[int, Node] = {}
    for k in range(1, 1 << depth):
        nodes[k] = Split(product=-1, left=2 * k, right=2 * k + 1)
    for k in range(1 << depth, 1 << (depth + 1)):
        nodes[k] = Leaf(option=0)
    return nodes, 1


def _gen_balanced_tree(config: GeneratorConfig, rng, per_level: bool) -> PurchaseTree:
    d = config.shape.depth
    nodes, root = _balanced_arena(d)
    if per_level:
        level_products = sample_without_replacement(
            rng, list(range(1, config.n + 1)), d
        )
        for k in range(1, 1 << d):
            level = k.bit_length()  # heap id k sits at depth bit_length(k)
            nodes[k] = Split(level_products[level - 1], 2 * k, 2 * k + 1)
    else:
        ancestors: dict[int, frozenset[int]] = {1: frozenset()}
        for k in range(1, 1 << d):
            anc = ancestors[k]
            candidates = [p for p in range(1, config.n + 1) if p not in anc]
            product = _choice(rng, candidates)
            nodes[k] = Split(product, 2 * k, 2 * k + 1)
            for child in (2 * k, 2 * k + 1):
                if child < (1 << d):
                    ancestors[child] = anc | {product}
    return assign_leaf_options(nodes, root, rng)


def _gen_t3_tree(config: GeneratorConfig, rng) -> PurchaseTree:
    target = config.shape.leaves
    nodes: dict[int, Node] = {0: Leaf(option=0)}
    ancestors: dict[int, frozenset[int]] = {0: frozenset()}
    leaf_list: list[int] = [0]
    next_id = 1
    while len(leaf_list) < target:
        expandable = [l for l in leaf_list if len(ancestors[l]) < config.n]
        if not expandable:
            raise ConfigError(
                f"cannot grow to {target} leaves with n={config.n} products"
            )
        leaf = _choice(rng, expandable)
        candidates = [p for p in range(1, config.n + 1) if p not in ancestors[leaf]]
        product = _choice(rng, candidates)
        left_id, right_id = next_id, next_id + 1
        next_id += 2
        nodes[leaf] = Split(product, left_id, right_id)
        nodes[left_id] = Leaf(option=0)
        nodes[right_id] = Leaf(option=0)
        child_anc = ancestors[leaf] | {product}
        ancestors[left_id] = child_anc
        ancestors[right_id] = child_anc
        pos = leaf_list.index(leaf)
        leaf_list[pos : pos + 1] = [left_id, right_id]
    return assign_leaf_options(nodes, 0, rng)


def gen_lambda(num_trees: int, rng) -> tuple[float, ...]:
    """Uniform draw from the probability simplex via normalized exponentials."""
    if num_trees < 1:
        raise ConfigError("num_trees must be >= 1")
    draws = rng.exponential(1.0, size=num_trees)
    total = float(draws.sum())
    return tuple(float(v) / total for v in draws)


def gen_revenues(n: int, revenue_range: tuple[int, int], rng) -> tuple[int, ...]:
    lo, hi = revenue_range
    return tuple(int(v) for v in rng.integers(lo, hi + 1, size=n))


def _gen_forest(config: GeneratorConfig, rng) -> DecisionForest:
    trees = []
    for _ in range(config.num_trees):
        if config.shape.kind == "t1":
            trees.append(_gen_balanced_tree(config, rng, per_level=True))
        elif config.shape.kind == "t2":
            trees.append(_gen_balanced_tree(config, rng, per_level=False))
        else:
            trees.append(_gen_t3_tree(config, rng))
    weights = gen_lambda(config.num_trees, rng)
    return DecisionForest(trees=tuple(trees), weights=weights)


def gen_t1(config: GeneratorConfig) -> DecisionForest:
    if config.shape.kind != "t1":
        raise ConfigError("config shape is not t1")
    return _gen_forest(config, _rng(config.seed))


def gen_t2(config: GeneratorConfig) -> DecisionForest:
    if config.shape.kind != "t2":
        raise ConfigError("config shape is not t2")
    return _gen_forest(config, _rng(config.seed))


def gen_t3(config: GeneratorConfig) -> DecisionForest:
    if config.shape.kind != "t3":
        raise ConfigError("config shape is not t3")
    return _gen_forest(config, _rng(config.seed))


def generate_instance(config: GeneratorConfig) -> tuple[ProductCatalog, DecisionForest]:
    """Forest plus revenues from one seeded stream (trees, weights, revenues)."""
    rng = _rng(config.seed)
    forest = _gen_forest(config, rng)
    revenues = gen_revenues(config.n, config.revenue_range, rng)
    return ProductCatalog(n=config.n, revenues=revenues), forest


# ---------------------------------------------------------------------------
# MAX-3SAT reduction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cnf3Formula:
    """3-CNF formula: clauses are triples of signed literals over distinct vars."""

    num_vars: int
    clauses: tuple[tuple[int, int, int], ...] = field(default=())

    def __post_init__(self):
        if self.num_vars < 1:
            raise DomainError("formula needs at least one variable")
        if not self.clauses:
            raise DomainError("formula needs at least one clause")
        for m, clause in enumerate(self.clauses):
            if len(clause) != 3:
                raise DomainError(f"clause {m} does not have 3 literals")
            vars_ = [abs(lit) for lit in clause]
            if len(set(vars_)) != 3:
                raise DomainError(f"clause {m} repeats a variable")
            for lit in clause:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise DomainError(f"clause {m}: literal {lit} out of range")

    def satisfied_count(self, assignment: Iterable[bool]) -> int:
        truth = list(assignment)
        count = 0
        for clause in self.clauses:
            for lit in clause:
                val = truth[abs(lit) - 1]
                if (lit > 0 and val) or (lit < 0 and not val):
                    count += 1
                    break
        return count


def _clause_tree(clause: tuple[int, int, int], signal_product: int) -> PurchaseTree:
    """One tree per clause: buying the signal product encodes satisfaction.

    The root tests the signal product (right child: no purchase).  Below it,
    a chain of three splits tests the clause variables; the branch on which
    the literal evaluates true leads to a leaf buying the signal product, the
    other branch falls through to the next literal, and the final
    fall-through leaf is a no-purchase.
    """
    nodes: dict[int, Node] = {}
    next_id = 0

    def alloc(node: Node) -> int:
        nonlocal next_id
        nodes[next_id] = node
        next_id += 1
        return next_id - 1

    root = alloc(Split(signal_product, left=-1, right=-1))
    zero_right = alloc(Leaf(0))

    chain_parent = root
    attach_left = True  # which child of chain_parent receives the next split
    for k, lit in enumerate(clause):
        split_id = alloc(Split(abs(lit), left=-1, right=-1))
        sat_leaf = alloc(Leaf(signal_product))
        if k < 2:
            cont_id = -1  # patched when the next split is allocated
        else:
            cont_id = alloc(Leaf(0))
        if lit > 0:
            left, right = sat_leaf, cont_id
            next_attach_left = False
        else:
            left, right = cont_id, sat_leaf
            next_attach_left = True
        nodes[split_id] = Split(abs(lit), left, right)
        parent = nodes[chain_parent]
        if chain_parent == root:
            nodes[root] = Split(parent.product, left=split_id, right=zero_right)
        elif attach_left:
            nodes[chain_parent] = Split(parent.product, split_id, parent.right)
        else:
            nodes[chain_parent] = Split(parent.product, parent.left, split_id)
        chain_parent = split_id
        attach_left = next_attach_left
    return PurchaseTree(nodes, root)


def max3sat_to_instance(
    formula: Cnf3Formula,
) -> tuple[ProductCatalog, DecisionForest]:
    """Assortment instance whose optimum is (max satisfiable clauses)/M.

    Products 1..K mirror the variables (revenue 0); product K+1 has revenue 1
    and must be offered for any revenue to accrue.  With K+1 offered, the
    expected revenue of an assortment equals the fraction of clauses the
    induced assignment satisfies; weights are exact rationals 1/M so the
    correspondence is exact.
    """
    k = formula.num_vars
    m = len(formula.clauses)
    catalog = ProductCatalog(n=k + 1, revenues=tuple([0] * k + [1]))
    trees = tuple(_clause_tree(c, k + 1) for c in formula.clauses)
    weights = tuple(Fraction(1, m) for _ in range(m))
    return catalog, DecisionForest(trees=trees, weights=weights)


def parse_dimacs(text: str) -> Cnf3Formula:
    """Parse DIMACS CNF; every clause must have exactly three literals."""
    num_vars = None
    clauses: list[tuple[int, int, int]] = []
    pending: list[int] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) < 4 or parts[1] != "cnf":
                raise DomainError(f"bad DIMACS header: {line!r}")
            num_vars = int(parts[2])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                if len(pending) != 3:
                    raise DomainError(f"clause with {len(pending)} literals")
                clauses.append((pending[0], pending[1], pending[2]))
                pending = []
            else:
                pending.append(lit)
    if pending:
        raise DomainError("unterminated clause at end of file")
    if num_vars is None:
        raise DomainError("missing DIMACS header")
    return Cnf3Formula(num_vars=num_vars, clauses=tuple(clauses))


def random_formula(rng, num_vars: int, num_clauses: int) -> Cnf3Formula:
    """Random 3-CNF: distinct variables per clause, independent random signs."""
    if num_vars < 3:
        raise ConfigError("need at least 3 variables")
    clauses = []
    for _ in range(num_clauses):
        vars_ = sample_without_replacement(rng, list(range(1, num_vars + 1)), 3)
        lits = tuple(
            v if int(rng.integers(0, 2)) == 1 else -v for v in sorted(vars_)
        )
        clauses.append(lits)
    return Cnf3Formula(num_vars=num_vars, clauses=tuple(clauses))
