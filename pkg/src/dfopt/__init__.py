"""Assortment optimization under tree-ensemble (decision forest) choice models.

Exact solvers (three monolithic formulations plus a two-phase decomposition
with greedy/closed-form cut oracles), heuristic baselines, seeded instance
generators, and an experiment harness.  See README.md for an overview.
"""

from .benders import (
    BendersCut,
    Budget,
    MasterState,
    RelaxationResult,
    evaluate_cut,
    integer_phase,
    relaxation_phase,
    solve_two_phase,
)
from .errors import (
    ConfigError,
    ContractViolation,
    DfoptError,
    DomainError,
    IterationLimitError,
    SizeGuardError,
    SolverError,
    ValidationError,
)
from .formulations import (
    BuiltFormulation,
    Kind,
    build,
    integrality_gap,
    solve_integer_monolithic,
    solve_relaxation,
)
from .heuristics import (
    HeuristicResult,
    divide_and_conquer,
    local_search,
    ls10,
    revenue_ordered,
)
from .instancegen import (
    Cnf3Formula,
    GeneratorConfig,
    TreeShape,
    assign_leaf_options,
    gen_lambda,
    gen_revenues,
    gen_t1,
    gen_t2,
    gen_t3,
    generate_instance,
    max3sat_to_instance,
    parse_dimacs,
)
from .lp import LinearProgram, LpSolution, WarmBasis, solve_lp, solve_lp_with_basis
from .model import (
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
    validate_instance,
)
from .subproblems import (
    DualCertificate,
    EventTrace,
    integer_cut,
    knapsack_view,
    leaf_dual_greedy,
    leaf_order,
    leaf_primal_greedy,
    product_greedy_sweep,
    product_subproblem_lp,
    split_dual_greedy,
    split_primal_greedy,
)

__version__ = "0.1.0"
