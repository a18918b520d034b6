"""Command-line surface: instance generation, solving, experiment tables.

Subcommands:

- ``dfopt generate``: synthetic instances from a config file (or a 3-CNF
  reduction from a DIMACS file) to canonical JSON.
- ``dfopt solve``: one instance, one method, JSON result on stdout/file.
- ``dfopt experiment``: a seeded grid of instances and methods, one CSV per
  table, reproducible byte for byte given the same spec (timings can be
  zeroed with --no-timings for exact reruns).

Exit codes: 0 success, 2 configuration error, 3 budget exhausted (partial
result emitted), 4 internal solver error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import benders, formulations, heuristics, instancegen, model
from .errors import ConfigError, DfoptError, DomainError, SolverError

SCHEMA_PREFIX = "dfopt"
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_SOLVER = 4

METHODS = (
    "brute",
    "monolithic:leaf",
    "monolithic:split",
    "monolithic:product",
    "benders:leaf",
    "benders:split",
    "benders:product",
    "ls",
    "ls10",
    "roa",
    "dnc",
)


def _pool_size() -> int:
    try:
        return max(1, int(os.environ.get("DFOPT_THREADS", "1")))
    except ValueError:
        return 1


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.cnf:
        formula = instancegen.parse_dimacs(Path(args.cnf).read_text())
        catalog, forest = instancegen.max3sat_to_instance(formula)
        _write_text(args.out, model.instance_to_json(catalog, forest))
        return EXIT_OK
    cfg_obj = json.loads(Path(args.config).read_text())
    configs = cfg_obj["configs"] if "configs" in cfg_obj else [cfg_obj]
    master_seed = int(cfg_obj.get("seed", 0))
    multi = len(configs) > 1
    for idx, entry in enumerate(configs):
        entry = dict(entry)
        entry.setdefault("seed", master_seed + idx)
        config = instancegen.GeneratorConfig.from_obj(entry)
        catalog, forest = instancegen.generate_instance(config)
        text = model.instance_to_json(catalog, forest)
        if multi:
            base = Path(args.out or "instance.json")
            path = base.with_name(f"{base.stem}-{idx}{base.suffix}")
            _write_text(str(path), text)
        else:
            _write_text(args.out, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _budget(args) -> benders.Budget:
    return benders.Budget(max_nodes=args.budget_nodes, max_seconds=args.budget_sec)


def solve_one(
    catalog,
    forest,
    method: str,
    cardinality=None,
    budget=None,
    seed: int = 0,
    timings: bool = True,
) -> dict:
    """Run one method; returns the result row used by solve and experiment."""
    t0 = time.monotonic()
    out: dict = {"method": method, "seed": seed}
    if method == "brute":
        x, value = model.brute_force_optimal(catalog, forest, cardinality)
        out.update(value=float(value), bound=float(value), gap=0.0, optimal=True)
        out["assortment"] = sorted(x.support())
    elif method.startswith("monolithic:"):
        kind = formulations.Kind(method.split(":", 1)[1])
        built = formulations.build(kind, catalog, forest, cardinality)
        res = formulations.solve_integer_monolithic(built, catalog, forest, budget)
        out.update(
            value=res.value,
            bound=res.upper_bound,
            gap=res.gap_pct,
            nodes=res.nodes,
            optimal=res.optimal,
        )
        out["assortment"] = sorted(res.x.support()) if res.x else None
    elif method.startswith("benders:"):
        kind = formulations.Kind(method.split(":", 1)[1])
        relax, res = benders.solve_two_phase(kind, catalog, forest, cardinality, budget)
        out.update(
            value=res.value,
            bound=res.upper_bound,
            gap=res.gap_pct,
            z_lo=relax.value,
            z_lb=res.value,
            z_ub=res.upper_bound,
            rounds=relax.rounds,
            nodes=res.nodes,
            cuts=len(relax.state.pool),
            optimal=res.optimal,
        )
        out["assortment"] = sorted(res.x.support()) if res.x else None
    elif method == "ls":
        res = heuristics.local_search(catalog, forest)
        out.update(value=float(res.value), bound=None, gap=None, optimal=False)
        out["assortment"] = sorted(res.assortment.support())
    elif method == "ls10":
        res = heuristics.ls10(catalog, forest, seed=seed)
        out.update(value=float(res.value), bound=None, gap=None, optimal=False)
        out["assortment"] = sorted(res.assortment.support())
    elif method == "roa":
        res = heuristics.revenue_ordered(catalog, forest)
        out.update(value=float(res.value), bound=None, gap=None, optimal=False)
        out["assortment"] = sorted(res.assortment.support())
    elif method == "dnc":
        if cardinality is None:
            raise ConfigError("dnc requires --cardinality")
        res = heuristics.divide_and_conquer(catalog, forest, cardinality, seed=seed)
        out.update(value=float(res.value), bound=None, gap=None, optimal=False)
        out["assortment"] = sorted(res.assortment.support())
    else:
        raise ConfigError(f"unknown method {method!r} (choose from {METHODS})")
    out["wall_ms"] = round((time.monotonic() - t0) * 1000.0, 3) if timings else 0.0
    return out


def cmd_solve(args) -> int:
    catalog, forest = model.instance_from_json(Path(args.instance).read_text())
    result = solve_one(
        catalog,
        forest,
        args.method,
        cardinality=args.cardinality,
        budget=_budget(args),
        seed=args.seed,
        timings=not args.no_timings,
    )
    _write_text(args.out, _dump_json(result))
    if result.get("optimal") is False and args.method.split(":")[0] in (
        "monolithic",
        "benders",
    ):
        return EXIT_BUDGET
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


def _shape_for(type_name: str, leaves: int) -> instancegen.TreeShape:
    if type_name in ("t1", "t2"):
        depth = max(1, (leaves - 1).bit_length())
        if 1 << depth != leaves:
            raise ConfigError(f"{type_name} needs a power-of-two leaf count")
        return instancegen.TreeShape(kind=type_name, depth=depth)
    if type_name == "t3":
        return instancegen.TreeShape(kind="t3", leaves=leaves)
    raise ConfigError(f"unknown instance type {type_name!r}")


def _instance_for(type_name, n, num_trees, leaves, seed, revenue_range=(1, 100)):
    config = instancegen.GeneratorConfig(
        n=n,
        num_trees=num_trees,
        shape=_shape_for(type_name, leaves),
        revenue_range=tuple(revenue_range),
        seed=seed,
    )
    return instancegen.generate_instance(config)


def _rep_seed(master_seed: int, *coords) -> int:
    # stable across processes (never use hash(): it is salted per run)
    seed = master_seed % (2**63)
    for c in coords:
        for byte in str(c).encode():
            seed = (seed * 1_000_003 + byte) % (2**63)
    return seed


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _mean(rows, key):
    vals = [r[key] for r in rows if isinstance(r.get(key), (int, float))]
    if not vals:
        return None
    return sum(vals) / len(vals)


def _write_csv(path: Path, schema: str, header: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["schema"] + header)
    for row in rows:
        writer.writerow([schema] + [_fmt(row.get(k)) for k in header])
    path.write_text(buf.getvalue())


def _grid(spec) -> list[tuple]:
    cells = []
    for type_name in spec.get("types", ["t3"]):
        for n in spec.get("n", [10]):
            for num_trees in spec.get("num_trees", [5]):
                for leaves in spec.get("leaves", [8]):
                    cells.append((str(type_name).lower(), int(n), int(num_trees), int(leaves)))
    return cells


def _run_cells(spec, worker):
    """Evaluate ``worker`` per (cell, replication), optionally in a pool."""
    reps = int(spec.get("replications", 1))
    if reps < 1:
        raise ConfigError("replications must be >= 1")
    master_seed = int(spec.get("seed", 0))
    tasks = []
    for cell in _grid(spec):
        for rep in range(reps):
            seed = _rep_seed(master_seed, *cell, rep)
            tasks.append((cell, rep, seed))
    pool = _pool_size()
    if pool == 1:
        results = [worker(cell, rep, seed) for cell, rep, seed in tasks]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=pool) as ex:
            results = list(ex.map(lambda t: worker(*t), tasks))
    return [(t[0], t[1], t[2], r) for t, r in zip(tasks, results)]


def _rows_with_means(results, metric_keys):
    rows = []
    by_cell: dict[tuple, list[dict]] = {}
    for cell, rep, seed, metrics in results:
        row = {
            "type": cell[0],
            "n": cell[1],
            "num_trees": cell[2],
            "leaves": cell[3],
            "rep": rep,
            "seed": seed,
        }
        row.update(metrics)
        rows.append(row)
        by_cell.setdefault(cell, []).append(row)
    for cell, cell_rows in by_cell.items():
        mean_row = {
            "type": cell[0],
            "n": cell[1],
            "num_trees": cell[2],
            "leaves": cell[3],
            "rep": "mean",
            "seed": "",
        }
        for key in metric_keys:
            mean_row[key] = _mean(cell_rows, key)
        rows.append(mean_row)
    rows.sort(key=lambda r: (r["type"], r["n"], r["num_trees"], r["leaves"], str(r["rep"])))
    return rows


def _experiment_integrality(spec, timings):
    kinds = [formulations.Kind.LEAF, formulations.Kind.SPLIT, formulations.Kind.PRODUCT]
    revenue_range = spec.get("revenue_range", [1, 100])

    def worker(cell, rep, seed):
        type_name, n, num_trees, leaves = cell
        catalog, forest = _instance_for(
            type_name, n, num_trees, leaves, seed, revenue_range
        )
        row = {}
        try:
            _, z_star = model.brute_force_optimal(catalog, forest)
            z_star = float(z_star)
            row["z_star"] = z_star
            if z_star <= 0:
                row["status"] = "error: Z*=0, gap undefined"
                return row
            for kind in kinds:
                z_lo, _, _ = formulations.solve_relaxation(
                    formulations.build(kind, catalog, forest)
                )
                row[f"z_lo_{kind.value}"] = z_lo
                row[f"gap_{kind.value}"] = max(0.0, 100.0 * (z_lo - z_star) / z_star)
            row["status"] = "ok"
        except DfoptError as exc:
            row["status"] = f"error: {exc}"
        return row

    results = _run_cells(spec, worker)
    keys = ["z_star"]
    for kind in kinds:
        keys += [f"z_lo_{kind.value}", f"gap_{kind.value}"]
    rows = _rows_with_means(results, keys)
    header = ["type", "n", "num_trees", "leaves", "rep", "seed", "status"] + keys
    return "integrality_gap", header, rows


def _experiment_tractability(spec, timings):
    kinds = [formulations.Kind.LEAF, formulations.Kind.SPLIT, formulations.Kind.PRODUCT]
    budget = benders.Budget(
        max_nodes=spec.get("budget_nodes"), max_seconds=spec.get("budget_sec", 60)
    )

    def worker(cell, rep, seed):
        type_name, n, num_trees, leaves = cell
        catalog, forest = _instance_for(type_name, n, num_trees, leaves, seed)
        row = {"status": "ok"}
        for kind in kinds:
            built = formulations.build(kind, catalog, forest)
            t0 = time.monotonic()
            try:
                res = formulations.solve_integer_monolithic(built, catalog, forest, budget)
                row[f"gap_{kind.value}"] = res.gap_pct
                row[f"time_{kind.value}"] = (
                    time.monotonic() - t0 if timings else 0.0
                )
            except DfoptError as exc:
                row["status"] = f"error: {exc}"
        return row

    results = _run_cells(spec, worker)
    keys = []
    for kind in kinds:
        keys += [f"gap_{kind.value}", f"time_{kind.value}"]
    rows = _rows_with_means(results, keys)
    header = ["type", "n", "num_trees", "leaves", "rep", "seed", "status"] + keys
    return "tractability", header, rows


def _experiment_benders(spec, timings):
    """Decomposition vs direct solve vs swap heuristic at fixed cardinality."""
    budget = benders.Budget(
        max_nodes=spec.get("budget_nodes"), max_seconds=spec.get("budget_sec", 60)
    )
    rhos = [float(r) for r in spec.get("rho", [0.2])]

    def worker(cell, rep, seed):
        type_name, n, num_trees, leaves = cell
        catalog, forest = _instance_for(type_name, n, num_trees, leaves, seed)
        rows = {}
        for rho in rhos:
            b = max(1, round(rho * n))
            tag = f"rho{rho:g}"
            t0 = time.monotonic()
            relax = benders.relaxation_phase(
                formulations.Kind.SPLIT, catalog, forest, cardinality=b
            )
            t1 = time.monotonic()
            integer = benders.integer_phase(
                formulations.Kind.SPLIT,
                catalog,
                forest,
                state=relax.state,
                cardinality=b,
                budget=budget,
            )
            t2 = time.monotonic()
            dnc = heuristics.divide_and_conquer(catalog, forest, b, seed=seed)
            t3 = time.monotonic()
            built = formulations.build(
                formulations.Kind.SPLIT, catalog, forest, cardinality=b
            )
            direct = formulations.solve_integer_monolithic(built, catalog, forest, budget)
            t4 = time.monotonic()
            z_lb = integer.value
            z_dnc = float(dnc.value)
            z_direct = direct.value
            rows[f"{tag}_b"] = b
            rows[f"{tag}_z_b_lo"] = relax.value
            rows[f"{tag}_z_b_ub"] = integer.upper_bound
            rows[f"{tag}_z_b_lb"] = z_lb
            rows[f"{tag}_g_b"] = integer.gap_pct
            rows[f"{tag}_z_dnc"] = z_dnc
            rows[f"{tag}_ri_dnc"] = (
                100.0 * (z_lb - z_dnc) / z_dnc if z_dnc > 0 else None
            )
            rows[f"{tag}_z_direct"] = z_direct
            rows[f"{tag}_ri_direct"] = (
                100.0 * (z_lb - z_direct) / z_direct if z_direct > 0 else None
            )
            rows[f"{tag}_nu_direct"] = 0 if direct.optimal else 1
            if timings:
                rows[f"{tag}_t_b_lo"] = t1 - t0
                rows[f"{tag}_t_b_io"] = t2 - t1
                rows[f"{tag}_t_b_total"] = t2 - t0
                rows[f"{tag}_t_dnc"] = t3 - t2
                rows[f"{tag}_t_direct"] = t4 - t3
            else:
                for name in ("t_b_lo", "t_b_io", "t_b_total", "t_dnc", "t_direct"):
                    rows[f"{tag}_{name}"] = 0.0
        return rows

    results = _run_cells(spec, worker)
    keys = []
    for rho in rhos:
        tag = f"rho{rho:g}"
        keys += [
            f"{tag}_{name}"
            for name in (
                "b",
                "z_b_lo",
                "z_b_ub",
                "z_b_lb",
                "g_b",
                "z_dnc",
                "ri_dnc",
                "z_direct",
                "ri_direct",
                "nu_direct",
                "t_b_lo",
                "t_b_io",
                "t_b_total",
                "t_dnc",
                "t_direct",
            )
        ]
    rows = _rows_with_means(results, keys)
    header = ["type", "n", "num_trees", "leaves", "rep", "seed"] + keys
    return "benders", header, rows


def _experiment_heuristics(spec, timings):
    """Integer formulations vs LS / LS10 / ROA against the best upper bound."""
    budget = benders.Budget(
        max_nodes=spec.get("budget_nodes"), max_seconds=spec.get("budget_sec", 60)
    )
    kinds = [formulations.Kind.LEAF, formulations.Kind.SPLIT, formulations.Kind.PRODUCT]

    def worker(cell, rep, seed):
        type_name, n, num_trees, leaves = cell
        catalog, forest = _instance_for(type_name, n, num_trees, leaves, seed)
        values = {}
        uppers = []
        for kind in kinds:
            built = formulations.build(kind, catalog, forest)
            res = formulations.solve_integer_monolithic(built, catalog, forest, budget)
            values[f"z_{kind.value}"] = res.value
            uppers.append(res.upper_bound)
        values["z_ls"] = float(heuristics.local_search(catalog, forest).value)
        values["z_ls10"] = float(heuristics.ls10(catalog, forest, seed=seed).value)
        values["z_roa"] = float(heuristics.revenue_ordered(catalog, forest).value)
        best_ub = min(uppers)
        row = {"z_best_ub": best_ub}
        for key, v in values.items():
            row[key] = v
            gap_key = key.replace("z_", "gbar_")
            row[gap_key] = 100.0 * (best_ub - v) / best_ub if best_ub > 0 else None
        return row

    results = _run_cells(spec, worker)
    keys = ["z_best_ub"]
    for name in ("leaf", "split", "product", "ls", "ls10", "roa"):
        keys += [f"z_{name}", f"gbar_{name}"]
    rows = _rows_with_means(results, keys)
    header = ["type", "n", "num_trees", "leaves", "rep", "seed"] + keys
    return "heuristics", header, rows


EXPERIMENTS = {
    "integrality_gap": _experiment_integrality,
    "tractability": _experiment_tractability,
    "benders": _experiment_benders,
    "heuristics": _experiment_heuristics,
}


def cmd_experiment(args) -> int:
    spec = json.loads(Path(args.spec).read_text())
    name = spec.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {name!r} (choose from {sorted(EXPERIMENTS)})"
        )
    timings = bool(spec.get("timings", True)) and not args.no_timings
    table, header, rows = EXPERIMENTS[name](spec, timings)
    out_dir = Path(args.out or spec.get("out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    schema = f"{SCHEMA_PREFIX}.{table}.v1"
    _write_csv(out_dir / f"{table}.csv", schema, header, rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dfopt",
        description="Assortment optimization under tree-ensemble choice models.",
    )
    parser.add_argument("--verbose", action="store_true", help="log solver progress")
    parser.add_argument(
        "--no-timings",
        action="store_true",
        help="zero all timing fields (byte-identical reruns)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate instance JSON")
    p_gen.add_argument("--config", help="generator config JSON file")
    p_gen.add_argument("--cnf", help="DIMACS 3-CNF file to reduce instead")
    p_gen.add_argument("--out", help="output path (default stdout)")
    p_gen.set_defaults(func=cmd_generate)

    p_solve = sub.add_parser("solve", help="solve one instance")
    p_solve.add_argument("--instance", required=True)
    p_solve.add_argument("--method", required=True)
    p_solve.add_argument("--cardinality", type=int, default=None)
    p_solve.add_argument("--budget-sec", type=float, default=None)
    p_solve.add_argument("--budget-nodes", type=int, default=None)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--out", help="output path (default stdout)")
    p_solve.set_defaults(func=cmd_solve)

    p_exp = sub.add_parser("experiment", help="run an experiment grid")
    p_exp.add_argument("--spec", required=True, help="experiment spec JSON file")
    p_exp.add_argument("--out", help="output directory (overrides spec)")
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, DomainError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
