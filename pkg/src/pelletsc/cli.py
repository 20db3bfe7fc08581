"""Command line: ``pelletsc {gen-instance,solve,benchmark,quality-study}``.

Exit codes: 0 ok, 2 usage, 3 infeasible, 4 limit-terminated, 5 internal error.
Log verbosity comes from the ``PELLETSC_LOG`` environment variable (default WARNING).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
import traceback
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from pelletsc import __version__
from pelletsc.generate import bench9, generate_case, t1_case
from pelletsc.harness import (ALGOS, PARALLEL, QUALITY_COLUMNS, VARIANTS, SolveOptions, UsageError,
                              quality_direction, run_benchmark, run_quality_study, solve_case)
from pelletsc.io import FormatError, load_case, save_case

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_INTERNAL = 0, 2, 3, 4, 5
STATUS_EXIT = {"optimal": EXIT_OK, "feasible": EXIT_OK, "partial": EXIT_OK,
               "infeasible": EXIT_INFEASIBLE, "limit": EXIT_LIMIT}

log = logging.getLogger("pelletsc")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    seeds: list
    version: str = __version__
    python: str = field(default_factory=platform.python_version)
    inputs: dict = field(default_factory=dict)  # path -> sha256
    outputs: list = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str = ""
    exit_code: int | None = None

    def add_input(self, path) -> None:
        self.inputs[str(path)] = file_sha256(path)

    def write(self, out_dir) -> Path:
        self.finished = _now()
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, default=str) + "\n")
        return path


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _dump(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    import numpy as np
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


# -- commands ---------------------------------------------------------------

def cmd_gen_instance(args) -> int:
    out = _out_dir(args.out)
    man = RunManifest("gen-instance", sys.argv[1:], vars_clean(args), [args.seed])
    if args.preset == "bench9":
        cases = bench9(seed=args.seed, n_scenarios=args.scenarios)
    elif args.preset == "t1":
        cases = [t1_case()]
    else:
        sizes = dict(I=args.suppliers, J=args.depots, T=args.periods, B=args.biomass,
                     P=args.pellets, C=args.capacities, R=args.ranges)
        missing = [k for k in ("I", "J", "T") if sizes[k] is None]
        if missing:
            raise UsageError("explicit sizes need --suppliers, --depots and --periods "
                             "(or use --preset)")
        for k, v in sizes.items():
            if v is not None and v < 1:
                raise UsageError(f"|{k}| must be >= 1, got {v}")
        cases = [generate_case(sizes["I"], sizes["J"], sizes["T"], seed=args.seed,
                               n_biomass=sizes["B"] or 2, n_pellets=sizes["P"] or 2,
                               n_capacities=sizes["C"] or 2, n_ranges=sizes["R"] or 3,
                               n_scenarios=args.scenarios, name=args.name or "")]
    for case in cases:
        path = save_case(case, out / f"{case.name}.json")
        man.outputs.append(path.name)
        print(path)
    man.exit_code = EXIT_OK
    man.write(out)
    return EXIT_OK


def _solve_options(args, **over) -> SolveOptions:
    kw = dict(algo=args.algo, parallel=args.parallel, workers=args.workers, seed=args.seed,
              gap_tol=args.gap_tol, time_limit=args.time_limit, iter_limit=args.iter_limit,
              n_scenarios=args.scenarios, replications=args.replications,
              saa_scenarios=args.saa_scenarios, eval_scenarios=args.eval_scenarios,
              executor=args.executor, lp_backend=args.lp_backend)
    kw.update(over)
    return SolveOptions(**kw)


def cmd_solve(args) -> int:
    opts = _solve_options(args)  # validates algo/parallel compatibility first
    case = load_case(args.instance)
    out = _out_dir(args.out)
    man = RunManifest("solve", sys.argv[1:], asdict(opts), [opts.seed])
    man.add_input(args.instance)
    res = solve_case(case, opts)
    sol = res.to_dict()
    sol["instance"] = case.name
    _dump(out / "solution.json", sol)
    man.outputs.append("solution.json")
    if res.trace:
        with open(out / "trace.jsonl", "w") as fh:
            for rec in res.trace:
                fh.write(json.dumps(rec, default=_json_default) + "\n")
        man.outputs.append("trace.jsonl")
    if res.scheduler is not None:
        res.scheduler.write_json(out / "scheduler.json")
        res.scheduler.write_gantt_csv(out / "gantt.csv")
        man.outputs += ["scheduler.json", "gantt.csv"]
    code = STATUS_EXIT.get(res.status, EXIT_INTERNAL)
    if res.residuals is not None and not res.residuals.passed:
        log.error("solution fails residual checks: %s", res.residuals.failing())
        code = EXIT_INTERNAL
    man.exit_code = code
    man.write(out)
    print(json.dumps({"status": res.status, "objective": res.objective, "gap": res.gap,
                      "y": sol["y"], "out": str(out)}))
    return code


def _collect_instances(paths) -> list:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(q for q in p.glob("*.json") if q.name != "manifest.json")
        elif p.exists():
            files.append(p)
        else:
            raise UsageError(f"no such instance file or directory: {p}")
    if not files:
        raise UsageError("no instance files found")
    return files


def _csv_list(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()]


def cmd_benchmark(args) -> int:
    variants = _csv_list(args.variants)
    if not variants:
        raise UsageError("empty variant list")
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise UsageError(f"unknown variant(s) {unknown}; choose from {', '.join(VARIANTS)}")
    try:
        seeds = [int(s) for s in _csv_list(args.seeds)]
    except ValueError:
        raise UsageError("--seeds must be a comma-separated list of integers") from None
    files = _collect_instances(args.instances)
    out = _out_dir(args.out)
    base = _solve_options(args, algo="exact", parallel="none")
    man = RunManifest("benchmark", sys.argv[1:], {"variants": variants, **asdict(base)}, seeds)
    cases = []
    for f in files:
        man.add_input(f)
        cases.append(load_case(f))
    rows, summary = run_benchmark(cases, variants, seeds, out, base)
    _dump(out / "summary.json", summary)
    man.outputs += ["runs.csv", "summary.csv", "summary.json"]
    failed = sum(1 for r in rows if str(r.get("status", "")).startswith("failed"))
    man.exit_code = EXIT_INTERNAL if failed else EXIT_OK
    man.write(out)
    print(json.dumps(summary))
    return man.exit_code


def cmd_quality_study(args) -> int:
    case = load_case(args.instance)
    out = _out_dir(args.out)
    man = RunManifest("quality-study", sys.argv[1:], vars_clean(args), [args.seed])
    man.add_input(args.instance)
    rows = run_quality_study(case, seed=args.seed, n_scenarios=args.scenarios,
                             lp_backend=args.lp_backend)
    with open(out / "quality.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=QUALITY_COLUMNS, extrasaction="ignore")
        wr.writeheader()
        wr.writerows(rows)
    with open(out / "figure1.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["variant", "supply_storage_change_pct", "depot_storage_change_pct",
                     "total_storage_change_pct"])
        for r in rows[1:]:
            wr.writerow([r["variant"], r["storage_supply_delta_pct"], r["storage_depot_delta_pct"],
                         r["storage_delta_pct"]])
    direction = quality_direction(rows)
    _dump(out / "quality.json", {"instance": case.name, "rows": rows, "direction_ok": direction})
    man.outputs += ["quality.csv", "figure1.csv", "quality.json"]
    man.exit_code = EXIT_OK
    man.write(out)
    for r in rows:
        print(f"{r['variant']:<14} depots={r['depots_open']:<3} cost={r['expected_cost']:.2f} "
              f"({r['cost_delta_pct']:+.2f}%) storage={r['storage_total']:.2f} "
              f"({r['storage_delta_pct']:+.2f}%)")
    return EXIT_OK


def vars_clean(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


# -- parser -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_solver_flags(p, algo_default="exact"):
    p.add_argument("--algo", default=algo_default, choices=ALGOS)
    p.add_argument("--parallel", default="none", choices=PARALLEL)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap-tol", type=float, default=None)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--iter-limit", type=int, default=None)
    p.add_argument("--scenarios", type=int, default=6,
                   help="scenario count when the instance file carries none")
    p.add_argument("--replications", type=int, default=10, help="SAA replications M")
    p.add_argument("--saa-scenarios", type=int, default=20, help="scenarios per replication N")
    p.add_argument("--eval-scenarios", type=int, default=200, help="evaluation sample N'")
    p.add_argument("--executor", default="process", choices=("inline", "process"),
                   help="process: real worker pool; inline: serial run, simulated clock")
    p.add_argument("--lp-backend", default="highs", choices=("highs", "simplex"))


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pelletsc", description="Biomass pellet supply-chain design under uncertainty.")
    ap.add_argument("--version", action="version", version=f"pelletsc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-instance", help="write instance + scenario-model JSON files")
    g.add_argument("--preset", choices=("bench9", "t1"), default=None)
    for name in ("suppliers", "depots", "periods", "biomass", "pellets", "capacities", "ranges"):
        g.add_argument(f"--{name}", type=int, default=None)
    g.add_argument("--scenarios", type=int, default=6, help="explicit scenarios to embed (0: none)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--name", default=None)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen_instance)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("instance")
    _add_solver_flags(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("benchmark", help="compare algorithm variants over instances")
    b.add_argument("instances", nargs="+", help="instance files or directories")
    b.add_argument("--variants", default="pha,pha-hr,pha-hr-sb",
                   help=f"comma list from: {', '.join(VARIANTS)}")
    b.add_argument("--seeds", default="0")
    _add_solver_flags(b)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_benchmark)

    q = sub.add_parser("quality-study", help="Base and four +/-30%% biomass quality variants")
    q.add_argument("instance")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--scenarios", type=int, default=6)
    q.add_argument("--lp-backend", default="highs", choices=("highs", "simplex"))
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_quality_study)
    return ap


def _diag(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main(argv=None) -> int:
    level = os.environ.get("PELLETSC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, FormatError) as exc:
        _diag("usage", str(exc))
        return EXIT_USAGE
    except FileNotFoundError as exc:
        _diag("usage", f"file not found: {exc.filename}")
        return EXIT_USAGE
    except Exception as exc:
        if logging.getLogger().isEnabledFor(logging.DEBUG):
            traceback.print_exc()
        _diag("internal", f"{type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
