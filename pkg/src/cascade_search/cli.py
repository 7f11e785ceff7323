"""Command-line surface: build indexes, query, evaluate, simulate costs.

Machine output is one JSON document on stdout; diagnostics go to stderr
as JSON too. Exit codes are stable: 0 success, 2 config/contract error,
3 I/O error, 4 data error. Mutating commands (build, query,
run-experiment) take a lock file in the state directory; read-only
commands (eval, simulate, workload) never mutate state and take no lock.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import costs
from .config import LoadedConfig, load_config
from .engine import LEDGER_FILE, LOCK_FILE, CascadeEngine, CascadeConfig
from .errors import (
    DataError,
    StorageError,
    ValidationError,
)
from .evaluation import (
    GroundTruthPairs,
    RecallReport,
    generate_workload,
    recall_at_k,
    run_experiment,
)
from .tiers import calibrate_costs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DATA = 4


class StateLock:
    """Exclusive lock file guarding mutating commands on one state dir."""

    def __init__(self, state_dir: Path):
        self.path = Path(state_dir) / LOCK_FILE
        self._fd: int | None = None

    def __enter__(self) -> "StateLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StorageError(
                f"state directory is locked ({self.path}); remove the lock "
                "file if no other process is running"
            ) from None
        os.write(self._fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc_info) -> None:
        if self._fd is not None:
            os.close(self._fd)
        self.path.unlink(missing_ok=True)


def _emit(obj: dict) -> None:
    json.dump(obj, sys.stdout)
    sys.stdout.write("\n")


def _config_echo(cascade: CascadeConfig) -> dict:
    return {
        "m": list(cascade.m),
        "costs": list(cascade.costs),
        "f_assumed": cascade.f_assumed,
        "output_k": cascade.output_k,
    }


def _load_truth(args, cfg: LoadedConfig) -> GroundTruthPairs:
    truth_path = Path(args.truth)
    if not truth_path.exists():
        raise DataError(f"ground truth file does not exist: {truth_path}")
    collection = frozenset(int(d) for d in cfg.collection_ids)
    return GroundTruthPairs.from_tsv(truth_path, collection)


def _parse_ks(text: str) -> list[int]:
    try:
        ks = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"--ks must be comma-separated integers, got {text!r}") from None
    if not ks:
        raise ValidationError("--ks is empty")
    return ks


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"{flag} must be comma-separated numbers, got {text!r}") from None


def _write_csv(path: str, report: RecallReport, dataset: str, method: str, speedup) -> None:
    header = "dataset,method," + ",".join(f"R@{k}" for k in report.k_values) + ",speedup"
    Path(path).write_text(header + "\n" + report.to_csv_row(dataset, method, speedup) + "\n")


def cmd_build(args) -> int:
    cfg = load_config(args.config)
    with StateLock(cfg.state_dir):
        engine = CascadeEngine.build(
            cfg.collection_ids, cfg.cascade, cfg.state_dir, force=args.force
        )
    _emit(
        {
            "status": "built",
            "n": engine.n,
            "levels": len(cfg.cascade.tiers),
            "state_dir": str(cfg.state_dir),
        }
    )
    return EXIT_OK


def cmd_query(args) -> int:
    cfg = load_config(args.config)
    with StateLock(cfg.state_dir):
        engine = CascadeEngine.open(cfg.cascade, cfg.state_dir, expected_collection=cfg.collection_ids)
        result = engine.query(args.query, k=args.k)
    _emit(result.to_json())
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    engine = CascadeEngine.open(cfg.cascade, cfg.state_dir, expected_collection=cfg.collection_ids)
    truth = _load_truth(args, cfg)
    ks = _parse_ks(args.ks)
    max_k = max(ks)
    results = {
        caption: engine.evaluate_query(caption, k=max_k).items
        for caption, _ in truth.pairs
    }
    report = recall_at_k(results, truth, ks)
    report = RecallReport(
        k_values=report.k_values,
        recall=report.recall,
        query_count=report.query_count,
        config=_config_echo(cfg.cascade),
    )
    if args.csv:
        method = "cascade" if cfg.cascade.r >= 1 else "no-cascade"
        _write_csv(args.csv, report, args.dataset or cfg.config_path.stem, method, None)
    _emit(report.to_json())
    return EXIT_OK


def cmd_simulate(args) -> int:
    out: dict = {}
    cfg = load_config(args.config) if args.config else None
    if args.calibrate:
        if cfg is None:
            raise ValidationError("--calibrate requires --config for tier sources")
        sample = [int(d) for d in cfg.collection_ids[: args.sample]]
        t = calibrate_costs(cfg.cascade.tiers, sample, repetitions=args.repetitions)
        out["calibrated_t"] = t
    elif args.t:
        t = _parse_floats(args.t, "--t")
    else:
        raise ValidationError("either --t or --calibrate is required")

    m = [int(v) for v in _parse_floats(args.m, "--m")] if args.m else []
    full_m = tuple(m) if len(m) == len(t) - 1 else ()
    try:
        params = costs.CostParams(n=args.n, f=args.f, t=tuple(t), m=full_m)
        out["lifetime_cost"] = costs.lifetime_cost(params)
        out["two_level_speedup"] = (
            costs.two_level_speedup(t[0], t[1], args.f) if len(t) >= 2 else None
        )
        out["query_speedup"] = costs.query_speedup(m, t[1:]) if full_m else None
        if args.target_speedup is not None:
            if len(t) < 3 or not m:
                raise ValidationError(
                    "--target-speedup needs --m with m1 and --t with ts,t1,t2"
                )
            m2 = costs.solve_intermediate_m(m[0], args.target_speedup, t[1], t[2])
            out["m2"] = m2
            out["m2_speedup"] = costs.query_speedup([m[0], m2], [t[1], t[2]])
    except ValidationError as exc:
        if not args.calibrate:
            raise
        # measured timings may violate the strict cost ordering; still
        # report them, but the closed forms are undefined
        out.update(lifetime_cost=None, two_level_speedup=None, query_speedup=None)
        out["warning"] = str(exc)
    out["f_realized"] = None
    if cfg is not None and (cfg.state_dir / LEDGER_FILE).exists():
        engine = CascadeEngine.open(cfg.cascade, cfg.state_dir, expected_collection=cfg.collection_ids)
        out["f_realized"] = costs.estimate_f(engine.ledger)
    _emit(out)
    return EXIT_OK


def cmd_workload(args) -> int:
    cfg = load_config(args.config)
    engine = CascadeEngine.open(cfg.cascade, cfg.state_dir, expected_collection=cfg.collection_ids)
    truth = _load_truth(args, cfg)
    seed = cfg.seed if args.seed is None else args.seed
    workload = generate_workload(
        engine, truth, args.target_f, seed, num_queries=args.count
    )
    Path(args.out).write_text("\n".join(workload.queries) + "\n")
    _emit(
        {
            "f_hat": workload.pilot_f,
            "target_f": workload.target_f,
            "pool_size": len(workload.pool),
            "queries": len(workload.queries),
            "out": args.out,
        }
    )
    return EXIT_OK


def cmd_run_experiment(args) -> int:
    cfg = load_config(args.config)
    workload_path = Path(args.workload)
    if not workload_path.exists():
        raise DataError(f"workload file does not exist: {workload_path}")
    queries = [line for line in workload_path.read_text().splitlines() if line]
    ks = _parse_ks(args.ks)
    with StateLock(cfg.state_dir):
        engine = CascadeEngine.open(cfg.cascade, cfg.state_dir, expected_collection=cfg.collection_ids)
        truth = _load_truth(args, cfg)
        report = run_experiment(engine, truth, queries, ks)
    if args.csv:
        method = "cascade" if cfg.cascade.r >= 1 else "no-cascade"
        _write_csv(
            args.csv,
            report.recall,
            args.dataset or cfg.config_path.stem,
            method,
            report.speedups.get("lifetime_realized"),
        )
    _emit(report.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascade-search",
        description="Tiered retrieval engine: build, query, evaluate, simulate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="encode the collection with tier 0 and persist state")
    p.add_argument("--config", required=True)
    p.add_argument("--force", action="store_true", help="overwrite existing state")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="run one query (mutates caches and ledger)")
    p.add_argument("--config", required=True)
    p.add_argument("--query", required=True, help="query key")
    p.add_argument("--k", type=int, default=None, help="override output size")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="Recall@k over ground truth (read-only)")
    p.add_argument("--config", required=True)
    p.add_argument("--truth", required=True, help="TSV of caption_key, doc_id")
    p.add_argument("--ks", default="1,5,10")
    p.add_argument("--csv", default=None, help="also write a table-layout CSV here")
    p.add_argument("--dataset", default=None, help="dataset label for the CSV row")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="evaluate the cost formulas")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--f", type=float, required=True)
    p.add_argument("--t", default=None, help="comma-separated tier costs, cheapest first")
    p.add_argument("--m", default=None, help="comma-separated candidate budgets")
    p.add_argument("--target-speedup", type=float, default=None, dest="target_speedup")
    p.add_argument("--calibrate", action="store_true", help="measure t from tier timings")
    p.add_argument("--config", default=None)
    p.add_argument("--sample", type=int, default=32, help="calibration sample size")
    p.add_argument("--repetitions", type=int, default=3)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("workload", help="generate a query sequence hitting a target f")
    p.add_argument("--config", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--target-f", type=float, required=True, dest="target_f")
    p.add_argument("--out", required=True, help="query list output path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--count", type=int, default=None)
    p.set_defaults(func=cmd_workload)

    p = sub.add_parser(
        "run-experiment", help="execute a workload, then report recall and costs"
    )
    p.add_argument("--config", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--workload", required=True, help="file with one query key per line")
    p.add_argument("--ks", default="1,5,10")
    p.add_argument("--csv", default=None)
    p.add_argument("--dataset", default=None)
    p.set_defaults(func=cmd_run_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        _fail("config", exc)
        return EXIT_CONFIG
    except (StorageError, OSError) as exc:
        _fail("io", exc)
        return EXIT_IO
    except DataError as exc:
        _fail("data", exc)
        return EXIT_DATA


def _fail(kind: str, exc: Exception) -> None:
    json.dump({"error": kind, "type": type(exc).__name__, "detail": str(exc)}, sys.stderr)
    sys.stderr.write("\n")


if __name__ == "__main__":
    sys.exit(main())
