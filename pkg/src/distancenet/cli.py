"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or configuration, 1 any other failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .bandit import BanditTrace
from .data import gen_multisource, gen_synthetic, load_embedded, write_embedded
from .errors import DistanceNetError
from .experiments import DEFAULT_MEASURES, run_analysis
from .training import ExperimentConfig, RunReport, run_seeds, train_multi, train_single

log = logging.getLogger("distancenet")

# Flags that map straight onto ExperimentConfig fields.
_CONFIG_FLAGS = {
    "seed": int,
    "measure": str,
    "beta": float,
    "bandwidth_mode": str,
    "bandwidth": float,
    "fld_ridge": float,
    "batch_size": int,
    "steps": int,
    "eval_interval": int,
    "round_length": int,
    "learning_rate": float,
    "momentum": float,
    "hidden": int,
    "d_rep": int,
    "head_hidden": int,
    "probe_size": int,
    "num_seeds": int,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    for name, typ in _CONFIG_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    p.add_argument("--masked-domains", default=None, help="comma-separated domain ids whose distance term is zeroed")


def _config(args) -> ExperimentConfig:
    data = {}
    if args.config is not None:
        data.update(json.loads(args.config.read_text(encoding="utf-8")))
    for name in _CONFIG_FLAGS:
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    if args.masked_domains is not None:
        data["masked_domains"] = [d for d in args.masked_domains.split(",") if d]
    return ExperimentConfig.from_dict(data)


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _by_id(datasets, ids):
    table = {ds.domain_id: ds for ds in datasets}
    missing = [i for i in ids if i not in table]
    if missing:
        raise ValueError(f"unknown domain ids {missing}; file has {sorted(table)}")
    return [table[i] for i in ids]


def _write_runs(out: Path, reports: list[RunReport]) -> None:
    for r in reports:
        _write_csv(out / f"history_seed{r.seed}.csv", RunReport.HISTORY_HEADER, r.history_rows())
        if r.trace is not None:
            r.trace.to_csv(out / f"trace_seed{r.seed}.csv")
    rows = [
        [str(r.seed), str(r.best_step), repr(r.best_valid_acc), repr(r.test_acc), repr(r.final_distance)]
        for r in reports
    ]
    _write_csv(out / "summary.csv", ["seed", "best_step", "best_valid_acc", "test_acc", "final_distance"], rows)


def cmd_gen_synth(args) -> None:
    if args.multisource:
        sources, target = gen_multisource(args.dim, args.n_train, args.n_valid, args.n_test, args.n_unlabeled, shift=args.shift, seed=args.seed)
        datasets = [*sources, target]
    else:
        datasets = gen_synthetic(
            args.num_domains, args.dim, args.n_train, args.n_valid, args.n_test, args.n_unlabeled, shift=args.shift, seed=args.seed
        )
    write_embedded(datasets, args.out)
    log.info("wrote %d domains to %s", len(datasets), args.out)


def cmd_analyze(args) -> None:
    cfg = _config(args)
    datasets = load_embedded(args.data)
    if args.domains:
        datasets = _by_id(datasets, args.domains.split(","))
    results = None
    if args.results is not None:
        with open(args.results, newline="", encoding="utf-8") as fh:
            results = {(r["source"], r["target"]): float(r["accuracy"]) for r in csv.DictReader(fh)}
    res = run_analysis(datasets, args.measures.split(","), cfg, args.out, results)
    for row in res.table:
        print(f"{row['measure']}: z1={row['z1']!r} z2={row['z2']!r}")
    if res.informativeness is not None:
        print(f"phi(all)={res.informativeness.full_phi!r}")


def cmd_train_single(args) -> None:
    cfg = _config(args)
    src, tgt = _by_id(load_embedded(args.data), [args.source, args.target])
    summary = run_seeds(lambda c: train_single(src, tgt, c), cfg)
    _write_runs(args.out, summary.reports)
    print(f"test accuracy mean={summary.mean!r} std={summary.std!r}")


def cmd_train_multi(args) -> None:
    cfg = _config(args)
    datasets = load_embedded(args.data)
    sources = _by_id(datasets, args.sources.split(","))
    (tgt,) = _by_id(datasets, [args.target])
    if len(sources) < 2:
        raise ValueError("train-multi needs at least two sources")
    summary = run_seeds(lambda c: train_multi(sources, tgt, c, args.scheduler), cfg)
    _write_runs(args.out, summary.reports)
    print(f"test accuracy mean={summary.mean!r} std={summary.std!r}")


def cmd_bandit_trace(args) -> None:
    trace = BanditTrace.from_csv(args.trace)
    if args.out is not None:
        trace.to_csv(args.out)
    if args.summary is not None:
        counts, q = trace.pull_counts(), trace.final_q()
        _write_csv(args.summary, ["arm", "pulls", "final_q"], [[str(a), str(counts[a]), repr(float(q[a]))] for a in trace.arms])
    if args.out is None and args.summary is None:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(trace.header())
        writer.writerows(trace.rows())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="distancenet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-synth", help="write a synthetic multi-domain dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--num-domains", type=int, default=5)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--n-train", type=int, default=600)
    p.add_argument("--n-valid", type=int, default=100)
    p.add_argument("--n-test", type=int, default=200)
    p.add_argument("--n-unlabeled", type=int, default=600)
    p.add_argument("--shift", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--multisource", action="store_true", help="near/adversarial/neutral sources plus a target")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("analyze", help="distance matrices, z1/z2 and informativeness")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--measures", default=",".join(DEFAULT_MEASURES))
    p.add_argument("--domains", default=None, help="comma-separated subset of domain ids")
    p.add_argument("--results", type=Path, default=None, help="CSV with source,target,accuracy columns")
    _add_config_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train-single", help="train on one source, evaluate on a target")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_single)

    p = sub.add_parser("train-multi", help="bandit-scheduled training over several sources")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--sources", required=True, help="comma-separated source domain ids")
    p.add_argument("--target", required=True)
    p.add_argument("--scheduler", choices=["ucb", "round_robin"], default="ucb")
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_multi)

    p = sub.add_parser("bandit-trace", help="re-export a bandit trace CSV")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--summary", type=Path, default=None, help="per-arm pull counts and final values")
    p.set_defaults(func=cmd_bandit_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (DistanceNetError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
