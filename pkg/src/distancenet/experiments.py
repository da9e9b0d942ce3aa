"""Distance analysis over a set of domains, with CSV reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import (
    DistanceMatrix,
    InformativenessReport,
    build_distance_matrix,
    correlate_with_results,
    informativeness_report,
    separability_table,
    split_probes,
)
from .data import DomainDataset
from .distances import Measure
from .training import ExperimentConfig

DEFAULT_MEASURES = ("L2", "Cosine", "MMD", "FLD", "CORAL")


@dataclass
class AnalysisResult:
    matrices: dict[str, DistanceMatrix]
    table: list[dict]
    informativeness: InformativenessReport | None
    correlations: list[dict]


def _probe_pool(ds: DomainDataset) -> np.ndarray:
    # Probes are drawn from inputs only; labels play no part in domain distances.
    parts = [ds.train.inputs, ds.unlabeled]
    return np.concatenate([p for p in parts if len(p)], axis=0)


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def run_analysis(
    datasets: Sequence[DomainDataset],
    measures: Sequence[str] = DEFAULT_MEASURES,
    cfg: ExperimentConfig | None = None,
    outdir: str | Path | None = None,
    results: dict[tuple[str, str], float] | None = None,
) -> AnalysisResult:
    """Per-measure distance matrices, z1/z2 and informativeness of each measure.

    ``results`` optionally maps (source id, target id) to a transfer accuracy;
    it is correlated against the off-diagonal distances, both as raw accuracy
    and as the drop from the target's in-domain accuracy when that is present.
    """
    if len(datasets) < 2:
        raise ValueError("analysis needs at least two domains")
    cfg = cfg or ExperimentConfig()
    parsed = [Measure.parse(m).value for m in measures]
    if not parsed:
        raise ValueError("need at least one measure")
    # A measure listed twice gets a numbered key so both copies enter the mixture.
    names = [p if parsed[:i].count(p) == 0 else f"{p}_{parsed[:i].count(p) + 1}" for i, p in enumerate(parsed)]
    ids = [ds.domain_id for ds in datasets]
    rng = np.random.default_rng(cfg.seed)
    probes = [split_probes(_probe_pool(ds), cfg.probe_size, rng, ds.domain_id) for ds in datasets]

    matrices = {}
    for name, measure in zip(names, parsed):
        matrices[name] = build_distance_matrix(probes, measure, cfg.kernel, cfg.fld, ids)
        matrices[name].measure_id = name
    table = separability_table(list(matrices.values()))
    report = informativeness_report(list(matrices.values()), names) if len(names) >= 2 else None
    correlations = _correlations(matrices, results) if results else []

    if outdir is not None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        for name, m in matrices.items():
            m.to_csv(out / f"distance_{name}.csv")
            m.to_csv(out / f"log_distance_{name}.csv", log=True)
        _write_rows(out / "separability.csv", ["measure", "z1", "z2"], [[_fmt(r[k]) for k in ("measure", "z1", "z2")] for r in table])
        if report is not None:
            _write_rows(
                out / "informativeness.csv",
                ["measure", "informativeness", "phi_without", "alpha_full"],
                [
                    [name, _fmt(report.scores[name]), _fmt(report.reduced_phi[name]), _fmt(alpha)]
                    for name, alpha in zip(report.measures, report.full_alpha)
                ],
            )
            _write_rows(out / "phi.csv", ["phi_full"], [[_fmt(report.full_phi)]])
        if correlations:
            _write_rows(
                out / "correlation.csv",
                ["measure", "metric", "pearson", "pairs"],
                [[r["measure"], r["metric"], _fmt(r["pearson"]), str(r["pairs"])] for r in correlations],
            )
    return AnalysisResult(matrices, table, report, correlations)


def _correlations(matrices: dict[str, DistanceMatrix], results: dict[tuple[str, str], float]) -> list[dict]:
    rows = []
    for name, m in matrices.items():
        index = {d: i for i, d in enumerate(m.domain_ids)}
        dists, accs, drops = [], [], []
        for (src, tgt), acc in sorted(results.items()):
            if src == tgt or src not in index or tgt not in index:
                continue
            dists.append(m.values[index[src], index[tgt]])
            accs.append(acc)
            if (tgt, tgt) in results:
                drops.append((len(dists) - 1, results[(tgt, tgt)] - acc))
        if len(dists) >= 2:
            rows.append({"measure": name, "metric": "accuracy", "pearson": correlate_with_results(dists, accs), "pairs": len(dists)})
        if len(drops) >= 2 and len(drops) == len(dists):
            rows.append(
                {"measure": name, "metric": "accuracy_drop", "pearson": correlate_with_results(dists, [d for _, d in drops]), "pairs": len(dists)}
            )
    return rows
