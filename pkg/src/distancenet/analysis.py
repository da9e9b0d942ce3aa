"""Domain separability statistics over matrices of pairwise domain distances.

A :class:`DistanceMatrix` holds ``M[i, j] = d(probe_s of domain i, probe_t
of domain j)``.  From it we compute

* ``z1``: the fraction of domains whose in-domain distance is no larger than
  any distance in its row or column (higher is better);
* ``z2``: standardize all entries jointly, softmax over all entries jointly,
  and sum the diagonal (lower is better);
* ``mixture_phi``: the lowest ``z2`` reachable by a weighted sum of several
  matrices, and ``informativeness``: how much that optimum degrades when one
  matrix is dropped.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from . import numerics
from .distances import DomainBatch, FldConfig, KernelConfig, Measure, distance
from .errors import DegenerateSpread, DimensionMismatch

PHI_STEPS = 2000
PHI_LEARNING_RATE = 0.05
# Above this many components only the full set and singletons are searched.
MAX_EXHAUSTIVE_COMPONENTS = 10


@dataclass
class DistanceMatrix:
    domain_ids: list
    values: np.ndarray
    measure_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        k = len(self.domain_ids)
        if self.values.shape != (k, k):
            raise DimensionMismatch(f"expected a {k}x{k} matrix, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("distance matrix has non-finite entries")

    @property
    def size(self) -> int:
        return len(self.domain_ids)

    def log_values(self) -> np.ndarray:
        """Natural log of the entries; nonpositive entries are floored at the smallest normal float."""
        return np.log(np.maximum(self.values, np.finfo(np.float64).tiny))

    def to_csv(self, path: str | Path, log: bool = False) -> None:
        values = self.log_values() if log else self.values
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([str(d) for d in self.domain_ids])
            for row in values:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path, measure_id: str = "") -> "DistanceMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        ids = rows[0]
        values = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
        return cls(ids, values, measure_id)


def split_probes(samples, n: int, rng: np.random.Generator, domain_id: Hashable = None) -> tuple[DomainBatch, DomainBatch]:
    """Draw two disjoint probe sets of ``n`` samples each from one domain."""
    x = numerics.as_samples(samples)
    if x.shape[0] < 2 * n:
        n = x.shape[0] // 2
    if n < 1:
        raise ValueError("a domain needs at least two samples to form a probe pair")
    idx = rng.permutation(x.shape[0])
    return DomainBatch(x[idx[:n]], domain_id), DomainBatch(x[idx[n : 2 * n]], domain_id)


def build_distance_matrix(
    probes: Sequence[tuple[DomainBatch, DomainBatch]],
    measure: Measure | str,
    kernel: KernelConfig | None = None,
    fld: FldConfig | None = None,
    domain_ids: Sequence | None = None,
) -> DistanceMatrix:
    """Entry (i, j) is the measure between domain i's first probe and domain j's second."""
    if len(probes) < 2:
        raise ValueError("need at least two domains")
    measure = Measure.parse(measure)
    k = len(probes)
    values = np.empty((k, k))
    for i, (probe_s, _) in enumerate(probes):
        for j, (_, probe_t) in enumerate(probes):
            values[i, j] = distance(measure, probe_s, probe_t, kernel, fld)
    if domain_ids is None:
        domain_ids = [p[0].domain_id if p[0].domain_id is not None else i for i, p in enumerate(probes)]
    return DistanceMatrix(list(domain_ids), values, measure.value)


def _values(m) -> np.ndarray:
    v = m.values if isinstance(m, DistanceMatrix) else np.asarray(m, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {v.shape}")
    return v


def z1(m: DistanceMatrix) -> float:
    v = _values(m)
    k = v.shape[0]
    if k < 2:
        raise ValueError("z1 needs at least two domains")
    hits = 0
    for i in range(k):
        others = np.arange(k) != i
        if np.all(v[i, i] <= v[i, others]) and np.all(v[i, i] <= v[others, i]):
            hits += 1
    return hits / k


def transformed(m: DistanceMatrix) -> np.ndarray:
    """Jointly standardized then softmaxed matrix; entries sum to one."""
    v = _values(m)
    return numerics.softmax(numerics.standardize(v.ravel())).reshape(v.shape)


def z2(m: DistanceMatrix) -> float:
    v = _values(m)
    if v.shape[0] < 2:
        raise ValueError("z2 needs at least two domains")
    return float(np.trace(transformed(v)))


def correlate_with_results(distances: Sequence[float], accuracies: Sequence[float]) -> float:
    """Pearson correlation between per-pair distances and per-pair results."""
    return numerics.pearson(distances, accuracies)


# --------------------------------------------------------------------------
# Mixture optimisation
# --------------------------------------------------------------------------


def _batched_z2(flat: np.ndarray, diag_mask: np.ndarray):
    """z2 and its gradient for each row of ``flat`` (runs x K^2).

    Rows with no spread get value +inf and zero gradient.
    """
    centered = flat - flat.mean(axis=1, keepdims=True)
    sd = np.sqrt(np.mean(centered**2, axis=1, keepdims=True))
    scale = np.max(np.abs(flat), axis=1, keepdims=True)
    ok = (sd > 1e-14 * scale) & (sd > 0)
    safe_sd = np.where(ok, sd, 1.0)
    z = centered / safe_sd
    e = np.exp(z - z.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    value = (p * diag_mask).sum(axis=1, keepdims=True)
    g_z = p * (diag_mask - value)
    g_flat = (
        g_z - g_z.mean(axis=1, keepdims=True) - z * np.mean(g_z * z, axis=1, keepdims=True)
    ) / safe_sd
    value = np.where(ok, value, np.inf)[:, 0]
    g_flat = np.where(ok, g_flat, 0.0)
    return value, g_flat


def _subset_masks(k: int) -> np.ndarray:
    if k > MAX_EXHAUSTIVE_COMPONENTS:
        subsets = [tuple(range(k))] + [(i,) for i in range(k)]
    else:
        subsets = [c for r in range(k, 0, -1) for c in itertools.combinations(range(k), r)]
    masks = np.zeros((len(subsets), k))
    for row, subset in enumerate(subsets):
        masks[row, list(subset)] = 1.0
    return masks


@dataclass
class PhiResult:
    phi: float
    alpha: np.ndarray
    steps: int
    runs: int

    def __iter__(self):
        # Allows ``phi, alpha = mixture_phi(...)``.
        yield self.phi
        yield self.alpha


def mixture_phi(
    matrices: Sequence[DistanceMatrix],
    steps: int = PHI_STEPS,
    learning_rate: float = PHI_LEARNING_RATE,
) -> PhiResult:
    """Lowest z2 of ``sum_k alpha_k M_k`` found by gradient descent on alpha.

    The primary run starts from ``alpha_k = 1/K``.  Runs restricted to every
    nonempty subset of components (started uniform on that subset) are
    carried along in the same batch, so the result for a set of matrices is
    never worse than the result for any of its subsets.  The best iterate of
    any run is returned.
    """
    mats = [_values(m) for m in matrices]
    if not mats:
        raise ValueError("need at least one component matrix")
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise DimensionMismatch("component matrices must share a shape")
    k = len(mats)
    stack = np.stack([m.ravel() for m in mats])  # (K, n^2)
    diag_mask = np.eye(shape[0]).ravel()[None, :]

    masks = _subset_masks(k)
    alpha = masks / masks.sum(axis=1, keepdims=True)
    best_val, _ = _batched_z2(alpha @ stack, diag_mask)
    best_alpha = alpha.copy()
    for _ in range(steps):
        val, g_flat = _batched_z2(alpha @ stack, diag_mask)
        improved = val < best_val
        best_val = np.where(improved, val, best_val)
        best_alpha[improved] = alpha[improved]
        alpha = alpha - learning_rate * (g_flat @ stack.T) * masks
    val, _ = _batched_z2(alpha @ stack, diag_mask)
    improved = val < best_val
    best_val = np.where(improved, val, best_val)
    best_alpha[improved] = alpha[improved]

    winner = int(np.argmin(best_val))
    if not np.isfinite(best_val[winner]):
        raise DegenerateSpread("every coefficient combination collapsed to a constant matrix")
    return PhiResult(float(best_val[winner]), best_alpha[winner].copy(), steps, masks.shape[0])


def informativeness(
    matrices: Sequence[DistanceMatrix],
    component: int,
    steps: int = PHI_STEPS,
    learning_rate: float = PHI_LEARNING_RATE,
) -> float:
    """phi(all components) - phi(all but ``component``); more negative = more informative."""
    if len(matrices) < 2:
        raise ValueError("informativeness needs at least two components")
    rest = [m for i, m in enumerate(matrices) if i != component]
    full = mixture_phi(matrices, steps, learning_rate)
    reduced = mixture_phi(rest, steps, learning_rate)
    return full.phi - reduced.phi


@dataclass
class InformativenessReport:
    measures: list[str]
    scores: dict[str, float]
    full_phi: float
    full_alpha: list[float]
    reduced_alpha: dict[str, list[float]] = field(default_factory=dict)
    reduced_phi: dict[str, float] = field(default_factory=dict)
    steps: int = PHI_STEPS

    def least_informative(self) -> str:
        return min(self.scores, key=lambda name: abs(self.scores[name]))

    def rows(self) -> list[dict]:
        return [
            {"measure": name, "informativeness": self.scores[name], "phi_without": self.reduced_phi[name]}
            for name in self.measures
        ]


def informativeness_report(
    matrices: Sequence[DistanceMatrix],
    names: Sequence[str] | None = None,
    steps: int = PHI_STEPS,
    learning_rate: float = PHI_LEARNING_RATE,
) -> InformativenessReport:
    if len(matrices) < 2:
        raise ValueError("informativeness needs at least two components")
    if names is None:
        names = [m.measure_id or str(i) for i, m in enumerate(matrices)]
    names = list(names)
    full = mixture_phi(matrices, steps, learning_rate)
    scores, reduced_phi, reduced_alpha = {}, {}, {}
    for i, name in enumerate(names):
        reduced = mixture_phi([m for j, m in enumerate(matrices) if j != i], steps, learning_rate)
        scores[name] = full.phi - reduced.phi
        reduced_phi[name] = reduced.phi
        reduced_alpha[name] = reduced.alpha.tolist()
    return InformativenessReport(
        measures=names,
        scores=scores,
        full_phi=full.phi,
        full_alpha=full.alpha.tolist(),
        reduced_alpha=reduced_alpha,
        reduced_phi=reduced_phi,
        steps=steps,
    )


def separability_table(matrices: Sequence[DistanceMatrix]) -> list[dict]:
    rows = []
    for m in matrices:
        try:
            z2_value = z2(m)
        except DegenerateSpread:
            z2_value = math.nan
        rows.append({"measure": m.measure_id, "z1": z1(m), "z2": z2_value})
    return rows
