"""Domain distance measures between two batches of representation vectors.

Five measures are provided (L2 and cosine distance between batch means,
squared MMD with a Gaussian kernel, the optimal Fisher criterion, and CORAL),
together with weighted mixtures of them and analytic gradients with respect
to every input vector.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from . import numerics
from .errors import DegenerateMean, DimensionMismatch, InsufficientSamples, SingularMatrix


class Measure(str, enum.Enum):
    L2 = "L2"
    COSINE = "Cosine"
    MMD = "MMD"
    FLD = "FLD"
    CORAL = "CORAL"

    @classmethod
    def parse(cls, value: "Measure | str") -> "Measure":
        if isinstance(value, Measure):
            return value
        key = str(value).strip().lower()
        for m in cls:
            if m.value.lower() == key or m.name.lower() == key:
                return m
        if key in ("cos", "cosine"):
            return cls.COSINE
        if key in ("fisher", "fda"):
            return cls.FLD
        raise ValueError(f"unknown distance measure {value!r}")


class DomainBatch:
    """Samples drawn from one domain, stored as an ``(n, d)`` array.

    The mean is computed once at construction.  The sample array is made
    read-only so a batch can be shared between threads.
    """

    __slots__ = ("samples", "mean", "domain_id")

    def __init__(self, samples, domain_id: Hashable = None):
        arr = numerics.as_samples(samples).copy()
        arr.setflags(write=False)
        mean = arr.mean(axis=0)
        mean.setflags(write=False)
        self.samples = arr
        self.mean = mean
        self.domain_id = domain_id

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"DomainBatch(domain_id={self.domain_id!r}, n={self.n}, dim={self.dim})"


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel ``exp(-|x - x'|^2 / (2 * bandwidth))``.

    With ``bandwidth_mode="median_heuristic"`` the bandwidth is recomputed on
    every call as the median squared pairwise distance of the pooled batches.
    """

    bandwidth: float = 1.0
    bandwidth_mode: str = "median_heuristic"

    def __post_init__(self):
        if self.bandwidth_mode not in ("fixed", "median_heuristic"):
            raise ValueError(f"unknown bandwidth mode {self.bandwidth_mode!r}")
        if self.bandwidth_mode == "fixed" and not self.bandwidth > 0:
            raise ValueError("fixed bandwidth must be positive")

    @classmethod
    def fixed(cls, bandwidth: float) -> "KernelConfig":
        return cls(bandwidth=bandwidth, bandwidth_mode="fixed")


@dataclass(frozen=True)
class FldConfig:
    """Ridge added to the within-class scatter; ``None`` picks a default.

    The default is ``1e-3 * trace(S_W) / d``.
    """

    ridge: float | None = None

    def __post_init__(self):
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


@dataclass(frozen=True)
class MixtureSpec:
    components: tuple[tuple[Measure, float], ...]

    def __post_init__(self):
        comps = tuple((Measure.parse(m), float(a)) for m, a in self.components)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        ids = [m for m, _ in comps]
        if len(set(ids)) != len(ids):
            raise ValueError("mixture measures must be distinct")
        object.__setattr__(self, "components", comps)

    @classmethod
    def of(cls, measure: "Measure | str | MixtureSpec | Sequence", alpha: float = 1.0) -> "MixtureSpec":
        """Normalize a measure name, a (measure, alpha) list, or an existing MixtureSpec."""
        if isinstance(measure, MixtureSpec):
            return measure
        if isinstance(measure, (Measure, str)):
            return cls(((Measure.parse(measure), alpha),))
        return cls(tuple(measure))

    @property
    def measures(self) -> list[Measure]:
        return [m for m, _ in self.components]

    def describe(self) -> str:
        return "+".join(f"{a:g}*{m.value}" for m, a in self.components)


@dataclass(frozen=True)
class DistanceConfig:
    """Bundle of per-measure settings passed around by callers."""

    kernel: KernelConfig = field(default_factory=KernelConfig)
    fld: FldConfig = field(default_factory=FldConfig)


def _check_dims(s: DomainBatch, t: DomainBatch) -> None:
    if s.dim != t.dim:
        raise DimensionMismatch(f"source dimension {s.dim} != target dimension {t.dim}")


def _batch(x) -> DomainBatch:
    return x if isinstance(x, DomainBatch) else DomainBatch(x)


# --------------------------------------------------------------------------
# Individual measures
# --------------------------------------------------------------------------


def d_l2(s: DomainBatch, t: DomainBatch) -> float:
    s, t = _batch(s), _batch(t)
    _check_dims(s, t)
    return float(np.linalg.norm(s.mean - t.mean))


def d_cos(s: DomainBatch, t: DomainBatch) -> float:
    s, t = _batch(s), _batch(t)
    _check_dims(s, t)
    ns, nt = np.linalg.norm(s.mean), np.linalg.norm(t.mean)
    if ns == 0.0 or nt == 0.0:
        raise DegenerateMean("cosine distance is undefined for a zero mean vector")
    sim = float(np.dot(s.mean, t.mean) / (ns * nt))
    return 1.0 - min(1.0, max(-1.0, sim))


def median_bandwidth(s: DomainBatch, t: DomainBatch) -> float:
    """Median squared pairwise distance over the pooled samples."""
    pooled = np.vstack([s.samples, t.samples])
    if pooled.shape[0] < 2:
        return 1.0
    sq = pdist(pooled, "sqeuclidean")
    med = float(np.median(sq))
    # All points coincide: any bandwidth gives the same kernel values.
    return med if med > 0 else 1.0


def resolve_bandwidth(s: DomainBatch, t: DomainBatch, kernel: KernelConfig | None) -> float:
    kernel = kernel or KernelConfig()
    if kernel.bandwidth_mode == "fixed":
        return kernel.bandwidth
    return median_bandwidth(s, t)


def _gauss(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * sigma))


def d_mmd(s: DomainBatch, t: DomainBatch, kernel: KernelConfig | None = None) -> float:
    """Squared MMD with all same-index kernel terms kept (V-statistic form)."""
    s, t = _batch(s), _batch(t)
    _check_dims(s, t)
    sigma = resolve_bandwidth(s, t, kernel)
    kss = _gauss(s.samples, s.samples, sigma).mean()
    kst = _gauss(s.samples, t.samples, sigma).mean()
    ktt = _gauss(t.samples, t.samples, sigma).mean()
    return float(kss - 2.0 * kst + ktt)


def within_scatter(s: DomainBatch, t: DomainBatch) -> np.ndarray:
    cs = s.samples - s.mean
    ct = t.samples - t.mean
    sw = cs.T @ cs + ct.T @ ct
    return 0.5 * (sw + sw.T)


def fld_ridge(sw: np.ndarray, cfg: FldConfig | None) -> float:
    cfg = cfg or FldConfig()
    if cfg.ridge is not None:
        return cfg.ridge
    return 1e-3 * float(np.trace(sw)) / sw.shape[0]


def _fld_solve(s: DomainBatch, t: DomainBatch, cfg: FldConfig | None) -> tuple[np.ndarray, np.ndarray]:
    sw = within_scatter(s, t)
    lam = fld_ridge(sw, cfg)
    delta = s.mean - t.mean
    if not np.any(delta):
        return delta, np.zeros_like(delta)
    try:
        y = numerics.ridge_solve(sw, delta, lam)
    except SingularMatrix as exc:
        raise SingularMatrix(f"within-class scatter is singular (ridge={lam:g}): {exc}") from exc
    return delta, y


def d_fld(s: DomainBatch, t: DomainBatch, cfg: FldConfig | None = None) -> float:
    """Optimal Fisher criterion ``delta^T (S_W + ridge I)^-1 delta``."""
    s, t = _batch(s), _batch(t)
    _check_dims(s, t)
    delta, y = _fld_solve(s, t, cfg)
    return max(0.0, float(delta @ y))


def d_coral(s: DomainBatch, t: DomainBatch) -> float:
    s, t = _batch(s), _batch(t)
    _check_dims(s, t)
    if s.n < 2 or t.n < 2:
        raise InsufficientSamples("CORAL needs at least two samples per batch")
    diff = numerics.covariance(s.samples, "sample") - numerics.covariance(t.samples, "sample")
    return float(np.sum(diff * diff) / (4.0 * s.dim**2))


def distance(
    measure: Measure | str,
    s: DomainBatch,
    t: DomainBatch,
    kernel: KernelConfig | None = None,
    fld: FldConfig | None = None,
) -> float:
    measure = Measure.parse(measure)
    if measure is Measure.L2:
        return d_l2(s, t)
    if measure is Measure.COSINE:
        return d_cos(s, t)
    if measure is Measure.MMD:
        return d_mmd(s, t, kernel)
    if measure is Measure.FLD:
        return d_fld(s, t, fld)
    return d_coral(s, t)


def d_mixture(
    s: DomainBatch,
    t: DomainBatch,
    mixture: MixtureSpec,
    kernel: KernelConfig | None = None,
    fld: FldConfig | None = None,
) -> float:
    s, t = _batch(s), _batch(t)
    mixture = MixtureSpec.of(mixture)
    total = 0.0
    for measure, alpha in mixture.components:
        if alpha == 0.0:
            continue
        total += alpha * distance(measure, s, t, kernel, fld)
    return total


# --------------------------------------------------------------------------
# Gradients with respect to the individual sample vectors
# --------------------------------------------------------------------------


def _grad_l2(s: DomainBatch, t: DomainBatch):
    delta = s.mean - t.mean
    norm = np.linalg.norm(delta)
    # Means equal up to rounding: use the zero subgradient.
    kink = norm <= 1e-12 * (np.linalg.norm(s.mean) + np.linalg.norm(t.mean))
    g = np.zeros_like(delta) if norm == 0 or kink else delta / norm
    return np.tile(g / s.n, (s.n, 1)), np.tile(-g / t.n, (t.n, 1))


def _grad_cos(s: DomainBatch, t: DomainBatch):
    a, b = s.mean, t.mean
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateMean("cosine distance is undefined for a zero mean vector")
    sim = np.dot(a, b) / (na * nb)
    ga = -(b / (na * nb) - sim * a / na**2)
    gb = -(a / (na * nb) - sim * b / nb**2)
    return np.tile(ga / s.n, (s.n, 1)), np.tile(gb / t.n, (t.n, 1))


def _kernel_pull(x: np.ndarray, y: np.ndarray, k: np.ndarray) -> np.ndarray:
    # Row a: sum_j k[a, j] * (x[a] - y[j]).
    return x * k.sum(axis=1, keepdims=True) - k @ y


def _grad_mmd(s: DomainBatch, t: DomainBatch, kernel: KernelConfig | None):
    # A data-dependent bandwidth is held constant when differentiating.
    sigma = resolve_bandwidth(s, t, kernel)
    xs, xt = s.samples, t.samples
    ns, nt = s.n, t.n
    kss = _gauss(xs, xs, sigma)
    kst = _gauss(xs, xt, sigma)
    ktt = _gauss(xt, xt, sigma)
    gs = (-2.0 / (ns * ns * sigma)) * _kernel_pull(xs, xs, kss) + (2.0 / (ns * nt * sigma)) * _kernel_pull(xs, xt, kst)
    gt = (-2.0 / (nt * nt * sigma)) * _kernel_pull(xt, xt, ktt) + (2.0 / (ns * nt * sigma)) * _kernel_pull(xt, xs, kst.T)
    return gs, gt


def _grad_fld(s: DomainBatch, t: DomainBatch, cfg: FldConfig | None):
    # S_W (and the ridge derived from it) are treated as constants.
    _, y = _fld_solve(s, t, cfg)
    return np.tile(2.0 * y / s.n, (s.n, 1)), np.tile(-2.0 * y / t.n, (t.n, 1))


def _grad_coral(s: DomainBatch, t: DomainBatch):
    if s.n < 2 or t.n < 2:
        raise InsufficientSamples("CORAL needs at least two samples per batch")
    d = s.dim
    diff = numerics.covariance(s.samples, "sample") - numerics.covariance(t.samples, "sample")
    g = diff / (2.0 * d * d)
    gs = 2.0 * (s.samples - s.mean) @ g / (s.n - 1)
    gt = -2.0 * (t.samples - t.mean) @ g / (t.n - 1)
    return gs, gt


def grad_distance(
    measure: Measure | str | MixtureSpec,
    s: DomainBatch,
    t: DomainBatch,
    kernel: KernelConfig | None = None,
    fld: FldConfig | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of a distance (or mixture) w.r.t. every sample of both batches.

    Returns arrays shaped like ``s.samples`` and ``t.samples``.  For FLD the
    within-class scatter is frozen at its current value, and a median
    heuristic MMD bandwidth is frozen likewise.
    """
    s, t = _batch(s), _batch(t)
    _check_dims(s, t)
    if isinstance(measure, MixtureSpec) or not isinstance(measure, (Measure, str)):
        gs = np.zeros_like(s.samples)
        gt = np.zeros_like(t.samples)
        for m, alpha in MixtureSpec.of(measure).components:
            if alpha == 0.0:
                continue
            a, b = grad_distance(m, s, t, kernel, fld)
            gs += alpha * a
            gt += alpha * b
        return gs, gt
    measure = Measure.parse(measure)
    if measure is Measure.L2:
        return _grad_l2(s, t)
    if measure is Measure.COSINE:
        return _grad_cos(s, t)
    if measure is Measure.MMD:
        return _grad_mmd(s, t, kernel)
    if measure is Measure.FLD:
        return _grad_fld(s, t, fld)
    return _grad_coral(s, t)
