"""Domain datasets: synthetic generation and a tab-separated text format.

File format, one record per line (UTF-8)::

    domain_id <TAB> split <TAB> label <TAB> v1,v2,...,vd

``split`` is one of train/valid/test/unlabeled.  ``label`` is an integer class
index, or -1 for an unlabeled vector; any record with label -1 goes to the
domain's unlabeled pool whatever its split column says.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, ParseError
from .model import LabeledBatch

SPLITS = ("train", "valid", "test", "unlabeled")


@dataclass
class DomainDataset:
    domain_id: str
    train: LabeledBatch
    valid: LabeledBatch
    test: LabeledBatch
    unlabeled: np.ndarray

    @property
    def dim(self) -> int:
        return self.train.inputs.shape[1]

    def __repr__(self) -> str:
        return (
            f"DomainDataset({self.domain_id!r}, dim={self.dim}, train={len(self.train)}, "
            f"valid={len(self.valid)}, test={len(self.test)}, unlabeled={len(self.unlabeled)})"
        )

    def relabeled(self, domain_id: str, flip: bool = False) -> "DomainDataset":
        """Copy under a new id, optionally swapping the two class labels."""

        def maybe_flip(b: LabeledBatch) -> LabeledBatch:
            return LabeledBatch(b.inputs.copy(), 1 - b.labels if flip else b.labels.copy())

        return DomainDataset(domain_id, maybe_flip(self.train), maybe_flip(self.valid), maybe_flip(self.test), self.unlabeled.copy())


# --------------------------------------------------------------------------
# Synthetic domains
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainShape:
    """Parameters of one synthetic domain: ``x = sign(y) * m + offset + R (scales * eps)``."""

    offset: np.ndarray
    rotation: np.ndarray


def _random_rotation(rng: np.random.Generator, dim: int, angle_scale: float) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) / np.sqrt(dim)
    return scipy.linalg.expm(angle_scale * (a - a.T) / 2.0)


def _sample_domain(
    rng: np.random.Generator,
    shape: DomainShape,
    centers: np.ndarray,
    scales: np.ndarray,
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Pick one of the cluster centers per sample; ``centers`` is (C, d) with
    label ``c % 2`` for center ``c``."""
    which = rng.integers(0, centers.shape[0], size=n)
    labels = which % 2
    noise = (rng.normal(size=(n, centers.shape[1])) * scales) @ shape.rotation.T
    return centers[which] + shape.offset + noise, labels


def _make_dataset(rng, domain_id, shape, centers, scales, sizes) -> DomainDataset:
    n_train, n_valid, n_test, n_unlabeled = sizes
    splits = [_sample_domain(rng, shape, centers, scales, n) for n in (n_train, n_valid, n_test, n_unlabeled)]
    return DomainDataset(
        str(domain_id),
        LabeledBatch(*splits[0]),
        LabeledBatch(*splits[1]),
        LabeledBatch(*splits[2]),
        splits[3][0],
    )


def _base_geometry(rng: np.random.Generator, dim: int, class_sep: float, structure: str = "linear"):
    """Cluster centers (label = index % 2) and per-axis noise scales."""
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    scales = np.linspace(0.5, 1.5, dim)
    m = class_sep * direction
    if structure == "linear":
        return np.stack([-m, m]), scales
    if structure == "xor":
        # Second direction orthogonal to the first; label is the XOR of the two signs.
        other = rng.normal(size=dim)
        other -= (other @ direction) * direction
        m2 = class_sep * other / np.linalg.norm(other)
        return np.stack([m + m2, m - m2, -m - m2, -m + m2]), scales
    raise ValueError(f"unknown class structure {structure!r}")


def gen_synthetic(
    num_domains: int = 5,
    dim: int = 16,
    n_train: int = 600,
    n_valid: int = 100,
    n_test: int = 200,
    n_unlabeled: int = 600,
    shift: float = 1.0,
    seed: int = 0,
    class_sep: float = 1.5,
    rotation_scale: float = 1.0,
) -> list[DomainDataset]:
    """Two-class Gaussian domains sharing class means ``+-m``.

    Each domain adds its own offset (``shift * N(0, I)``) and rotates the
    shared anisotropic noise by ``expm(shift * rotation_scale * skew)``.  With
    ``shift=0`` every domain has the same distribution.
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if num_domains < 2:
        raise ValueError("need at least two domains")
    rng = np.random.default_rng(seed)
    centers, scales = _base_geometry(rng, dim, class_sep)
    shapes = [
        DomainShape(shift * rng.normal(size=dim), _random_rotation(rng, dim, shift * rotation_scale))
        for _ in range(num_domains)
    ]
    sizes = (n_train, n_valid, n_test, n_unlabeled)
    return [_make_dataset(rng, f"D{k}", shape, centers, scales, sizes) for k, shape in enumerate(shapes)]


def gen_multisource(
    dim: int = 16,
    n_train: int = 600,
    n_valid: int = 100,
    n_test: int = 200,
    n_unlabeled: int = 600,
    shift: float = 1.0,
    near_shift: float = 0.1,
    seed: int = 0,
    class_sep: float = 1.5,
    neutral: int = 2,
    neutral_shift: float | None = None,
    structure: str = "xor",
) -> tuple[list[DomainDataset], DomainDataset]:
    """Sources of mixed usefulness for one target.

    Returns ``(sources, target)`` where sources are, in order: ``near`` (the
    target's distribution nudged by ``near_shift``), ``adversarial`` (drawn
    like the target with class labels swapped), and ``neutral{i}`` domains
    shifted like :func:`gen_synthetic` domains by ``neutral_shift`` (default
    ``3 * shift``).  The default ``structure="xor"`` places four clusters whose label
    is the XOR of two sign patterns, so the classifier needs sustained
    training on useful sources; ``"linear"`` uses the two-cluster layout of
    :func:`gen_synthetic`.
    """
    if neutral_shift is None:
        neutral_shift = 3.0 * shift
    rng = np.random.default_rng(seed)
    centers, scales = _base_geometry(rng, dim, class_sep, structure)
    sizes = (n_train, n_valid, n_test, n_unlabeled)

    target_shape = DomainShape(shift * rng.normal(size=dim), _random_rotation(rng, dim, shift))
    near_shape = DomainShape(
        target_shape.offset + near_shift * rng.normal(size=dim),
        _random_rotation(rng, dim, near_shift) @ target_shape.rotation,
    )
    target = _make_dataset(rng, "target", target_shape, centers, scales, sizes)
    near = _make_dataset(rng, "near", near_shape, centers, scales, sizes)
    adversarial = _make_dataset(rng, "adversarial", target_shape, centers, scales, sizes).relabeled("adversarial", flip=True)
    sources = [near, adversarial]
    for i in range(neutral):
        shape = DomainShape(neutral_shift * rng.normal(size=dim), _random_rotation(rng, dim, neutral_shift))
        sources.append(_make_dataset(rng, f"neutral{i}", shape, centers, scales, sizes))
    return sources, target


# --------------------------------------------------------------------------
# Text format
# --------------------------------------------------------------------------


def _format_vector(v: np.ndarray) -> str:
    return ",".join(repr(float(x)) for x in v)


def write_embedded(datasets: Sequence[DomainDataset], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ds in datasets:
            if "\t" in ds.domain_id or "\n" in ds.domain_id:
                raise ValueError(f"domain id {ds.domain_id!r} contains a tab or newline")
            for split in ("train", "valid", "test"):
                batch: LabeledBatch = getattr(ds, split)
                for x, y in zip(batch.inputs, batch.labels):
                    fh.write(f"{ds.domain_id}\t{split}\t{int(y)}\t{_format_vector(x)}\n")
            for x in ds.unlabeled:
                fh.write(f"{ds.domain_id}\tunlabeled\t-1\t{_format_vector(x)}\n")


def load_embedded(path: str | Path) -> list[DomainDataset]:
    """Parse the tab-separated format into datasets, in order of first appearance."""
    groups: dict[str, dict[str, list]] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"expected 4 tab-separated fields, got {len(parts)}", lineno)
            domain, split, label_text, vec_text = parts
            if split not in SPLITS:
                raise ParseError(f"unknown split {split!r}", lineno)
            try:
                label = int(label_text)
            except ValueError:
                raise ParseError(f"label {label_text!r} is not an integer", lineno) from None
            if label < -1:
                raise ParseError(f"label {label} is negative", lineno)
            try:
                vec = [float(v) for v in vec_text.split(",")]
            except ValueError:
                raise ParseError("vector has a non-numeric component", lineno) from None
            if not all(np.isfinite(vec)):
                raise ParseError("vector has a non-finite component", lineno)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DimensionMismatch(f"line {lineno}: dimension {len(vec)} differs from {dim}")
            bucket = groups.setdefault(domain, {s: [] for s in SPLITS})
            if label == -1:
                bucket["unlabeled"].append((vec, -1))
            elif split == "unlabeled":
                bucket["unlabeled"].append((vec, -1))
            else:
                bucket[split].append((vec, label))
    if dim is None:
        raise ParseError("file contains no records")

    def labeled(rows) -> LabeledBatch:
        if not rows:
            return LabeledBatch(np.zeros((0, dim)), np.zeros(0, dtype=np.int64))
        return LabeledBatch(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))

    out = []
    for domain, b in groups.items():
        unl = np.array([r[0] for r in b["unlabeled"]]) if b["unlabeled"] else np.zeros((0, dim))
        out.append(DomainDataset(domain, labeled(b["train"]), labeled(b["valid"]), labeled(b["test"]), unl))
    return out
