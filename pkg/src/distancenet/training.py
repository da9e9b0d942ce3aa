"""Single- and multi-source training loops for the distance-regularized classifier."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bandit import BanditTrace, make_scheduler
from .data import DomainDataset
from .distances import DomainBatch, FldConfig, KernelConfig, Measure, MixtureSpec, d_mixture
from .model import LabeledBatch, ModelParams, MomentumSGD, backward, encode, predict

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    seed: int = 0
    measure: str | list = "MMD"
    beta: float = 0.1
    bandwidth_mode: str = "median_heuristic"
    bandwidth: float = 1.0
    fld_ridge: float | None = None
    batch_size: int = 32
    steps: int = 1500
    eval_interval: int = 50
    round_length: int = 50
    masked_domains: list = field(default_factory=list)
    learning_rate: float = 0.05
    momentum: float = 0.9
    hidden: int = 32
    d_rep: int = 32
    head_hidden: int = 16
    probe_size: int = 200
    num_seeds: int = 3

    def __post_init__(self):
        for name in ("batch_size", "steps", "eval_interval", "round_length", "probe_size", "num_seeds"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        self.masked_domains = [str(d) for d in self.masked_domains]
        self.mixture  # validates the measure field

    @property
    def mixture(self) -> MixtureSpec:
        if isinstance(self.measure, str):
            parts = [p for p in self.measure.replace("+", ",").split(",") if p.strip()]
            if len(parts) == 1 and ":" not in parts[0]:
                return MixtureSpec.of(parts[0].strip())
            comps = []
            for p in parts:
                name, _, alpha = p.partition(":")
                comps.append((name.strip(), float(alpha) if alpha else 1.0))
            return MixtureSpec(tuple(comps))
        return MixtureSpec.of([tuple(c) for c in self.measure])

    @property
    def kernel(self) -> KernelConfig:
        return KernelConfig(self.bandwidth, self.bandwidth_mode)

    @property
    def fld(self) -> FldConfig:
        return FldConfig(self.fld_ridge)

    def replace(self, **changes) -> "ExperimentConfig":
        data = asdict(self)
        data.update(changes)
        return ExperimentConfig(**data)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class EvalRecord:
    step: int
    valid_acc: float
    test_acc: float
    total: float
    xe: float
    distance: float
    source: str = ""


@dataclass
class RunReport:
    seed: int
    history: list[EvalRecord]
    best_step: int
    best_valid_acc: float
    test_acc: float
    final_distance: float
    trace: BanditTrace | None = None

    def history_rows(self) -> list[list[str]]:
        return [
            [str(r.step), r.source, repr(r.valid_acc), repr(r.test_acc), repr(r.total), repr(r.xe), repr(r.distance)]
            for r in self.history
        ]

    HISTORY_HEADER = ["step", "source", "valid_acc", "test_acc", "loss_total", "loss_xe", "loss_distance"]


def accuracy(params: ModelParams, batch: LabeledBatch) -> float:
    if len(batch) == 0:
        return math.nan
    return float(np.count_nonzero(predict(params, batch.inputs) == batch.labels) / len(batch))


def _streams(seed: int, n_sources: int) -> tuple[np.random.Generator, np.random.Generator, list[np.random.Generator]]:
    """Independent generators: model init, target sampling, one per source.

    Keeping them separate means the loss (and beta) never changes which
    examples are drawn.
    """
    children = np.random.SeedSequence(seed).spawn(2 + n_sources)
    gens = [np.random.default_rng(c) for c in children]
    return gens[0], gens[1], gens[2:]


def _init_params(cfg: ExperimentConfig, dim: int, n_classes: int, rng) -> ModelParams:
    return ModelParams.init(dim, n_classes, hidden=(cfg.hidden,), d_rep=cfg.d_rep, head_hidden=(cfg.head_hidden,), rng=rng)


def _n_classes(datasets: Sequence[DomainDataset]) -> int:
    top = 1
    for ds in datasets:
        for b in (ds.train, ds.valid, ds.test):
            if len(b):
                top = max(top, int(b.labels.max()))
    return top + 1


def _check_target(tgt: DomainDataset) -> None:
    if len(tgt.unlabeled) == 0:
        raise ValueError(f"target domain {tgt.domain_id!r} has no unlabeled pool")
    if len(tgt.valid) == 0:
        raise ValueError(f"target domain {tgt.domain_id!r} has no validation split")


def measure_distance(params: ModelParams, src: DomainDataset, tgt: DomainDataset, cfg: ExperimentConfig, n: int = 200) -> float:
    """Representation distance between the first ``n`` source-train and target-unlabeled vectors."""
    hs = encode(params, src.train.inputs[:n])
    ht = encode(params, tgt.unlabeled[:n])
    return d_mixture(DomainBatch(hs), DomainBatch(ht), cfg.mixture, cfg.kernel, cfg.fld)


class _Trainer:
    """Shared state for one training run."""

    def __init__(self, cfg: ExperimentConfig, sources: Sequence[DomainDataset], tgt: DomainDataset):
        _check_target(tgt)
        dims = {ds.dim for ds in [*sources, tgt]}
        if len(dims) != 1:
            raise ValueError(f"datasets have different dimensions: {sorted(dims)}")
        self.cfg = cfg
        self.tgt = tgt
        init_rng, self.tgt_rng, self.src_rngs = _streams(cfg.seed, len(sources))
        self.params = _init_params(cfg, tgt.dim, _n_classes([*sources, tgt]), init_rng)
        self.opt = MomentumSGD(cfg.learning_rate, cfg.momentum)
        self.mixture = cfg.mixture
        self.kernel, self.fld = cfg.kernel, cfg.fld
        self.history: list[EvalRecord] = []
        self.best: tuple[float, int, float, ModelParams] | None = None
        self.last_loss = None

    def train_steps(self, src_index: int, src: DomainDataset, steps: int) -> None:
        cfg = self.cfg
        beta = 0.0 if src.domain_id in cfg.masked_domains else cfg.beta
        rng = self.src_rngs[src_index]
        n_src, n_tgt = len(src.train), len(self.tgt.unlabeled)
        for _ in range(steps):
            idx_s = rng.integers(0, n_src, size=cfg.batch_size)
            idx_t = self.tgt_rng.integers(0, n_tgt, size=cfg.batch_size)
            grads, loss = backward(
                self.params, src.train.take(idx_s), self.tgt.unlabeled[idx_t], self.mixture, beta, self.kernel, self.fld
            )
            self.params = self.opt.step(self.params, grads)
            self.last_loss = loss

    def evaluate(self, step: int, source: str) -> float:
        valid = accuracy(self.params, self.tgt.valid)
        test = accuracy(self.params, self.tgt.test)
        loss = self.last_loss
        self.history.append(EvalRecord(step, valid, test, loss.total, loss.xe, loss.distance, source))
        # Strictly better only: ties keep the earlier checkpoint.
        if self.best is None or valid > self.best[0]:
            self.best = (valid, step, test, self.params)
        return valid

    def report(self, src_for_distance: DomainDataset, trace: BanditTrace | None = None) -> RunReport:
        valid, step, test, params = self.best
        final = measure_distance(self.params, src_for_distance, self.tgt, self.cfg)
        return RunReport(self.cfg.seed, self.history, step, valid, test, final, trace)


def train_single(src: DomainDataset, tgt: DomainDataset, cfg: ExperimentConfig) -> RunReport:
    """Train on one labeled source plus unlabeled target; select by target validation accuracy."""
    trainer = _Trainer(cfg, [src], tgt)
    done = 0
    while done < cfg.steps:
        chunk = min(cfg.eval_interval, cfg.steps - done)
        trainer.train_steps(0, src, chunk)
        done += chunk
        trainer.evaluate(done, src.domain_id)
    return trainer.report(src)


def train_multi(
    sources: Sequence[DomainDataset],
    tgt: DomainDataset,
    cfg: ExperimentConfig,
    scheduler: str = "ucb",
) -> RunReport:
    """Rounds of: pick a source, train ``round_length`` steps on it, reward = target validation accuracy."""
    if not sources:
        raise ValueError("need at least one source domain")
    ids = [s.domain_id for s in sources]
    if len(set(ids)) != len(ids):
        raise ValueError("source domain ids must be distinct")
    trainer = _Trainer(cfg, sources, tgt)
    sched = make_scheduler(scheduler, ids)
    trace = BanditTrace(ids)
    rounds = max(1, cfg.steps // cfg.round_length)
    for r in range(rounds):
        arm = sched.select()
        i = ids.index(arm)
        trainer.train_steps(i, sources[i], cfg.round_length)
        reward = trainer.evaluate((r + 1) * cfg.round_length, arm)
        sched.update(arm, reward)
        trace.record(r + 1, arm, reward, sched.state)
    counts = trace.pull_counts()
    favourite = sources[ids.index(max(ids, key=lambda a: counts[a]))]
    return trainer.report(favourite, trace)


@dataclass
class SeedSummary:
    reports: list[RunReport]

    @property
    def test_accs(self) -> list[float]:
        return [r.test_acc for r in self.reports]

    @property
    def mean(self) -> float:
        return float(np.mean(self.test_accs))

    @property
    def std(self) -> float:
        return float(np.std(self.test_accs, ddof=1)) if len(self.reports) > 1 else 0.0


def run_seeds(run: Callable[[ExperimentConfig], RunReport], cfg: ExperimentConfig, seeds: Sequence[int] | None = None) -> SeedSummary:
    if seeds is None:
        seeds = range(cfg.seed, cfg.seed + cfg.num_seeds)
    return SeedSummary([run(cfg.replace(seed=s)) for s in seeds])
