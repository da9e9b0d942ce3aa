"""UCB1 controller that picks which source domain to train on next."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Sequence

from .errors import UnknownArm


@dataclass
class BanditState:
    """Running-mean reward ``q`` and pull count ``n`` per arm, plus total pulls ``t``."""

    arms: list
    q: list[float] = field(default_factory=list)
    n: list[int] = field(default_factory=list)
    t: int = 0

    def __post_init__(self):
        self.arms = list(self.arms)
        if not self.arms:
            raise ValueError("a bandit needs at least one arm")
        if len(set(self.arms)) != len(self.arms):
            raise ValueError("arm ids must be distinct")
        if not self.q:
            self.q = [0.0] * len(self.arms)
        if not self.n:
            self.n = [0] * len(self.arms)
        if self.t != sum(self.n):
            raise ValueError("t must equal the total pull count")

    def index(self, arm: Hashable) -> int:
        try:
            return self.arms.index(arm)
        except ValueError:
            raise UnknownArm(f"unknown arm {arm!r}") from None

    def bonus(self, i: int) -> float:
        if self.n[i] == 0:
            return math.inf
        return math.sqrt(2.0 * math.log(self.t) / self.n[i])

    def scores(self) -> list[float]:
        """Upper confidence bound of every arm (``inf`` for unpulled arms)."""
        return [self.q[i] + self.bonus(i) for i in range(len(self.arms))]

    def select(self) -> Hashable:
        for i, count in enumerate(self.n):
            if count == 0:
                return self.arms[i]
        scores = self.scores()
        best = max(range(len(scores)), key=lambda i: (scores[i], -i))
        return self.arms[best]

    def update(self, arm: Hashable, reward: float) -> "BanditState":
        i = self.index(arm)
        self.n[i] += 1
        self.t += 1
        self.q[i] += (float(reward) - self.q[i]) / self.n[i]
        return self


def select(state: BanditState) -> Hashable:
    return state.select()


def update(state: BanditState, arm: Hashable, reward: float) -> BanditState:
    return state.update(arm, reward)


class RoundRobin:
    """Cycles through the arms in order; ignores rewards."""

    def __init__(self, arms: Sequence):
        self.state = BanditState(list(arms))
        self._next = 0

    def select(self) -> Hashable:
        arm = self.state.arms[self._next]
        self._next = (self._next + 1) % len(self.state.arms)
        return arm

    def update(self, arm: Hashable, reward: float) -> None:
        # Values are still tracked so traces are comparable with UCB runs.
        self.state.update(arm, reward)


class UCB:
    def __init__(self, arms: Sequence):
        self.state = BanditState(list(arms))

    def select(self) -> Hashable:
        return self.state.select()

    def update(self, arm: Hashable, reward: float) -> None:
        self.state.update(arm, reward)


def make_scheduler(kind: str, arms: Sequence):
    if kind == "ucb":
        return UCB(arms)
    if kind in ("round_robin", "round-robin", "rr"):
        return RoundRobin(arms)
    raise ValueError(f"unknown scheduler {kind!r}")


@dataclass
class TraceRecord:
    round: int
    arm: Hashable
    reward: float
    values: list[float]
    q: list[float]


@dataclass
class BanditTrace:
    """One record per round: chosen arm, reward, then every arm's UCB value and
    running mean after that round's update."""

    arms: list
    records: list[TraceRecord] = field(default_factory=list)

    def record(self, round_: int, arm, reward: float, state: BanditState) -> None:
        self.records.append(TraceRecord(round_, arm, float(reward), state.scores(), list(state.q)))

    def header(self) -> list[str]:
        return [
            "round",
            "arm",
            "reward",
            *[f"value_{a}" for a in self.arms],
            *[f"q_{a}" for a in self.arms],
        ]

    def rows(self) -> list[list[str]]:
        return [
            [str(r.round), str(r.arm), repr(r.reward), *[repr(float(v)) for v in (*r.values, *r.q)]]
            for r in self.records
        ]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            writer.writerows(self.rows())

    @classmethod
    def from_csv(cls, path: str | Path) -> "BanditTrace":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        arms = [h[len("value_") :] for h in rows[0] if h.startswith("value_")]
        k = len(arms)
        trace = cls(arms)
        for row in rows[1:]:
            nums = [float(v) for v in row[3:]]
            trace.records.append(TraceRecord(int(row[0]), row[1], float(row[2]), nums[:k], nums[k:]))
        return trace

    def final_q(self) -> dict:
        if not self.records:
            return {a: 0.0 for a in self.arms}
        return dict(zip(self.arms, self.records[-1].q))

    def pull_counts(self) -> dict:
        counts = {a: 0 for a in self.arms}
        for r in self.records:
            counts[r.arm] = counts.get(r.arm, 0) + 1
        return counts
