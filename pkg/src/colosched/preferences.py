"""Preference matrix over job groups: softmax selection and the
reinforcement update applied after co-located jobs complete."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .workload import ResourceProfile

SOFTMAX_AXES = ("paper", "row")
UPDATE_MODES = ("increment", "assign")


@dataclass(frozen=True)
class GoodnessSample:
    """Co-location goodness observed on one node over one measurement window.

    groups_on_node carries one entry per resident job (a multiset), so the
    update rule can tell a lone group member apart from two jobs of the same
    group sharing the node.
    """

    node_id: int
    groups_on_node: tuple[int, ...]
    goodness: float
    window: tuple[float, float]

    def __post_init__(self):
        if not self.groups_on_node:
            raise ValueError("groups_on_node must be non-empty")
        start, end = self.window
        if not start < end:
            raise ValueError(f"degenerate window {self.window}")


def colocation_goodness(node_usage: ResourceProfile, beta: float) -> float:
    """Scalar score of how well the jobs on a node share it.

    Mean utilization of the four capacity resources minus beta times the
    interference proxy (iowait). Higher is better; range [-beta, 1].
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    util = (node_usage.cpu + node_usage.mem + node_usage.disk + node_usage.net) / 4.0
    return util - beta * node_usage.iowait


class PreferenceMatrix:
    """k x k matrix H; H[e][g] is group e's preference for co-locating group g.

    softmax_axis selects the normalization of the pick probability:
    "paper" normalizes over the first index (column-wise, the literal
    formula), "row" over the second. update_mode "increment" treats the
    update rule as H += delta; "assign" applies it literally as H = delta.
    """

    def __init__(
        self,
        k: int,
        alpha: float = 0.1,
        softmax_axis: str = "paper",
        update_mode: str = "increment",
        h: Sequence[Sequence[float]] | None = None,
    ):
        if k < 1:
            raise ValueError("k must be >= 1")
        if alpha <= 0:
            raise ValueError("alpha must be > 0")
        if softmax_axis not in SOFTMAX_AXES:
            raise ValueError(f"softmax_axis must be one of {SOFTMAX_AXES}")
        if update_mode not in UPDATE_MODES:
            raise ValueError(f"update_mode must be one of {UPDATE_MODES}")
        self.k = k
        self.alpha = alpha
        self.softmax_axis = softmax_axis
        self.update_mode = update_mode
        if h is None:
            self.h = [[0.0] * k for _ in range(k)]
        else:
            if len(h) != k or any(len(row) != k for row in h):
                raise ValueError(f"h must be {k}x{k}")
            self.h = [[float(v) for v in row] for row in h]
            self._check_finite()

    def _check_finite(self) -> None:
        for row in self.h:
            for v in row:
                if not math.isfinite(v):
                    raise ArithmeticError("preference matrix contains non-finite entries")

    def copy(self) -> "PreferenceMatrix":
        return PreferenceMatrix(
            self.k, self.alpha, self.softmax_axis, self.update_mode, h=self.h
        )

    def pick_probability(self, e: int, g: int) -> float:
        """Softmax probability of picking group g next to a running group e.

        Max-shifted before exponentiation, so large preferences cannot
        overflow.
        """
        h = self.h
        if self.softmax_axis == "paper":
            values = [h[b][g] for b in range(self.k)]
            numerator = h[e][g]
        else:
            values = h[e]
            numerator = h[e][g]
        m = max(values)
        return math.exp(numerator - m) / math.fsum(math.exp(v - m) for v in values)

    def selection_distribution(
        self, running_groups: Iterable[int], queued_groups: Iterable[int]
    ) -> dict[int, float]:
        """Probability of scheduling each queued group next.

        running_groups is a multiset (one entry per running job); with an
        idle cluster the distribution falls back to uniform over the queued
        groups.
        """
        q = sorted(set(queued_groups))
        if not q:
            raise ValueError("queued_groups must be non-empty")
        for g in q:
            if not 0 <= g < self.k:
                raise ValueError(f"queued group {g} outside [0, {self.k})")
        c = list(running_groups)
        for e in c:
            if not 0 <= e < self.k:
                raise ValueError(f"running group {e} outside [0, {self.k})")
        if not c:
            uniform = 1.0 / len(q)
            return {g: uniform for g in q}
        numerators = dict.fromkeys(q, 0.0)
        for e in c:
            pis = {i: self.pick_probability(e, i) for i in q}
            norm = math.fsum(pis.values())
            for g in q:
                numerators[g] += pis[g] / norm
        denominator = math.fsum(numerators.values())
        return {g: numerators[g] / denominator for g in q}

    def update_preferences(self, samples: Iterable[GoodnessSample]) -> "PreferenceMatrix":
        """Apply the preference update for a batch of node samples.

        For each node and each ordered pair of groups (i, j) resident on it,
        the entry change is
            alpha * (R_n - Rbar_i) * (1 - pi_i(j))
            - sum over other resident groups a of alpha * (R_n - Rbar_i) * pi_i(a)
        where Rbar_i is the mean goodness over the batch's nodes that contain
        group i. A diagonal pair (i, i) participates only when at least two
        jobs of group i share the node. All pick probabilities are evaluated
        against the matrix as it stood at the start of the batch.
        """
        batch = list(samples)
        if not batch:
            return self
        for s in batch:
            for g in s.groups_on_node:
                if not 0 <= g < self.k:
                    raise ValueError(f"sample group {g} outside [0, {self.k})")

        rbar: dict[int, float] = {}
        for s in batch:
            for g in set(s.groups_on_node):
                rbar.setdefault(g, 0.0)
        for g in rbar:
            rewards = [s.goodness for s in batch if g in s.groups_on_node]
            rbar[g] = math.fsum(rewards) / len(rewards)

        changes: list[tuple[int, int, float]] = []
        for s in batch:
            counts = Counter(s.groups_on_node)
            members = sorted(counts)
            for i in members:
                advantage = self.alpha * (s.goodness - rbar[i])
                for j in members:
                    if i == j and counts[i] < 2:
                        continue
                    others = [a for a in members if a != i and a != j]
                    delta = advantage * (1.0 - self.pick_probability(i, j))
                    delta -= math.fsum(
                        advantage * self.pick_probability(i, a) for a in others
                    )
                    changes.append((i, j, delta))

        if self.update_mode == "increment":
            accum = [[0.0] * self.k for _ in range(self.k)]
            for i, j, delta in changes:
                accum[i][j] += delta
            for i in range(self.k):
                for j in range(self.k):
                    self.h[i][j] += accum[i][j]
        else:
            for i, j, delta in changes:
                self.h[i][j] = delta
        self._check_finite()
        return self

    def save(self, path) -> None:
        """Serialize as JSON: k, alpha, row-major entries."""
        payload = {"k": self.k, "alpha": self.alpha, "h": self.h}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(
        cls, path, softmax_axis: str = "paper", update_mode: str = "increment"
    ) -> "PreferenceMatrix":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            k=int(payload["k"]),
            alpha=float(payload["alpha"]),
            softmax_axis=softmax_axis,
            update_mode=update_mode,
            h=payload["h"],
        )
