"""Adversarial search over memory policies.

A policy assigns a local model to every history class. Its score is the
smallest analytic drift (expected count increment per trial) over all
classes, i.e. the most negative push the adversary can apply in any
situation. Drifts are computed exactly from behavior tables; nothing here
simulates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import SettingsDistribution
from .model import LhvModel, behavior_from_lhv
from .statistics import expected_increment
from .strategies import (
    DeterministicAssignment,
    TablePolicySpec,
    all_assignments,
    class_count,
    history_classes,
    make_deterministic,
)

DEFAULT_CAP = 2**20


class SearchSpaceError(ValueError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"search space has {size} policy tables, cap is {cap}")
        self.size = size
        self.cap = cap


@dataclass(frozen=True)
class SearchResult:
    spec: TablePolicySpec
    best_drift: float
    evaluations: int
    depth: int
    coarse: str
    optimal_count: int | None = None
    restart_drifts: np.ndarray | None = field(default=None, repr=False)

    def report(self) -> dict[str, object]:
        out: dict[str, object] = {"best_drift": self.best_drift}
        if self.optimal_count is not None:
            out["optimal_count"] = self.optimal_count
        out["depth"] = self.depth
        out["evaluations"] = self.evaluations
        return out


def enumerate_assignments() -> list[tuple[DeterministicAssignment, float]]:
    """All 16 deterministic assignments with their exact B values."""
    from .statistics import b_value

    return [(a, b_value(behavior_from_lhv(make_deterministic(a)))) for a in all_assignments()]


def assignment_drifts(dist: SettingsDistribution) -> np.ndarray:
    return np.array(
        [expected_increment(behavior_from_lhv(make_deterministic(a)), dist) for a in all_assignments()]
    )


def exhaustive_policy_search(
    depth: int,
    dist: SettingsDistribution,
    coarse: str = "outcome",
    cap: int = DEFAULT_CAP,
    classwise: bool = False,
) -> SearchResult:
    """Minimize the worst-class drift over every deterministic policy table.

    With ``classwise=True`` the separable objective is minimized per class
    (16 evaluations per class) and the count of optimal tables is computed
    combinatorially, so the table-count cap does not apply.
    Ties go to the lexicographically smallest policy encoding.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    drifts = assignment_drifts(dist)
    assignments = all_assignments()
    k = class_count(depth, coarse)
    keys = history_classes(depth, coarse)
    n_assign = len(assignments)

    if classwise:
        best = float(drifts.min())
        m = int(np.sum(drifts == best))
        choice = [0] * k
        if drifts[0] != best:
            choice[-1] = int(np.flatnonzero(drifts == best)[0])
        optimal = n_assign**k - (n_assign - m) ** k
        evaluations = n_assign * k
    else:
        size = n_assign**k
        if size > cap:
            raise SearchSpaceError(size, cap)
        grid = np.indices((n_assign,) * k).reshape(k, -1).T
        score = drifts[grid].min(axis=1) if k else np.full(1, drifts.min())
        best = float(score.min())
        winner = int(np.argmin(score))
        choice = [int(c) for c in grid[winner]]
        optimal = int(np.sum(score == best))
        evaluations = size
    mapping = {key: assignments[c] for key, c in zip(keys, choice)}
    return SearchResult(
        spec=TablePolicySpec.from_class_map(depth, mapping, coarse),
        best_drift=best,
        evaluations=evaluations,
        depth=depth,
        coarse=coarse,
        optimal_count=optimal,
    )


def _class_drifts(w, ra, rb, pair_probs) -> np.ndarray:
    """Drift of each class's mixture; arrays have shape (classes, k[, 2])."""
    terms = np.stack(
        [
            -np.sum(w * ra[..., 0] * rb[..., 0], axis=-1),          # ab, ++
            np.sum(w * ra[..., 0] * (1 - rb[..., 1]), axis=-1),     # ab', +0
            np.sum(w * (1 - ra[..., 1]) * rb[..., 0], axis=-1),     # a'b, 0+
            np.sum(w * ra[..., 1] * rb[..., 1], axis=-1),           # a'b', ++
        ],
        axis=-1,
    )
    return terms @ pair_probs


def _propose(rng, w, ra, rb, step):
    w, ra, rb = w.copy(), ra.copy(), rb.copy()
    c = rng.integers(w.shape[0])
    move = rng.random()
    if move < 0.15:
        j = rng.integers(w.shape[1])
        ra[c, j] = np.round(ra[c, j])
        rb[c, j] = np.round(rb[c, j])
    elif move < 0.25:
        i, j = rng.integers(w.shape[1], size=2)
        ra[c, j] = ra[c, i]
        rb[c, j] = rb[c, i]
    elif move < 0.4:
        w[c] *= np.exp(rng.normal(0.0, step, size=w.shape[1]))
        w[c] /= w[c].sum()
    else:
        ra[c] = np.clip(ra[c] + rng.normal(0.0, step, size=ra[c].shape), 0.0, 1.0)
        rb[c] = np.clip(rb[c] + rng.normal(0.0, step, size=rb[c].shape), 0.0, 1.0)
    return w, ra, rb


def hill_climb_policy(
    depth: int,
    iters: int,
    restarts: int,
    seed,
    dist: SettingsDistribution,
    coarse: str = "outcome",
    components: int = 2,
    step: float = 0.3,
) -> SearchResult:
    """Stochastic local search over mixture-valued policies.

    Every class holds a ``components``-term local model. Each restart starts
    from a random policy; each of the remaining ``iters - 1`` iterations
    perturbs one class and keeps the move if the worst-class drift does not
    increase. Deterministic given ``seed``.
    """
    if iters < 1 or restarts < 1:
        raise ValueError("iters and restarts must be >= 1")
    rng = np.random.default_rng(seed)
    pp = dist.pair_probs()
    k = class_count(depth, coarse)
    best = None
    drifts_per_restart = np.empty(restarts)
    for r in range(restarts):
        w = rng.exponential(size=(k, components))
        w /= w.sum(axis=1, keepdims=True)
        ra = rng.uniform(size=(k, components, 2))
        rb = rng.uniform(size=(k, components, 2))
        score = float(_class_drifts(w, ra, rb, pp).min())
        for _ in range(iters - 1):
            w2, ra2, rb2 = _propose(rng, w, ra, rb, step)
            s2 = float(_class_drifts(w2, ra2, rb2, pp).min())
            if s2 <= score:
                w, ra, rb, score = w2, ra2, rb2, s2
        drifts_per_restart[r] = score
        if best is None or score < best[0]:
            best = (score, w, ra, rb)

    score, w, ra, rb = best
    keys = history_classes(depth, coarse)
    mapping = {
        key: LhvModel(weights=w[i] / w[i].sum(), resp_a=ra[i], resp_b=rb[i])
        for i, key in enumerate(keys)
    }
    return SearchResult(
        spec=TablePolicySpec.from_class_map(depth, mapping, coarse),
        best_drift=score,
        evaluations=restarts * iters,
        depth=depth,
        coarse=coarse,
        restart_drifts=drifts_per_restart,
    )
