"""Inequality values, estimators and the memory-robust p-value.

All quantities share one increment matrix. A trial with setting pair ``p``
and outcome pair ``o`` adds ``INCREMENT[p, o]`` to the count statistic:
-1 for ``(ab, ++)``; +1 for ``(ab', +0)``, ``(a'b, 0+)`` and ``(a'b', ++)``.
Summing the increment matrix against a behavior table gives B exactly.
Summing it against the joint setting/outcome distribution gives the
expected per-trial increment (the drift).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .engine import SettingsDistribution, Session, SourceModel, Strategy, run_session
from .model import (
    ALGEBRA_TOL,
    OUTCOME_PAIRS,
    SETTING_PAIRS,
    BehaviorTable,
    TrialRecord,
    check_no_signaling,
    require_valid,
)

INCREMENT = np.array(
    [
        [-1, 0, 0, 0],  # ab:   -P(++|ab)
        [0, 1, 0, 0],   # ab':  +P(+0|ab')
        [0, 0, 1, 0],   # a'b:  +P(0+|a'b)
        [1, 0, 0, 0],   # a'b': +P(++|a'b')
    ],
    dtype=np.int64,
)

# product of the two outcomes when "+" is +1 and "0" is -1
CORRELATOR_SIGN = np.array([1, -1, -1, 1])
CHSH_SIGN = np.array([1, 1, 1, -1])  # E(ab) + E(ab') + E(a'b) - E(a'b')


def _pair_index(pair) -> int:
    if isinstance(pair, str):
        return SETTING_PAIRS.index(pair)
    return int(pair)


def b_value(table: BehaviorTable) -> float:
    """B = P(+0|ab') + P(0+|a'b) + P(++|a'b') - P(++|ab); local models give B >= 0."""
    require_valid(table)
    return float(np.sum(INCREMENT * table.prob))


def correlator(table: BehaviorTable, pair) -> float:
    """E = P(++) + P(00) - P(+0) - P(0+) for one setting pair."""
    require_valid(table)
    return float(table.prob[_pair_index(pair)] @ CORRELATOR_SIGN)


def chsh_value(table: BehaviorTable) -> float:
    require_valid(table)
    return float(CHSH_SIGN @ (table.prob @ CORRELATOR_SIGN))


class SignalingError(ValueError):
    def __init__(self, deviation: float):
        super().__init__(f"table is signaling: marginal deviation {deviation:.3g}")
        self.deviation = deviation


def check_identity(table: BehaviorTable, tol: float = ALGEBRA_TOL) -> float:
    """Return |S - (2 - 4B)|, which vanishes on every no-signaling table.

    Raises :class:`SignalingError` when the table's marginals depend on the
    remote setting by more than ``tol``.
    """
    deviation = check_no_signaling(table)
    if deviation > tol:
        raise SignalingError(deviation)
    return abs(chsh_value(table) - (2.0 - 4.0 * b_value(table)))


def expected_increment(table: BehaviorTable, dist: SettingsDistribution) -> float:
    """Drift: expected per-trial count increment when ``table`` is in force.

    Equals B/4 for unbiased settings.
    """
    return float(dist.pair_probs() @ np.sum(INCREMENT * table.prob, axis=1))


# counts ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CountsMatrix:
    counts: np.ndarray
    total: int = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (4, 4) or (c < 0).any():
            raise ValueError("counts must be a 4x4 array of non-negative integers")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "total", int(c.sum()))

    def __eq__(self, other):
        return isinstance(other, CountsMatrix) and np.array_equal(self.counts, other.counts)

    def pair_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def frequencies(self) -> np.ndarray:
        """Row-conditional frequencies; raises if a setting pair never occurred."""
        totals = self.pair_totals()
        _require_pairs(totals)
        return self.counts / totals[:, None]


class ZeroPairError(ValueError):
    def __init__(self, pair: str):
        super().__init__(f"setting pair {pair} has no trials; conditional estimate undefined")
        self.pair = pair


def _require_pairs(totals: np.ndarray) -> None:
    for i, t in enumerate(totals):
        if t == 0:
            raise ZeroPairError(SETTING_PAIRS[i])


def counts_from_records(records: Iterable[TrialRecord]) -> CountsMatrix:
    if isinstance(records, Session):
        flat = 4 * records.pair_index() + records.outcome_index()
        return CountsMatrix(np.bincount(flat, minlength=16).reshape(4, 4))
    counts = np.zeros((4, 4), dtype=np.int64)
    for i, r in enumerate(records):
        if not isinstance(r, TrialRecord):
            raise ValueError(f"record {i}: expected TrialRecord, got {type(r).__name__}")
        counts[r.pair, r.outcome] += 1
    return CountsMatrix(counts)


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float


def b_conditional(counts: CountsMatrix) -> Estimate:
    """B from per-setting-pair conditional frequencies; insensitive to setting bias."""
    totals = counts.pair_totals()
    _require_pairs(totals)
    value = 0.0
    var = 0.0
    for row in range(4):
        col = int(np.flatnonzero(INCREMENT[row])[0])
        p = counts.counts[row, col] / totals[row]
        value += INCREMENT[row, col] * p
        var += p * (1 - p) / totals[row]
    return Estimate(float(value), math.sqrt(var))


def chsh_estimate(counts: CountsMatrix) -> Estimate:
    freq = counts.frequencies()
    corr = freq @ CORRELATOR_SIGN
    var = np.sum((1.0 - corr**2) / counts.pair_totals())
    return Estimate(float(CHSH_SIGN @ corr), float(math.sqrt(max(var, 0.0))))


@dataclass(frozen=True)
class CountStatistic:
    """T = sum of per-trial increments over ``n`` trials."""

    t: int
    n: int

    def __post_init__(self):
        if abs(self.t) > self.n:
            raise ValueError(f"|T| = {abs(self.t)} exceeds n = {self.n}")

    @property
    def b_joint4(self) -> float:
        """4T/n: the count statistic scaled to estimate B under unbiased settings."""
        return 4.0 * self.t / self.n if self.n else float("nan")


def increments(records: Iterable[TrialRecord]) -> np.ndarray:
    s = Session.from_records(records)
    return INCREMENT[s.pair_index(), s.outcome_index()]


def t_statistic(records: Iterable[TrialRecord]) -> CountStatistic:
    s = Session.from_records(records)
    return CountStatistic(int(increments(s).sum()), len(s))


def martingale_pvalue(t: int, n: int) -> float:
    """One-sided Azuma-Hoeffding p-value for the hypothesis of nonnegative drift.

    Valid for any increment process bounded in [-1, 1] whose conditional mean
    given the past is >= 0, which covers local models with arbitrary
    two-sided memory under unbiased settings.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if abs(t) > n:
        raise ValueError(f"|T| = {abs(t)} exceeds n = {n}")
    if t >= 0:
        return 1.0
    return min(1.0, math.exp(-(t * t) / (2.0 * n)))


# Monte Carlo -----------------------------------------------------------------

QUANTILES = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)


@dataclass(frozen=True)
class FluctuationSummary:
    reps: int
    n: int
    frac_negative: float
    frac_reject: float
    quantiles: dict[float, float]
    b_joint4: np.ndarray = field(repr=False)
    p_values: np.ndarray = field(repr=False)


def fluctuation_monte_carlo(
    strategy: Strategy,
    dist: SettingsDistribution,
    source: SourceModel,
    n: int,
    reps: int,
    seed,
    alpha: float = 0.05,
) -> FluctuationSummary:
    """Run ``reps`` independent seeded sessions and summarize the count statistic."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    seeds = np.random.SeedSequence(seed).spawn(reps)
    t = np.empty(reps, dtype=np.int64)
    p = np.empty(reps)
    for i, ss in enumerate(seeds):
        stat = t_statistic(run_session(strategy, source, dist, n, ss))
        t[i] = stat.t
        p[i] = martingale_pvalue(stat.t, n)
    b4 = 4.0 * t / n
    return FluctuationSummary(
        reps=reps,
        n=n,
        frac_negative=float(np.mean(t < 0)),
        frac_reject=float(np.mean(p <= alpha)),
        quantiles={q: float(np.quantile(b4, q)) for q in QUANTILES},
        b_joint4=b4,
        p_values=p,
    )


# reports -----------------------------------------------------------------------

REPORT_KEYS = (
    ["n"]
    + [f"counts.{p}.{o}" for p in SETTING_PAIRS for o in OUTCOME_PAIRS]
    + ["b_cond", "b_cond_se", "t", "b_joint4", "p_value", "s_hat", "s_hat_se", "identity_deviation"]
)


def analysis_report(
    records: Iterable[TrialRecord],
    table: BehaviorTable | None = None,
    conditional: bool = True,
) -> dict[str, float | int]:
    """Full analysis of a session as an ordered ``key -> value`` mapping.

    ``conditional=False`` skips the estimators that need every setting pair
    to occur (``b_cond``, ``s_hat``). ``identity_deviation`` is included when a
    model ``table`` is supplied and is no-signaling.
    """
    s = Session.from_records(records)
    counts = counts_from_records(s)
    stat = t_statistic(s)
    out: dict[str, float | int] = {"n": len(s)}
    for i, p in enumerate(SETTING_PAIRS):
        for j, o in enumerate(OUTCOME_PAIRS):
            out[f"counts.{p}.{o}"] = int(counts.counts[i, j])
    if conditional:
        bc = b_conditional(counts)
        out["b_cond"] = bc.value
        out["b_cond_se"] = bc.se
    out["t"] = stat.t
    out["b_joint4"] = stat.b_joint4
    out["p_value"] = martingale_pvalue(stat.t, stat.n) if stat.n else 1.0
    if conditional:
        sh = chsh_estimate(counts)
        out["s_hat"] = sh.value
        out["s_hat_se"] = sh.se
    if table is not None:
        try:
            out["identity_deviation"] = check_identity(table)
        except SignalingError:
            pass
    return out


def _fmt_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def format_report(values: Mapping[str, object]) -> str:
    return "".join(f"{k}={_fmt_value(v) if not isinstance(v, str) else v}\n" for k, v in values.items())


def parse_report(text: str) -> dict[str, object]:
    """Inverse of :func:`format_report`; numbers come back as int or float."""
    out: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value")
        try:
            out[key] = int(raw)
        except ValueError:
            try:
                out[key] = float(raw)
            except ValueError:
                out[key] = raw
    return out
