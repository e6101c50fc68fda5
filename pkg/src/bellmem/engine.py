"""Sequential trial loop with per-purpose random streams.

Each session owns six independent generators spawned from one master seed:
settings A, settings B, emission, hidden value, outcome A, outcome B. Each
stream yields one uniform per use, so a trial's Alice outcome depends only on
her own setting, the hidden value and her outcome stream. That is the
factorization of a local model, enforced by construction.

Settings and emission streams are consumed on every trial. The hidden-value
and outcome streams are consumed only on trials where a pair was emitted.
"""
from __future__ import annotations

import bisect
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .model import (
    BehaviorTable,
    LhvModel,
    MemoryPolicy,
    TrialRecord,
    outcome_pair_index,
    require_valid,
    setting_pair_index,
)

CSV_HEADER = "trial,emitted,sa,sb,oa,ob"

SeedLike = Union[int, np.random.SeedSequence]


@dataclass(frozen=True)
class SettingsDistribution:
    """Independent, possibly biased setting choices.

    P(a) = (1 + eps_a)/2 and P(b) = (1 + eps_b)/2.
    """

    eps_a: float = 0.0
    eps_b: float = 0.0

    def __post_init__(self):
        for name in ("eps_a", "eps_b"):
            v = getattr(self, name)
            if not (np.isfinite(v) and -1.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [-1, 1], got {v!r}")

    @property
    def p_a(self) -> float:
        return (1.0 + self.eps_a) / 2.0

    @property
    def p_b(self) -> float:
        return (1.0 + self.eps_b) / 2.0

    def pair_probs(self) -> np.ndarray:
        """Probability of each setting pair in the order ab, ab', a'b, a'b'."""
        pa = np.array([self.p_a, 1.0 - self.p_a])
        pb = np.array([self.p_b, 1.0 - self.p_b])
        return np.outer(pa, pb).reshape(-1)

    @property
    def unbiased(self) -> bool:
        return self.eps_a == 0.0 and self.eps_b == 0.0


@dataclass(frozen=True)
class SourceModel:
    emit_prob: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.emit_prob) and 0.0 <= self.emit_prob <= 1.0):
            raise ValueError(f"emit_prob must lie in [0, 1], got {self.emit_prob!r}")


STREAM_NAMES = ("settings_a", "settings_b", "emission", "hidden", "outcome_a", "outcome_b")


class RandomnessStreams:
    """Six independent generators derived from one master seed."""

    def __init__(self, seed: SeedLike):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        children = ss.spawn(len(STREAM_NAMES))
        for name, child in zip(STREAM_NAMES, children):
            setattr(self, name, np.random.Generator(np.random.PCG64(child)))

    settings_a: np.random.Generator
    settings_b: np.random.Generator
    emission: np.random.Generator
    hidden: np.random.Generator
    outcome_a: np.random.Generator
    outcome_b: np.random.Generator


def draw_settings(dist: SettingsDistribution, streams: RandomnessStreams, size: int | None = None):
    """Draw setting choices (0 = unprimed, 1 = primed) from the two settings streams.

    Returns ``(sa, sb)``: ints when ``size`` is None, else arrays.
    """
    ua = streams.settings_a.random(size)
    ub = streams.settings_b.random(size)
    if size is None:
        return int(ua >= dist.p_a), int(ub >= dist.p_b)
    return (ua >= dist.p_a).astype(np.int8), (ub >= dist.p_b).astype(np.int8)


class Session(Sequence[TrialRecord]):
    """Column-oriented list of trial records.

    Indexing with an int gives a :class:`TrialRecord`; a slice or boolean
    mask gives another session.
    """

    def __init__(self, trial, emitted, sa, sb, oa, ob, *, validate: bool = True):
        cols = [np.asarray(c) for c in (trial, emitted, sa, sb, oa, ob)]
        n = cols[0].shape[0]
        if any(c.shape != (n,) for c in cols):
            raise ValueError("session columns must be 1-d arrays of equal length")
        self.trial = cols[0].astype(np.int64)
        self.emitted = cols[1].astype(bool)
        self.sa, self.sb, self.oa, self.ob = (c.astype(np.int8) for c in cols[2:])
        for c in (self.trial, self.emitted, self.sa, self.sb, self.oa, self.ob):
            c.setflags(write=False)
        if validate:
            bad = ~self.emitted & ((self.oa != 0) | (self.ob != 0))
            if bad.any():
                i = int(np.argmax(bad))
                raise ValueError(f"trial {int(self.trial[i])}: no emission but outcome is not 00")

    @classmethod
    def empty(cls) -> Session:
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, z, z)

    @classmethod
    def from_records(cls, records: Iterable[TrialRecord]) -> Session:
        if isinstance(records, Session):
            return records
        rows = [(r.index, r.emitted, r.sa, r.sb, r.oa, r.ob) for r in records]
        if not rows:
            return cls.empty()
        cols = np.array(rows, dtype=np.int64).T
        return cls(*cols)

    def __len__(self) -> int:
        return self.trial.shape[0]

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            i = int(key)
            return TrialRecord(
                int(self.trial[i]), bool(self.emitted[i]),
                int(self.sa[i]), int(self.sb[i]), int(self.oa[i]), int(self.ob[i]),
            )
        return Session(
            self.trial[key], self.emitted[key], self.sa[key],
            self.sb[key], self.oa[key], self.ob[key], validate=False,
        )

    def __iter__(self) -> Iterator[TrialRecord]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, Session):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ("trial", "emitted", "sa", "sb", "oa", "ob")
        )

    def __repr__(self):
        return f"Session(n={len(self)}, emitted={int(self.emitted.sum())})"

    def pair_index(self) -> np.ndarray:
        return setting_pair_index(self.sa.astype(np.int64), self.sb.astype(np.int64))

    def outcome_index(self) -> np.ndarray:
        return outcome_pair_index(self.oa.astype(np.int64), self.ob.astype(np.int64))

    # CSV -------------------------------------------------------------------

    def to_csv_text(self) -> str:
        cols = zip(
            self.trial.tolist(), self.emitted.astype(np.int8).tolist(),
            self.sa.tolist(), self.sb.tolist(), self.oa.tolist(), self.ob.tolist(),
        )
        body = "".join(f"{t},{e},{a},{b},{x},{y}\n" for t, e, a, b, x, y in cols)
        return CSV_HEADER + "\n" + body

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text(), newline="\n")

    @classmethod
    def from_csv_text(cls, text: str) -> Session:
        return _parse_csv(text)

    @classmethod
    def from_csv(cls, path: str | Path) -> Session:
        return _parse_csv(Path(path).read_text())


class CsvFormatError(ValueError):
    """Malformed trial-record file; ``row`` is the 1-based data row (header excluded)."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


def _scan_rows(lines: list[str]) -> np.ndarray:
    data = np.empty((len(lines), 6), dtype=np.int64)
    for i, line in enumerate(lines):
        fields = line.split(",")
        if len(fields) != 6:
            raise CsvFormatError(i + 1, f"expected 6 fields, got {len(fields)}")
        try:
            data[i] = [int(f) for f in fields]
        except ValueError:
            raise CsvFormatError(i + 1, f"non-integer field in {line!r}") from None
    return data


def _parse_csv(text: str) -> Session:
    lines = text.splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        raise CsvFormatError(0, f"header must be {CSV_HEADER!r}")
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if not body:
        return Session.empty()
    data = None
    if all(body):
        try:
            data = np.loadtxt(io.StringIO("\n".join(body)), delimiter=",", dtype=np.int64, ndmin=2)
        except ValueError:
            data = None
        if data is not None and data.shape != (len(body), 6):
            data = None
    if data is None:
        data = _scan_rows(body)

    binary = (data[:, 1:] == 0) | (data[:, 1:] == 1)
    if not binary.all():
        i = int(np.argmax(~binary.all(axis=1)))
        raise CsvFormatError(i + 1, "emitted/sa/sb/oa/ob must be 0 or 1")
    bad = (data[:, 1] == 0) & ((data[:, 4] != 0) | (data[:, 5] != 0))
    if bad.any():
        i = int(np.argmax(bad))
        raise CsvFormatError(i + 1, "emitted=0 requires oa=ob=0")
    if len(data) > 1:
        step = np.diff(data[:, 0]) <= 0
        if step.any():
            i = int(np.argmax(step)) + 1
            raise CsvFormatError(i + 1, "trial numbers must increase")
    return Session(*data.T, validate=False)


def filter_detected(records: Iterable[TrialRecord]) -> Session:
    """Keep only trials where at least one wing recorded "+"."""
    s = Session.from_records(records)
    return s[(s.oa == 1) | (s.ob == 1)]


class PolicyError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlaybackStrategy:
    """Samples each emitted trial's outcome pair straight from a table row."""

    table: BehaviorTable
    name: str = "playback"

    def __post_init__(self):
        require_valid(self.table)


Strategy = Union[LhvModel, MemoryPolicy, PlaybackStrategy]


def _pick(cum: np.ndarray, u, last: int):
    return np.minimum(np.searchsorted(cum, u, side="right"), last)


def _cum_weights(model: LhvModel) -> tuple[np.ndarray, int]:
    cum = np.cumsum(model.weights)
    last = int(np.flatnonzero(model.weights > 0)[-1])
    return cum, last


def run_session(
    strategy: Strategy,
    source: SourceModel,
    dist: SettingsDistribution,
    n: int,
    seed: SeedLike,
    settings: tuple[Sequence[int], Sequence[int]] | None = None,
) -> Session:
    """Simulate ``n`` trials and return them as a :class:`Session`.

    Per trial: draw both settings, draw emission, and if a pair was emitted ask
    the strategy for the model in force given the visible history, draw the
    hidden value and then each wing's outcome from its own stream.

    ``settings`` replaces the drawn setting sequences with explicit ``(sa, sb)``
    arrays of length ``n``; every other stream is consumed exactly as usual.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    streams = RandomnessStreams(seed)
    sa, sb = draw_settings(dist, streams, n)
    if settings is not None:
        sa = np.asarray(settings[0], dtype=np.int8)
        sb = np.asarray(settings[1], dtype=np.int8)
        if sa.shape != (n,) or sb.shape != (n,) or not np.isin(sa, (0, 1)).all() or not np.isin(sb, (0, 1)).all():
            raise ValueError("explicit settings must be two 0/1 sequences of length n")
    emitted = streams.emission.random(n) < source.emit_prob
    m = int(emitted.sum())
    u_hidden = streams.hidden.random(m)
    u_a = streams.outcome_a.random(m)
    u_b = streams.outcome_b.random(m)
    trial = np.arange(1, n + 1)
    oa = np.zeros(n, dtype=np.int8)
    ob = np.zeros(n, dtype=np.int8)

    if isinstance(strategy, PlaybackStrategy):
        pair = setting_pair_index(sa[emitted].astype(np.int64), sb[emitted].astype(np.int64))
        cum = np.cumsum(strategy.table.prob, axis=1)
        col = (u_hidden[:, None] >= cum[pair]).sum(axis=1)
        # guard against rounding past the last positive cell
        last = np.array([int(np.flatnonzero(r > 0)[-1]) for r in strategy.table.prob])
        col = np.minimum(col, last[pair])
        oa[emitted] = (col < 2).astype(np.int8)
        ob[emitted] = (col % 2 == 0).astype(np.int8)
        return Session(trial, emitted, sa, sb, oa, ob, validate=False)

    if isinstance(strategy, LhvModel):
        strategy = MemoryPolicy.stationary(strategy)
    if not isinstance(strategy, MemoryPolicy):
        raise TypeError(f"unsupported strategy type {type(strategy).__name__}")
    policy = strategy

    if policy.depth == 0:
        try:
            model = policy.model_for(())
        except (TypeError, ValueError) as exc:
            raise PolicyError(f"trial 1: policy {policy.name!r} produced an invalid model: {exc}") from exc
        cum, last = _cum_weights(model)
        lam = _pick(cum, u_hidden, last)
        ea = sa[emitted].astype(np.int64)
        eb = sb[emitted].astype(np.int64)
        oa[emitted] = u_a < model.resp_a[lam, ea]
        ob[emitted] = u_b < model.resp_b[lam, eb]
        return Session(trial, emitted, sa, sb, oa, ob, validate=False)

    history: list[TrialRecord] = []
    keep = policy.depth
    j = 0
    # plain Python values: per-trial numpy scalar access dominates otherwise
    sa_l, sb_l, em_l = sa.tolist(), sb.tolist(), emitted.tolist()
    uh_l, ua_l, ub_l = u_hidden.tolist(), u_a.tolist(), u_b.tolist()
    oa_l = [0] * n
    ob_l = [0] * n
    cache: dict[int, tuple] = {}
    for i in range(n):
        x, y = sa_l[i], sb_l[i]
        if em_l[i]:
            try:
                model = policy.model_for(history)
            except (TypeError, ValueError) as exc:
                raise PolicyError(
                    f"trial {i + 1}: policy {policy.name!r} produced an invalid model: {exc}"
                ) from exc
            hit = cache.get(id(model))
            if hit is None or hit[0] is not model:
                if len(cache) > 256:
                    cache.clear()
                cum, last = _cum_weights(model)
                hit = (model, cum.tolist(), last, model.resp_a.tolist(), model.resp_b.tolist())
                cache[id(model)] = hit
            _, cum, last, ra, rb = hit
            lam = min(bisect.bisect_right(cum, uh_l[j]), last) if last else 0
            oa_l[i] = int(ua_l[j] < ra[lam][x])
            ob_l[i] = int(ub_l[j] < rb[lam][y])
            j += 1
        history.append(TrialRecord(i + 1, em_l[i], x, y, oa_l[i], ob_l[i]))
        if keep is not None and len(history) > 2 * keep + 64:
            del history[: len(history) - keep]
    oa = np.array(oa_l, dtype=np.int8)
    ob = np.array(ob_l, dtype=np.int8)
    return Session(trial, emitted, sa, sb, oa, ob, validate=False)
