"""Settings, outcomes, behavior tables and local hidden-variable models.

Every table in this package uses one fixed enumeration order:

* setting pairs (rows):    ``ab, ab', a'b, a'b'``
* outcome pairs (columns): ``++, +0, 0+, 00``

A setting choice is encoded as 0 for the unprimed setting (a or b) and 1 for
the primed one. An outcome is 1 for a detection ("+") and 0 otherwise.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

SETTING_PAIRS = ("ab", "ab'", "a'b", "a'b'")
OUTCOME_PAIRS = ("++", "+0", "0+", "00")
ALICE_SETTINGS = ("a", "a'")
BOB_SETTINGS = ("b", "b'")

ALGEBRA_TOL = 1e-12


class Wing(enum.Enum):
    ALICE = "A"
    BOB = "B"


class Outcome(enum.IntEnum):
    NONE = 0
    DETECT = 1

    @property
    def symbol(self) -> str:
        return "+" if self is Outcome.DETECT else "0"


@dataclass(frozen=True)
class Setting:
    wing: Wing
    choice: int

    def __post_init__(self):
        if self.choice not in (0, 1):
            raise ValueError(f"setting choice must be 0 or 1, got {self.choice!r}")

    @property
    def label(self) -> str:
        names = ALICE_SETTINGS if self.wing is Wing.ALICE else BOB_SETTINGS
        return names[self.choice]


def setting_pair_index(sa: int, sb: int) -> int:
    return 2 * sa + sb


def outcome_pair_index(oa: int, ob: int) -> int:
    return 2 * (1 - oa) + (1 - ob)


@dataclass(frozen=True)
class TrialRecord:
    """One completed trial: emission flag, both settings, both outcomes."""

    index: int
    emitted: bool
    sa: int
    sb: int
    oa: int
    ob: int

    def __post_init__(self):
        for name in ("sa", "sb", "oa", "ob"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"trial {self.index}: {name} must be 0 or 1")
        if not self.emitted and (self.oa or self.ob):
            raise ValueError(f"trial {self.index}: no emission but outcome is not 00")

    @property
    def pair(self) -> int:
        return setting_pair_index(self.sa, self.sb)

    @property
    def outcome(self) -> int:
        return outcome_pair_index(self.oa, self.ob)


History = Sequence[TrialRecord]


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BehaviorTable:
    """Conditional joint outcome probabilities ``prob[setting_pair, outcome_pair]``."""

    prob: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.prob)
        if arr.shape != (4, 4):
            raise ValueError(f"behavior table must be 4x4, got shape {arr.shape}")
        object.__setattr__(self, "prob", arr)

    def __getitem__(self, key: tuple[str, str]) -> float:
        pair, outcome = key
        return float(self.prob[SETTING_PAIRS.index(pair), OUTCOME_PAIRS.index(outcome)])

    def __eq__(self, other):
        if not isinstance(other, BehaviorTable):
            return NotImplemented
        return bool(np.array_equal(self.prob, other.prob))

    def allclose(self, other: BehaviorTable, tol: float = ALGEBRA_TOL) -> bool:
        return bool(np.max(np.abs(self.prob - other.prob)) <= tol)

    @classmethod
    def uniform(cls) -> BehaviorTable:
        return cls(np.full((4, 4), 0.25))

    @classmethod
    def from_rows(cls, rows: Mapping[str, Mapping[str, float]]) -> BehaviorTable:
        """Build a table from ``{pair: {outcome: p}}``; omitted cells are zero."""
        prob = np.zeros((4, 4))
        for pair, row in rows.items():
            for outcome, p in row.items():
                prob[SETTING_PAIRS.index(pair), OUTCOME_PAIRS.index(outcome)] = p
        return cls(prob)

    def alice_marginals(self) -> np.ndarray:
        """P(Alice "+" | setting pair), one entry per row."""
        return self.prob[:, 0] + self.prob[:, 1]

    def bob_marginals(self) -> np.ndarray:
        return self.prob[:, 0] + self.prob[:, 2]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    min_entry: float
    max_row_deviation: float
    row_deviations: tuple[float, ...]


def validate_behavior(table: BehaviorTable, tol: float = ALGEBRA_TOL) -> ValidationReport:
    """Check nonnegativity and per-row normalization of ``table``.

    Never raises; failures are carried in the report.
    """
    prob = table.prob
    row_dev = np.abs(prob.sum(axis=1) - 1.0)
    min_entry = float(prob.min())
    finite = bool(np.all(np.isfinite(prob)))
    ok = finite and min_entry >= -tol and float(row_dev.max()) <= tol
    return ValidationReport(
        ok=ok,
        min_entry=min_entry,
        max_row_deviation=float(row_dev.max()),
        row_deviations=tuple(float(d) for d in row_dev),
    )


def check_no_signaling(table: BehaviorTable, tol: float = ALGEBRA_TOL) -> float:
    """Largest change of one wing's marginal when the other wing switches setting.

    A return value ``<= tol`` means the table is no-signaling.
    """
    pa = table.alice_marginals()
    pb = table.bob_marginals()
    # rows: 0=ab 1=ab' 2=a'b 3=a'b'
    return float(
        max(
            abs(pa[0] - pa[1]),
            abs(pa[2] - pa[3]),
            abs(pb[0] - pb[2]),
            abs(pb[1] - pb[3]),
        )
    )


def require_valid(table: BehaviorTable, tol: float = ALGEBRA_TOL) -> None:
    report = validate_behavior(table, tol)
    if not report.ok:
        raise ValueError(
            "invalid behavior table: "
            f"min entry {report.min_entry:.3g}, max row deviation {report.max_row_deviation:.3g}"
        )


@dataclass(frozen=True, eq=False)
class LhvModel:
    """Finite mixture of hidden values with per-wing detection probabilities.

    Parameters
    ----------
    weights
        Probability of each hidden value, shape ``(k,)``.
    resp_a
        ``resp_a[i, s]`` is the probability Alice records "+" under setting
        ``s`` (0 = a, 1 = a') given hidden value ``i``. Shape ``(k, 2)``.
    resp_b
        Same for Bob with settings b, b'.
    labels
        Names of the hidden values; defaults to ``l0, l1, ...``.
    """

    weights: np.ndarray
    resp_a: np.ndarray
    resp_b: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        w = _frozen(self.weights).reshape(-1)
        ra = _frozen(self.resp_a).reshape(-1, 2)
        rb = _frozen(self.resp_b).reshape(-1, 2)
        k = w.size
        if k == 0:
            raise ValueError("LHV model needs at least one hidden value")
        if ra.shape != (k, 2) or rb.shape != (k, 2):
            raise ValueError("response arrays must have shape (k, 2) matching the weights")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(ra)) and np.all(np.isfinite(rb))):
            raise ValueError("LHV model parameters must be finite")
        if w.min() < 0 or abs(w.sum() - 1.0) > ALGEBRA_TOL:
            raise ValueError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
        for name, r in (("respA", ra), ("respB", rb)):
            if r.min() < 0 or r.max() > 1:
                raise ValueError(f"{name} probabilities must lie in [0, 1]")
        labels = tuple(self.labels) or tuple(f"l{i}" for i in range(k))
        if len(labels) != k or len(set(labels)) != k:
            raise ValueError("labels must be unique, one per hidden value")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "resp_a", ra)
        object.__setattr__(self, "resp_b", rb)
        object.__setattr__(self, "labels", labels)

    @property
    def k(self) -> int:
        return self.weights.size

    def __eq__(self, other):
        if not isinstance(other, LhvModel):
            return NotImplemented
        return (
            self.labels == other.labels
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.resp_a, other.resp_a)
            and np.array_equal(self.resp_b, other.resp_b)
        )

    def __hash__(self):
        return hash((self.labels, self.weights.tobytes(), self.resp_a.tobytes(), self.resp_b.tobytes()))


def behavior_from_lhv(model: LhvModel) -> BehaviorTable:
    """Joint outcome table of a local model: mix the factorized per-wing responses."""
    if not isinstance(model, LhvModel):
        raise TypeError(f"expected LhvModel, got {type(model).__name__}")
    prob = np.empty((4, 4))
    for sa in (0, 1):
        for sb in (0, 1):
            pa = model.resp_a[:, sa]
            pb = model.resp_b[:, sb]
            row = setting_pair_index(sa, sb)
            prob[row, 0] = model.weights @ (pa * pb)
            prob[row, 1] = model.weights @ (pa * (1 - pb))
            prob[row, 2] = model.weights @ ((1 - pa) * pb)
            prob[row, 3] = model.weights @ ((1 - pa) * (1 - pb))
    return BehaviorTable(prob)


@dataclass(frozen=True)
class MemoryPolicy:
    """History-dependent local model.

    ``model_at`` receives at most the ``depth`` most recent records (oldest
    first) and returns the LHV model in force for the next trial. ``depth=0``
    is a memoryless policy; ``depth=None`` sees the whole session.
    """

    model_at: Callable[[History], LhvModel]
    depth: int | None = 0
    name: str = "policy"

    def __post_init__(self):
        if self.depth is not None and self.depth < 0:
            raise ValueError("depth must be >= 0 or None")

    def window(self, history: History) -> History:
        if self.depth is None:
            return tuple(history)
        if self.depth == 0:
            return ()
        return tuple(history[-self.depth:])

    def model_for(self, history: History) -> LhvModel:
        model = self.model_at(self.window(history))
        if not isinstance(model, LhvModel):
            raise TypeError(f"policy {self.name!r} returned {type(model).__name__}, not LhvModel")
        return model

    @classmethod
    def stationary(cls, model: LhvModel, name: str = "stationary") -> MemoryPolicy:
        return cls(lambda _history: model, depth=0, name=name)


def behavior_from_policy(policy: MemoryPolicy, history: History) -> BehaviorTable:
    return behavior_from_lhv(policy.model_for(history))


# strategy file format -------------------------------------------------------

class StrategyFileError(ValueError):
    """Parse error in a strategy file; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


_KV = re.compile(r"^([A-Za-z]+'?)=(\S+)$")


def _parse_prob(lineno: int, key: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise StrategyFileError(lineno, f"{key}: not a number: {text!r}") from None
    if not np.isfinite(value):
        raise StrategyFileError(lineno, f"{key}: not finite")
    return value


def _parse_kv(lineno: int, tokens: Iterable[str], allowed: tuple[str, ...]) -> dict[str, float]:
    out = {}
    for tok in tokens:
        m = _KV.match(tok)
        if not m or m.group(1) not in allowed:
            raise StrategyFileError(lineno, f"expected one of {'/'.join(k + '=' for k in allowed)}, got {tok!r}")
        if m.group(1) in out:
            raise StrategyFileError(lineno, f"duplicate key {m.group(1)}")
        out[m.group(1)] = _parse_prob(lineno, m.group(1), m.group(2))
    missing = [k for k in allowed if k not in out]
    if missing:
        raise StrategyFileError(lineno, f"missing {', '.join(missing)}")
    return out


class _ModelBuilder:
    def __init__(self, name: str, lineno: int):
        self.name = name
        self.lineno = lineno
        self.order: list[str] = []
        self.weights: dict[str, float] = {}
        self.resp_a: dict[str, tuple[float, float]] = {}
        self.resp_b: dict[str, tuple[float, float]] = {}
        self.first_seen: dict[str, int] = {}

    def feed(self, lineno: int, keyword: str, args: list[str]) -> None:
        if not args:
            raise StrategyFileError(lineno, f"{keyword}: missing hidden-value id")
        lid, rest = args[0], args[1:]
        self.first_seen.setdefault(lid, lineno)
        if keyword == "lambda":
            if lid in self.weights:
                raise StrategyFileError(lineno, f"duplicate lambda {lid!r}")
            kv = _parse_kv(lineno, rest, ("weight",))
            if kv["weight"] < 0:
                raise StrategyFileError(lineno, "weight must be nonnegative")
            self.order.append(lid)
            self.weights[lid] = kv["weight"]
        else:
            keys = ("a", "a'") if keyword == "respA" else ("b", "b'")
            target = self.resp_a if keyword == "respA" else self.resp_b
            if lid in target:
                raise StrategyFileError(lineno, f"duplicate {keyword} for {lid!r}")
            kv = _parse_kv(lineno, rest, keys)
            for key, p in kv.items():
                if not 0 <= p <= 1:
                    raise StrategyFileError(lineno, f"{key}={p} outside [0, 1]")
            target[lid] = (kv[keys[0]], kv[keys[1]])

    def build(self) -> LhvModel:
        for lid, lineno in self.first_seen.items():
            if lid not in self.weights:
                raise StrategyFileError(lineno, f"hidden value {lid!r} has no 'lambda' line")
        if not self.order:
            raise StrategyFileError(self.lineno, f"model {self.name!r} defines no hidden values")
        for lid in self.order:
            lineno = self.first_seen[lid]
            if lid not in self.resp_a:
                raise StrategyFileError(lineno, f"hidden value {lid!r} has no respA line")
            if lid not in self.resp_b:
                raise StrategyFileError(lineno, f"hidden value {lid!r} has no respB line")
        w = np.array([self.weights[lid] for lid in self.order])
        total = w.sum()
        if abs(total - 1.0) > 1e-9:
            raise StrategyFileError(self.lineno, f"weights of model {self.name!r} sum to {total!r}, not 1")
        return LhvModel(
            weights=w / total,
            resp_a=[self.resp_a[lid] for lid in self.order],
            resp_b=[self.resp_b[lid] for lid in self.order],
            labels=tuple(self.order),
        )


@dataclass
class StrategyFile:
    """Parsed contents of a strategy file.

    ``models`` maps model names to LHV models. A file without ``model``
    headers defines a single model named ``"main"``. ``classes`` holds the
    ``(lineno, pattern, target)`` triples of ``class`` lines and ``depth`` the
    value of a ``depth`` line, both used by memory-policy files.
    """

    models: dict[str, LhvModel]
    classes: list[tuple[int, str, str]]
    depth: int | None


def parse_strategy_text(text: str) -> StrategyFile:
    builders: dict[str, _ModelBuilder] = {}
    current: _ModelBuilder | None = None
    classes: list[tuple[int, str, str]] = []
    depth: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, *args = line.split()
        if keyword == "model":
            if len(args) != 1:
                raise StrategyFileError(lineno, "usage: model <name>")
            if args[0] in builders:
                raise StrategyFileError(lineno, f"duplicate model {args[0]!r}")
            current = builders[args[0]] = _ModelBuilder(args[0], lineno)
        elif keyword in ("lambda", "respA", "respB"):
            if current is None:
                current = builders["main"] = _ModelBuilder("main", lineno)
            current.feed(lineno, keyword, args)
        elif keyword == "class":
            m = re.match(r"^class\s+(.+?)\s*->\s*(\S+)$", line)
            if not m:
                raise StrategyFileError(lineno, "usage: class <pattern> -> <model-id>")
            classes.append((lineno, m.group(1), m.group(2)))
        elif keyword == "depth":
            if depth is not None:
                raise StrategyFileError(lineno, "duplicate depth line")
            if len(args) != 1 or not args[0].isdigit():
                raise StrategyFileError(lineno, "usage: depth <non-negative integer>")
            depth = int(args[0])
        else:
            raise StrategyFileError(lineno, f"unknown keyword {keyword!r}")
    models = {name: b.build() for name, b in builders.items()}
    return StrategyFile(models=models, classes=classes, depth=depth)


def parse_strategy_file(path: str | Path) -> StrategyFile:
    return parse_strategy_text(Path(path).read_text())


def _fmt(x: float) -> str:
    return repr(float(x))


def format_lhv_model(model: LhvModel, header: str | None = None) -> str:
    """Render ``model`` in the strategy file format (round-trips exactly)."""
    lines = [f"model {header}"] if header else []
    for i, lid in enumerate(model.labels):
        lines.append(f"lambda {lid} weight={_fmt(model.weights[i])}")
        lines.append(f"respA {lid} a={_fmt(model.resp_a[i, 0])} a'={_fmt(model.resp_a[i, 1])}")
        lines.append(f"respB {lid} b={_fmt(model.resp_b[i, 0])} b'={_fmt(model.resp_b[i, 1])}")
    return "\n".join(lines) + "\n"
