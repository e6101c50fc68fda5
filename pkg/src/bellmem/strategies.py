"""Built-in strategies and the memory-policy table format.

Named strategies (as accepted by :func:`resolve_strategy`):

``demo-d``            Alice always detects, Bob detects under b only.
``det:XX,YY``         deterministic assignment A(a)A(a'),B(b)B(b'), e.g. ``det:++,+0``.
``uniform``           every response probability 1/2.
``pr-box``            PR-box table playback (not a local model).
``random-lhv:K:SEED`` random K-component local model.
``memory:FILE``       table-driven memory policy.
``table:FILE``        raw behavior-table playback.

History classes
---------------
A memory policy of depth ``d`` looks at the last ``d`` trials (oldest first).
Each trial is coarse-grained to a *full* code ``4*pair + outcome`` (16
values) or an *outcome* code (4 values). Missing trials at the start of a
session are padded with ``ab`` / ``00`` records.

Pattern syntax in ``class`` lines: ``*`` matches anything; otherwise ``d``
comma-separated tokens, each ``*``, an outcome pair (``++``), or a setting
pair and outcome pair (``a'b:+0``, outcome may be ``*``). First matching
line wins.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .engine import PlaybackStrategy, Strategy
from .model import (
    OUTCOME_PAIRS,
    SETTING_PAIRS,
    BehaviorTable,
    History,
    LhvModel,
    MemoryPolicy,
    StrategyFileError,
    TrialRecord,
    format_lhv_model,
    parse_strategy_text,
    require_valid,
)

MAX_POLICY_DEPTH = 4
PAD_RECORD = TrialRecord(0, False, 0, 0, 0, 0)


@dataclass(frozen=True)
class DeterministicAssignment:
    """Fixed outcome per local setting: True means "+"."""

    a: bool
    a_prime: bool
    b: bool
    b_prime: bool

    @classmethod
    def parse(cls, text: str) -> DeterministicAssignment:
        s = text.replace(",", "")
        if len(s) != 4 or set(s) - {"+", "0"}:
            raise ValueError(f"assignment must look like '++,+0', got {text!r}")
        return cls(*(c == "+" for c in s))

    @property
    def code(self) -> str:
        sym = ["+" if v else "0" for v in (self.a, self.a_prime, self.b, self.b_prime)]
        return f"{sym[0]}{sym[1]},{sym[2]}{sym[3]}"

    def __str__(self) -> str:
        return f"det:{self.code}"


def all_assignments() -> list[DeterministicAssignment]:
    """The 16 assignments, ordered lexicographically with "+" before "0"."""
    return [DeterministicAssignment(*(v == "+" for v in combo)) for combo in itertools.product("+0", repeat=4)]


def make_deterministic(assignment: DeterministicAssignment | str) -> LhvModel:
    if isinstance(assignment, str):
        assignment = DeterministicAssignment.parse(assignment.removeprefix("det:"))
    return LhvModel(
        weights=[1.0],
        resp_a=[[float(assignment.a), float(assignment.a_prime)]],
        resp_b=[[float(assignment.b), float(assignment.b_prime)]],
        labels=(assignment.code,),
    )


DEMO_ASSIGNMENT = DeterministicAssignment(True, True, True, False)


def demo_model() -> LhvModel:
    """Alice "+" under a and a', Bob "+" under b and "0" under b'."""
    return make_deterministic(DEMO_ASSIGNMENT)


def uniform_model() -> LhvModel:
    return LhvModel(weights=[1.0], resp_a=[[0.5, 0.5]], resp_b=[[0.5, 0.5]], labels=("u",))


def random_lhv_model(k: int, seed, deterministic: bool = False) -> LhvModel:
    """Random ``k``-component local model.

    Weights are normalized exponential draws (strictly positive). Responses
    are uniform on [0, 1], or 0/1 coin flips when ``deterministic``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    w = rng.exponential(size=k)
    w = w / w.sum()
    if deterministic:
        ra = rng.integers(0, 2, size=(k, 2)).astype(float)
        rb = rng.integers(0, 2, size=(k, 2)).astype(float)
    else:
        ra = rng.uniform(size=(k, 2))
        rb = rng.uniform(size=(k, 2))
    return LhvModel(weights=w, resp_a=ra, resp_b=rb)


def pr_box_table() -> BehaviorTable:
    """Perfect correlation under ab, ab', a'b and anticorrelation under a'b'."""
    half = 0.5
    return BehaviorTable.from_rows({
        "ab": {"++": half, "00": half},
        "ab'": {"++": half, "00": half},
        "a'b": {"++": half, "00": half},
        "a'b'": {"+0": half, "0+": half},
    })


def behavior_playback(table: BehaviorTable, name: str = "playback") -> PlaybackStrategy:
    """Strategy that draws outcome pairs directly from ``table`` rows.

    The table need not be no-signaling; this is how non-local correlations are
    injected to measure the power of the analysis.
    """
    return PlaybackStrategy(table, name=name)


# history classes -------------------------------------------------------------

COARSE_MODES = ("outcome", "full")


def class_count(depth: int, coarse: str = "outcome") -> int:
    base = 4 if coarse == "outcome" else 16
    return base ** depth


def history_classes(depth: int, coarse: str = "outcome") -> list[tuple[int, ...]]:
    base = 4 if coarse == "outcome" else 16
    return list(itertools.product(range(base), repeat=depth))


def classify(window: History, depth: int, coarse: str = "outcome") -> tuple[int, ...]:
    """Class key of the last ``depth`` records, padded at the front."""
    recent = list(window[-depth:]) if depth else []
    recent = [PAD_RECORD] * (depth - len(recent)) + recent
    if coarse == "outcome":
        return tuple(r.outcome for r in recent)
    return tuple(4 * r.pair + r.outcome for r in recent)


def format_class(key: Sequence[int], coarse: str = "outcome") -> str:
    if not key:
        return "*"
    if coarse == "outcome":
        return ",".join(OUTCOME_PAIRS[c] for c in key)
    return ",".join(f"{SETTING_PAIRS[c // 4]}:{OUTCOME_PAIRS[c % 4]}" for c in key)


_TOKEN = re.compile(r"^(?:(ab|ab'|a'b|a'b'):)?(\+\+|\+0|0\+|00|\*)$")


def _parse_pattern(pattern: str, depth: int) -> list[tuple[int | None, int | None]] | None:
    """Per-position (pair, outcome) constraints; ``None`` means wildcard pattern."""
    pattern = pattern.strip()
    if pattern == "*":
        return None
    tokens = [t.strip() for t in pattern.split(",")]
    if len(tokens) != depth:
        raise ValueError(f"pattern {pattern!r} has {len(tokens)} tokens, depth is {depth}")
    out = []
    for tok in tokens:
        m = _TOKEN.match(tok)
        if not m:
            raise ValueError(f"bad pattern token {tok!r}")
        pair = SETTING_PAIRS.index(m.group(1)) if m.group(1) else None
        outcome = None if m.group(2) == "*" else OUTCOME_PAIRS.index(m.group(2))
        out.append((pair, outcome))
    return out


def _matches(parsed, full_key: tuple[int, ...]) -> bool:
    if parsed is None:
        return True
    for (pair, outcome), code in zip(parsed, full_key):
        if pair is not None and code // 4 != pair:
            return False
        if outcome is not None and code % 4 != outcome:
            return False
    return True


Target = Union[LhvModel, DeterministicAssignment]


@dataclass(frozen=True)
class TablePolicySpec:
    """Ordered ``(pattern, target)`` rules for a memory policy of fixed depth.

    ``names`` optionally gives the textual id of each target, used when the
    spec is written back to a file.
    """

    depth: int
    rules: tuple[tuple[str, Target], ...]
    names: tuple[str, ...] = ()

    @classmethod
    def from_class_map(
        cls, depth: int, mapping: Mapping[tuple[int, ...], Target], coarse: str = "outcome"
    ) -> TablePolicySpec:
        keys = sorted(mapping)
        rules = tuple((format_class(k, coarse), mapping[k]) for k in keys)
        return cls(depth, rules)

    def target_name(self, i: int) -> str:
        if self.names and self.names[i]:
            return self.names[i]
        target = self.rules[i][1]
        if isinstance(target, DeterministicAssignment):
            return str(target)
        return f"m{i}"

    def to_text(self) -> str:
        """Strategy-file text; non-deterministic targets are emitted as ``model`` blocks."""
        blocks = []
        emitted_models = set()
        for i, (_, target) in enumerate(self.rules):
            name = self.target_name(i)
            if isinstance(target, LhvModel) and name not in emitted_models and not _is_builtin_name(name):
                blocks.append(format_lhv_model(target, header=name))
                emitted_models.add(name)
        lines = [f"depth {self.depth}"]
        lines += [f"class {pattern} -> {self.target_name(i)}" for i, (pattern, _) in enumerate(self.rules)]
        return "".join(blocks) + "\n".join(lines) + "\n"


class PolicySpecError(ValueError):
    pass


def make_memory_policy(spec: TablePolicySpec, depth: int | None = None, name: str = "memory") -> MemoryPolicy:
    """Build a policy that maps each history class to the first matching rule's model.

    Raises :class:`PolicySpecError` if some class matches no rule.
    """
    depth = spec.depth if depth is None else depth
    if depth != spec.depth:
        raise PolicySpecError(f"depth {depth} does not match spec depth {spec.depth}")
    if not 0 <= depth <= MAX_POLICY_DEPTH:
        raise PolicySpecError(f"depth must be between 0 and {MAX_POLICY_DEPTH}")
    parsed = []
    models = []
    for pattern, target in spec.rules:
        try:
            parsed.append(_parse_pattern(pattern, depth))
        except ValueError as exc:
            raise PolicySpecError(str(exc)) from None
        models.append(make_deterministic(target) if isinstance(target, DeterministicAssignment) else target)

    lookup: list[LhvModel] = []
    for key in history_classes(depth, "full"):
        for rule, model in zip(parsed, models):
            if _matches(rule, key):
                lookup.append(model)
                break
        else:
            raise PolicySpecError(f"no rule covers history class {format_class(key, 'full')}")

    if depth == 0:
        only = lookup[0]
        return MemoryPolicy(lambda _h: only, depth=0, name=name)

    powers = [16 ** (depth - 1 - i) for i in range(depth)]

    def model_at(window: History) -> LhvModel:
        key = classify(window, depth, "full")
        return lookup[sum(c * p for c, p in zip(key, powers))]

    return MemoryPolicy(model_at, depth=depth, name=name)


def reachable_models(policy_spec: TablePolicySpec) -> list[LhvModel]:
    """Models the policy can put in force (one per rule that wins some class)."""
    policy = make_memory_policy(policy_spec)
    seen = {}
    for key in history_classes(policy_spec.depth, "full"):
        window = [TrialRecord(i + 1, True, c // 8, (c // 4) % 2, *_outcome_bits(c % 4)) for i, c in enumerate(key)]
        model = policy.model_for(window)
        seen[id(model)] = model
    return list(seen.values())


def _outcome_bits(outcome: int) -> tuple[int, int]:
    return 1 - outcome // 2, 1 - outcome % 2


# table files -----------------------------------------------------------------

def parse_table_text(text: str) -> BehaviorTable:
    """Parse ``table <pair> ++=p +0=p 0+=p 00=p`` lines (one per setting pair)."""
    prob = np.full((4, 4), np.nan)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "table" or len(parts) != 6 or parts[1] not in SETTING_PAIRS:
            raise StrategyFileError(lineno, "usage: table <pair> ++=<p> +0=<p> 0+=<p> 00=<p>")
        row = SETTING_PAIRS.index(parts[1])
        if not np.isnan(prob[row]).all():
            raise StrategyFileError(lineno, f"duplicate row {parts[1]}")
        for tok in parts[2:]:
            key, _, val = tok.partition("=")
            if key not in OUTCOME_PAIRS:
                raise StrategyFileError(lineno, f"unknown outcome pair {key!r}")
            try:
                prob[row, OUTCOME_PAIRS.index(key)] = float(val)
            except ValueError:
                raise StrategyFileError(lineno, f"not a number: {val!r}") from None
        if np.isnan(prob[row]).any():
            raise StrategyFileError(lineno, "each row needs all four outcome pairs")
    missing = [p for i, p in enumerate(SETTING_PAIRS) if np.isnan(prob[i]).any()]
    if missing:
        raise StrategyFileError(0, f"missing rows for {', '.join(missing)}")
    return BehaviorTable(prob)


def format_table(table: BehaviorTable) -> str:
    lines = []
    for i, pair in enumerate(SETTING_PAIRS):
        cells = " ".join(f"{o}={float(table.prob[i, j])!r}" for j, o in enumerate(OUTCOME_PAIRS))
        lines.append(f"table {pair} {cells}")
    return "\n".join(lines) + "\n"


# name resolution ---------------------------------------------------------------

_BUILTIN_PREFIXES = ("det:", "random-lhv:")


def _is_builtin_name(name: str) -> bool:
    return name in ("demo-d", "uniform") or name.startswith(_BUILTIN_PREFIXES)


def resolve_lhv(name: str) -> LhvModel:
    """Local model for a built-in name (``demo-d``, ``uniform``, ``det:..``, ``random-lhv:..``)."""
    if name == "demo-d":
        return demo_model()
    if name == "uniform":
        return uniform_model()
    if name.startswith("det:"):
        return make_deterministic(name)
    if name.startswith("random-lhv:"):
        parts = name.split(":")
        if len(parts) != 3 or not parts[1].isdigit() or not parts[2].isdigit():
            raise ValueError(f"expected random-lhv:<k>:<seed>, got {name!r}")
        return random_lhv_model(int(parts[1]), int(parts[2]))
    raise ValueError(f"unknown local model {name!r}")


def load_memory_policy(text: str, name: str = "memory") -> tuple[MemoryPolicy, TablePolicySpec]:
    sf = parse_strategy_text(text)
    if not sf.classes:
        raise StrategyFileError(1, "memory policy file has no 'class' lines")
    first = sf.classes[0][0]
    if sf.depth is None:
        raise StrategyFileError(first, "memory policy file needs a 'depth <d>' line")
    rules, names = [], []
    for lineno, pattern, target in sf.classes:
        if target in sf.models:
            model = sf.models[target]
        else:
            try:
                model = resolve_lhv(target)
            except ValueError as exc:
                raise StrategyFileError(lineno, str(exc)) from None
        try:
            _parse_pattern(pattern, sf.depth)
        except ValueError as exc:
            raise StrategyFileError(lineno, str(exc)) from None
        rules.append((pattern, model))
        names.append(target)
    spec = TablePolicySpec(sf.depth, tuple(rules), tuple(names))
    try:
        policy = make_memory_policy(spec, name=name)
    except PolicySpecError as exc:
        raise StrategyFileError(sf.classes[-1][0], str(exc)) from None
    return policy, spec


def resolve_strategy(name: str) -> Strategy:
    """Strategy for a built-in name or a strategy/table file path."""
    if name == "pr-box":
        return behavior_playback(pr_box_table(), name="pr-box")
    if name.startswith("table:"):
        table = parse_table_text(Path(name[6:]).read_text())
        require_valid(table)
        return behavior_playback(table, name=name)
    if name.startswith("memory:"):
        return load_memory_policy(Path(name[7:]).read_text(), name=name)[0]
    if _is_builtin_name(name):
        return MemoryPolicy.stationary(resolve_lhv(name), name=name)
    path = Path(name)
    if path.is_file():
        text = path.read_text()
        sf = parse_strategy_text(text)
        if sf.classes:
            return load_memory_policy(text, name=name)[0]
        if len(sf.models) != 1:
            raise StrategyFileError(1, "plain strategy file must define exactly one model")
        return MemoryPolicy.stationary(next(iter(sf.models.values())), name=name)
    raise ValueError(f"unknown strategy {name!r} (not a built-in and not a file)")
