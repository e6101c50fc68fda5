"""Command-line front end: ``bellmem simulate|analyze|check|search``.

Exit codes: 0 success, 1 usage or input error, 2 inequality/assertion failure.
Every flag ``--foo-bar`` may also be given as ``foo_bar=value`` in a
``--config`` file; the flag wins on conflict.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .engine import (
    CsvFormatError,
    PlaybackStrategy,
    Session,
    SettingsDistribution,
    SourceModel,
    filter_detected,
    run_session,
)
from .model import (
    MemoryPolicy,
    StrategyFileError,
    behavior_from_lhv,
    behavior_from_policy,
    check_no_signaling,
    validate_behavior,
)
from .search import DEFAULT_CAP, SearchSpaceError, exhaustive_policy_search, hill_climb_policy
from .statistics import (
    SignalingError,
    ZeroPairError,
    analysis_report,
    b_value,
    check_identity,
    chsh_value,
    format_report,
)
from .strategies import parse_table_text, random_lhv_model, resolve_strategy


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# option name -> (type, default)
OPTIONS = {
    "seed": (int, None),
    "out": (str, None),
    "strategy": (str, None),
    "trials": (int, None),
    "emit_prob": (float, 1.0),
    "bias_a": (float, 0.0),
    "bias_b": (float, 0.0),
    "estimator": (str, "both"),
    "report": (str, None),
    "input": (str, None),
    "filter_detected": (bool, False),
    "samples": (int, 1000),
    "tol": (float, 1e-12),
    "table": (str, None),
    "depth": (int, 0),
    "mode": (str, "exhaustive"),
    "classes": (str, "outcome"),
    "classwise": (bool, False),
    "cap": (int, DEFAULT_CAP),
    "iters": (int, 500),
    "restarts": (int, 20),
    "policy_out": (str, None),
}


HELP = {
    "seed": "integer seed; the same seed reproduces the same bytes",
    "out": "report file (default stdout)",
    "strategy": "demo-d, uniform, det:XX,XX, random-lhv:K:SEED, pr-box, table:FILE, memory:FILE or a strategy file",
    "trials": "number of trials",
    "emit_prob": "probability that the source emits a pair (default 1)",
    "bias_a": "Alice's setting bias eps; P(a) = (1 + eps) / 2 (default 0)",
    "bias_b": "Bob's setting bias eps; P(b) = (1 + eps) / 2 (default 0)",
    "estimator": "both (default) or joint, which skips the per-pair estimators",
    "report": "report file (default stdout)",
    "input": "trial CSV to analyze",
    "filter_detected": "keep only trials where at least one side saw +",
    "samples": "number of random local models to test (default 1000)",
    "tol": "tolerance for algebraic checks (default 1e-12)",
    "table": "also check this behavior table file",
    "depth": "memory depth in trials (default 0)",
    "mode": "exhaustive (default) or hill-climb",
    "classes": "history classes: outcome (default) or full",
    "classwise": "solve each class independently instead of enumerating policies",
    "cap": f"largest policy count enumerated exhaustively (default {DEFAULT_CAP})",
    "iters": "hill-climb iterations per restart (default 500)",
    "restarts": "hill-climb restarts (default 20)",
    "policy_out": "file for the winning policy (default <out>.policy when --out is set)",
}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bellmem", description="CH-Eberhard Bell test simulator with memory strategies")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, *names, out_help=HELP["out"]):
        p.add_argument("--config", help="key=value file supplying defaults for any flag")
        for name in ("seed", "out", *names):
            typ, _ = OPTIONS[name]
            text = out_help if name == "out" else HELP[name]
            if typ is bool:
                p.add_argument(_flag(name), action="store_const", const=True, default=None, help=text)
            else:
                p.add_argument(_flag(name), type=typ, default=None, help=text)
        return p

    sim = common(sub.add_parser("simulate", help="run a session, write CSV and report"),
                 "strategy", "trials", "emit_prob", "bias_a", "bias_b", "estimator", "report",
                 out_help="trial CSV to write (required)")
    sim.set_defaults(func=cmd_simulate)

    ana = common(sub.add_parser("analyze", help="analyze an existing trial CSV"),
                 "input", "filter_detected", "estimator")
    ana.add_argument("path", nargs="?", help="trial CSV (same as --input)")
    ana.set_defaults(func=cmd_analyze)

    chk = common(sub.add_parser("check", help="identity and invariant sweep over random local models"),
                 "samples", "tol", "table")
    chk.set_defaults(func=cmd_check)

    srch = common(sub.add_parser("search", help="adversarial search over memory policies"),
                  "depth", "mode", "bias_a", "bias_b", "classes", "classwise", "cap",
                  "iters", "restarts", "policy_out")
    srch.set_defaults(func=cmd_search)
    return parser


def read_config(path: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in OPTIONS:
            raise UsageError(f"{path}: line {lineno}: unknown or malformed setting {line!r}")
        out[key] = value.strip()
    return out


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Merge flags over config values over defaults, converting types."""
    config = read_config(args.config) if args.config else {}
    merged = argparse.Namespace(command=args.command, func=args.func)
    for name, (typ, default) in OPTIONS.items():
        value = getattr(args, name, None)
        if value is None and name in config:
            raw = config[name]
            try:
                if typ is bool:
                    value = raw.lower() in ("1", "true", "yes")
                else:
                    value = typ(raw)
            except ValueError:
                raise UsageError(f"config: {name}={raw!r} is not a valid {typ.__name__}") from None
        setattr(merged, name, default if value is None else value)
    if getattr(args, "path", None):
        merged.input = args.path
    return merged


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, newline="\n")


def _estimator(cfg) -> bool:
    if cfg.estimator not in ("both", "joint"):
        raise UsageError("--estimator must be 'both' or 'joint'")
    return cfg.estimator == "both"


def _require_seed(cfg) -> int:
    if cfg.seed is None:
        raise UsageError("--seed is required")
    if cfg.seed < 0:
        raise UsageError("--seed must be non-negative")
    return cfg.seed


def cmd_simulate(cfg) -> int:
    seed = _require_seed(cfg)
    if cfg.strategy is None:
        raise UsageError("--strategy is required")
    if cfg.trials is None or cfg.trials < 1:
        raise UsageError("--trials must be >= 1")
    if cfg.out is None:
        raise UsageError("--out (trial CSV path) is required")
    conditional = _estimator(cfg)
    source = SourceModel(cfg.emit_prob)
    dist = SettingsDistribution(cfg.bias_a, cfg.bias_b)
    strategy = resolve_strategy(cfg.strategy)

    session = run_session(strategy, source, dist, cfg.trials, seed)
    session.to_csv(cfg.out)
    table = None
    if isinstance(strategy, PlaybackStrategy):
        table = strategy.table
    elif isinstance(strategy, MemoryPolicy) and strategy.depth == 0:
        table = behavior_from_policy(strategy, ())
    report = analysis_report(session, table=table, conditional=conditional)
    _emit(format_report(report), cfg.report)
    return 0


def cmd_analyze(cfg) -> int:
    if cfg.input is None:
        raise UsageError("an input CSV is required")
    conditional = _estimator(cfg)
    session = Session.from_csv(cfg.input)
    if cfg.filter_detected:
        session = filter_detected(session)
    report = analysis_report(session, conditional=conditional)
    _emit(format_report(report), cfg.out)
    return 0


def cmd_check(cfg) -> int:
    if cfg.samples < 1:
        raise UsageError("--samples must be >= 1")
    if not cfg.tol > 0:
        raise UsageError("--tol must be positive")
    seed = 0 if cfg.seed is None else _require_seed(cfg)
    tol = cfg.tol
    rng = np.random.default_rng(seed)
    failures = []
    max_identity = max_ns = 0.0
    min_b, max_s = np.inf, -np.inf
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(cfg.samples)):
        k = int(rng.integers(1, 6))
        model = random_lhv_model(k, child, deterministic=bool(rng.random() < 0.2))
        table = behavior_from_lhv(model)
        ns = check_no_signaling(table)
        b, s = b_value(table), chsh_value(table)
        dev = abs(s - (2 - 4 * b))
        max_identity, max_ns = max(max_identity, dev), max(max_ns, ns)
        min_b, max_s = min(min_b, b), max(max_s, s)
        problems = []
        if not validate_behavior(table, tol).ok:
            problems.append("invalid table")
        if ns > tol:
            problems.append(f"signaling {ns:.3g}")
        if b < -tol:
            problems.append(f"B={b!r}")
        if s > 2 + tol:
            problems.append(f"S={s!r}")
        if dev > tol:
            problems.append(f"identity deviation {dev:.3g}")
        if (b >= -tol) != (s <= 2 + tol):
            problems.append("B>=0 and S<=2 disagree")
        if problems:
            failures.append(f"sample.{i}={'; '.join(problems)}")

    report: dict[str, object] = {
        "samples": cfg.samples,
        "max_identity_deviation": max_identity,
        "max_no_signaling_deviation": max_ns,
        "min_b": min_b,
        "max_s": max_s,
    }
    if cfg.table:
        table = parse_table_text(Path(cfg.table).read_text())
        if not validate_behavior(table, tol).ok:
            raise UsageError(f"{cfg.table}: not a valid behavior table")
        b, s = b_value(table), chsh_value(table)
        report["table.b"] = b
        report["table.s"] = s
        report["table.no_signaling_deviation"] = check_no_signaling(table)
        try:
            report["table.identity_deviation"] = check_identity(table, tol)
        except SignalingError:
            pass
        local = b >= -tol and s <= 2 + tol
        report["table.consistent_with_lhv"] = int(local)
        if not local:
            failures.append(f"table={cfg.table} is non-LHV (B={b!r}, S={s!r})")
    report["failures"] = len(failures)
    text = format_report(report) + "".join(f"{f}\n" for f in failures)
    _emit(text, cfg.out)
    return 2 if failures else 0


def cmd_search(cfg) -> int:
    if cfg.depth < 0:
        raise UsageError("--depth must be >= 0")
    if cfg.classes not in ("outcome", "full"):
        raise UsageError("--classes must be 'outcome' or 'full'")
    dist = SettingsDistribution(cfg.bias_a, cfg.bias_b)
    if cfg.mode == "exhaustive":
        result = exhaustive_policy_search(cfg.depth, dist, cfg.classes, cfg.cap, cfg.classwise)
    elif cfg.mode == "hill-climb":
        if cfg.iters < 1 or cfg.restarts < 1:
            raise UsageError("--iters and --restarts must be >= 1")
        result = hill_climb_policy(cfg.depth, cfg.iters, cfg.restarts, _require_seed(cfg), dist, cfg.classes)
    else:
        raise UsageError("--mode must be 'exhaustive' or 'hill-climb'")
    policy_out = cfg.policy_out
    if policy_out is None and cfg.out not in (None, "-"):
        policy_out = cfg.out + ".policy"
    if policy_out:
        Path(policy_out).write_text(result.spec.to_text(), newline="\n")
    _emit(format_report(result.report()), cfg.out)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return cfg.func(cfg)
    except ZeroPairError as exc:
        print(f"bellmem: {exc}", file=sys.stderr)
        return 2
    except (UsageError, StrategyFileError, CsvFormatError, SearchSpaceError, ValueError, OSError) as exc:
        print(f"bellmem: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
