"""Command-line front end.

Exit codes: 0 when every expectation holds, 1 when the simulation ran but
diverged, 2 for configuration or fixture problems.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .attacker import ConfigurationError
from .matrix import default_handler_grid, language_grid, runtime_grid
from .policies import VULNERABLE_POLICIES, PolicyId
from .scenarios import ScenarioConfig, dumps_report, run_scenario
from .signals import SignalDomainError
from .tables import FixtureError, Grid, load_grid
from .workloads.banknote import DatasetError

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG = 0, 1, 2


def parse_signal_range(text: str) -> range:
    """``8`` or ``1..31``."""
    lo, sep, hi = text.partition("..")
    try:
        a = int(lo)
        b = int(hi) if sep else a
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad signal range {text!r}") from None
    if not 1 <= a <= b <= 31:
        raise argparse.ArgumentTypeError(f"signal range must lie within 1..31, got {text!r}")
    return range(a, b + 1)


def _report_diffs(name: str, want: Grid, got: Grid, signals, out) -> int:
    known = Grid({r: c for r, c in got.rows.items() if r in want.rows})
    for row in got.rows.keys() - want.rows.keys():
        print(f"{name}: no measured row for {row}; shown without comparison", file=out)
    diffs = want.diff(known, signals)
    for row, n, expect, actual in diffs:
        print(f"{name}: DIFF {row} signal {n}: fixture {expect}, simulated {actual}", file=out)
    cells = len(known.rows) * len(signals)
    print(f"{name}: {cells - len(diffs)}/{cells} cells match", file=out)
    return len(diffs)


def cmd_matrix(args, out=None) -> int:
    out = out or sys.stdout
    signals = args.signal or range(1, 32)
    try:
        policies = [PolicyId.parse(r) for r in args.runtime] if args.runtime else list(VULNERABLE_POLICIES)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    want = load_grid("table2", args.fixtures)
    got = runtime_grid(policies, signals)
    print(got.render(signals), file=out)
    return EXIT_DIVERGED if _report_diffs("table2", want, got, signals, out) else EXIT_OK


def cmd_languages(args, out=None) -> int:
    out = out or sys.stdout
    signals = range(1, 32)
    n = 0
    for name, got in (("table4", language_grid(signals)), ("table5", default_handler_grid(signals))):
        want = load_grid(name, args.fixtures)
        print(got.render(signals), file=out)
        n += _report_diffs(name, want, got, signals, out)
    return EXIT_DIVERGED if n else EXIT_OK


_SCENARIO_FLAGS = ("name", "policy", "language", "defense", "seed", "dataset", "fast", "epochs")


def build_config(args) -> ScenarioConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a JSON object")
        if "name" in data and "scenario" not in data:
            data["scenario"] = data.pop("name")
    for key in _SCENARIO_FLAGS:
        value = getattr(args, key)
        if value is not None and value is not False:
            data["scenario" if key == "name" else key] = value
    if args.signal is not None:
        attack = dict(data.get("attack") or {})
        attack["signal"] = args.signal
        attack.setdefault("kind", args.kind or "OneShot")
        for key in ("kind", "window", "max_count", "origin_code"):
            if getattr(args, key) is not None:
                attack[key] = getattr(args, key)
        data["attack"] = attack
    if args.oracle is not None or args.timer_period is not None:
        data["oracle"] = {"mode": args.oracle or "timer_sampled", "timer_period": args.timer_period}
    if "scenario" not in data:
        raise ConfigurationError("--name (or a config file with a scenario) is required")
    return ScenarioConfig.from_dict(data)


def cmd_scenario(args, out=None) -> int:
    out = out or sys.stdout
    cfg = build_config(args)
    report = run_scenario(cfg, args.fixtures)
    text = dumps_report(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    verdict = {True: "PASS", False: "FAIL", None: "NO-REFERENCE"}[report["passed"]]
    failed = sorted(k for k, v in report["checks"].items() if not v)
    print(f"scenario {cfg.scenario.value} on {cfg.policy.value}/{cfg.language.value} "
          f"defense={cfg.defense.describe()}: {verdict}" + (f" (failed: {', '.join(failed)})" if failed else ""),
          file=sys.stderr)
    return EXIT_DIVERGED if report["passed"] is False else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgxsignal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("matrix", help="simulate the runtime grid and diff it against the fixture")
    m.add_argument("--runtime", action="append", metavar="R", help="runtime id; repeatable")
    m.add_argument("--signal", type=parse_signal_range, metavar="N..M")
    m.add_argument("--fixtures", metavar="DIR")
    m.set_defaults(func=cmd_matrix)

    lg = sub.add_parser("languages", help="simulate the language grids and diff them")
    lg.add_argument("--fixtures", metavar="DIR")
    lg.set_defaults(func=cmd_languages)

    s = sub.add_parser("scenario", help="run an end-to-end attack scenario")
    s.add_argument("--name", choices=["nginx", "nodejs", "jsat", "mlp", "custom"])
    s.add_argument("--policy")
    s.add_argument("--language")
    s.add_argument("--defense", help="none, exit-info, ledger, whitelist:N,M or a '+'-joined mix")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", metavar="FILE")
    s.add_argument("--dataset", metavar="PATH", help="Banknote CSV (5 columns)")
    s.add_argument("--fast", action="store_true", help="reduced MLP epochs with relaxed thresholds")
    s.add_argument("--epochs", type=int)
    s.add_argument("--config", metavar="FILE", help="JSON file mirroring these flags")
    s.add_argument("--fixtures", metavar="DIR")
    s.add_argument("--signal", help="attack signal (number or name)")
    s.add_argument("--kind", choices=["OneShot", "EveryWindow", "CountBounded"])
    s.add_argument("--window", help="instrumentation site for EveryWindow")
    s.add_argument("--max-count", dest="max_count", type=int)
    s.add_argument("--origin-code", dest="origin_code",
                   choices=["user_kill", "kernel_fault", "fpe_intdiv", "fpe_fltovf"])
    s.add_argument("--oracle", choices=["exact", "timer_sampled"])
    s.add_argument("--timer-period", dest="timer_period", type=int)
    s.set_defaults(func=cmd_scenario)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FixtureError, ConfigurationError, DatasetError, SignalDomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
