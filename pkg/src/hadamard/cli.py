"""Command line entry point: ``hadamard <subcommand> ...``.

Exit status is 0 when every check in every manifest passed, 1 when some
check failed, and 2 for an invalid config or unknown fixture.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness.config import ConfigError, load_config
from .harness.fixtures import get_fixture, list_fixtures, run_fixture
from .harness.runner import run

# subcommand -> (scenario kind, runner mode)
_COMMANDS = {
    "verify-space": ("space-verify", None),
    "orbit": ("orbit-ergodic", "orbit"),
    "ergodic": ("orbit-ergodic", None),
    "almost-period": ("almost-period", None),
    "flow": ("flow-ergodic", None),
}


def _add_run_flags(p: argparse.ArgumentParser, source: bool = True):
    if source:
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--config", type=Path, help="TOML experiment file")
        g.add_argument("--fixture", help="name of a built-in fixture")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--serial", action="store_true", help="single-threaded verification mode without warm starts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hadamard", description="Experiments on Hadamard model spaces.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        _add_run_flags(sub.add_parser(name, help=f"run a {_COMMANDS[name][0]} experiment"))
    fx = sub.add_parser("fixtures", help="list built-in fixtures or run them")
    fx.add_argument("--run", nargs="*", metavar="NAME", help="run the named fixtures (all when no name is given)")
    _add_run_flags(fx, source=False)
    return parser


def _diagnose(problems: list[str]) -> int:
    print(json.dumps({"error": "invalid config", "problems": problems}, indent=2), file=sys.stderr)
    return 2


def _report(manifests) -> int:
    for m in manifests:
        status = "PASS" if m.passed else "FAIL"
        print(f"{status} {m.name} ({m.scenario}, {m.wall_time:.2f}s)")
        for c in m.checks:
            mark = "ok  " if c.passed else "FAIL"
            print(f"    {mark} {c.name}: {c.value:.6g} {c.relation} {c.threshold:.6g}")
        if m.error:
            print(f"    error: {m.error}")
    return 0 if all(m.passed for m in manifests) else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        return _diagnose([f"seed must be in [0, 2^64), got {args.seed}"])

    if args.command == "fixtures":
        if args.run is None:
            for name, desc in list_fixtures():
                print(f"{name:24s} {desc}")
            return 0
        names = args.run or [n for n, _ in list_fixtures()]
        out = args.out or Path("runs")
        manifests = []
        try:
            for name in names:
                manifests += run_fixture(name, out / name, serial=args.serial, seed=args.seed)
        except KeyError as exc:
            return _diagnose([exc.args[0]])
        except ConfigError as exc:
            return _diagnose(exc.problems)
        return _report(manifests)

    kind, mode = _COMMANDS[args.command]
    try:
        if args.fixture:
            get_fixture(args.fixture)
            out = args.out or Path("runs") / args.fixture
            manifests = run_fixture(args.fixture, out, serial=args.serial, seed=args.seed, kind=kind, mode=mode)
            if not manifests:
                return _diagnose([f"fixture {args.fixture!r} has no {kind} experiment"])
        else:
            cfg = load_config(args.config)
            if cfg.scenario.kind != kind:
                return _diagnose([f"{args.command} expects a {kind} scenario, the config holds {cfg.scenario.kind}"])
            if args.seed is not None:
                cfg = cfg.with_seed(args.seed)
            manifests = [run(cfg, args.out or Path(cfg.output), serial=args.serial, mode=mode)]
    except KeyError as exc:
        return _diagnose([exc.args[0]])
    except FileNotFoundError as exc:
        return _diagnose([f"cannot read {exc.filename}"])
    except ConfigError as exc:
        return _diagnose(exc.problems)
    return _report(manifests)


if __name__ == "__main__":
    sys.exit(main())
