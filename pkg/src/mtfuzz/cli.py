"""Command-line entry point: ``mtfuzz run | solve | oracle | fixtures``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import (FIXTURE_NAMES, BoundTooLarge, CyclicProgramUnsupported, brute_force_solve,
                    fixture_path, load_fixture, oracle_priors)
from .cfa import PriorFinder
from .fuzz import CampaignConfig, ConfigError, TargetParseError, load_target, run_campaign
from .interp import execute
from .solver import SolverConfig, SolverContext, make_target, solve_constraint

EXIT_OK, EXIT_UNSOLVED, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"mtfuzz: error: {message}\n")


def _positive(v: str) -> float:
    x = float(v)
    if x <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def _solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    for name, default in (("plain", 2.0), ("pr", 2.0), ("ps", 10.0), ("jo", 20.0)):
        g.add_argument(f"--budget-{name}", type=_positive, default=default, metavar="SECONDS",
                       help=f"time budget per constraint (default {default:g})")
    for name in ("pr", "ps", "jo"):
        g.add_argument(f"--disable-{name}", action="store_true")
    g.add_argument("--max-restarts", type=int, default=3, metavar="N")
    g.add_argument("--solver-execs", type=int, default=None, metavar="N",
                   help="execution cap per strategy, on top of the time budgets")


def _solver_config(a) -> SolverConfig:
    if a.max_restarts < 0:
        raise ConfigError("--max-restarts must be non-negative")
    return SolverConfig(a.budget_plain, a.budget_pr, a.budget_ps, a.budget_jo,
                        not a.disable_pr, not a.disable_ps, not a.disable_jo,
                        a.max_restarts, a.solver_execs)


def _read_input(a) -> bytes:
    if a.hex is not None:
        try:
            return bytes.fromhex(a.hex)
        except ValueError as e:
            raise ConfigError(f"bad --hex value: {e}") from e
    if a.input is None:
        raise ConfigError("one of --input or --hex is required")
    try:
        return Path(a.input).read_bytes()
    except OSError as e:
        raise ConfigError(str(e)) from e


def _stmt(p, text: str):
    try:
        sid = p.stmt_id(text)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"unknown statement {text!r}") from e
    if sid not in {c.sid for c in p.cond_stmts()}:
        raise ConfigError(f"{text} is not a conditional statement")
    return sid


def cmd_run(a) -> int:
    cfg = CampaignConfig(a.target, a.seeds, a.out, a.time, a.rng_seed, a.workers,
                         _solver_config(a), a.max_attempts, a.max_execs, a.log_implicit)
    stats = run_campaign(cfg)
    print(f"executions {stats.executions}  seeds {stats.seeds}  edges {stats.coverage}  "
          f"stopped by {stats.stopped_by}")
    print(f"constraints discovered {stats.discovered}  solved {stats.solved} "
          + " ".join(f"{k}={v}" for k, v in stats.solved_by.items())
          + f"  unsolved {stats.unsolved}  vanished {stats.vanished}")
    print(f"implicit detections {stats.implicit_detections}  aborts {stats.aborts} "
          f"{stats.abort_tags}")
    return EXIT_OK


def cmd_solve(a) -> int:
    p = load_target(a.target)
    data = _read_input(a)
    r = execute(p, data)
    if a.dump_trace:
        print(r.dump())
    if a.dump_priors:
        pos = r.find(_stmt(p, a.dump_priors), a.occurrence)
        if pos is None:
            raise ConfigError(f"{a.dump_priors} is not reached by the input")
        ps = PriorFinder(p, r).find(pos)
        print(" ".join(f"{r.trace[i].stmt}@{i}" for i in ps.positions) or "(none)")
    if a.stmt is None:
        return EXIT_OK
    ctx = SolverContext.for_program(p, _solver_config(a), seed=a.rng_seed,
                                    implicit_log=print if a.log_implicit else None)
    try:
        t = make_target(ctx, data, _stmt(p, a.stmt), a.branch == "t", a.occurrence)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    print(f"priors {[str(s) for s in t.priors.stmts(t.result)]}  "
          f"effective {[str(t.entry(i).stmt) for i in t.effective.positions]}")
    out = solve_constraint(t, ctx)
    print(f"{out.status.value} by {out.strategy} after {' -> '.join(out.attempts)}; "
          f"{out.executions} executions" + (f"; {out.reason}" if out.reason else ""))
    if out.solved:
        print(f"input {out.input.hex()}")
        if a.out:
            Path(a.out).write_bytes(out.input)
        return EXIT_OK
    return EXIT_UNSOLVED


def cmd_oracle(a) -> int:
    p = load_target(a.target)
    if a.mode == "brute":
        if a.length is None:
            raise ConfigError("--length is required for brute")
        positions = [int(x) for x in a.positions.split(",")] if a.positions else None
        base = bytes.fromhex(a.hex) if a.hex else None
        try:
            w = brute_force_solve(p, _stmt(p, a.stmt), a.branch == "t", a.length, positions,
                                  base, a.samples)
        except BoundTooLarge as e:
            raise ConfigError(str(e)) from e
        print(w.hex() if w is not None else "none")
        return EXIT_OK if w is not None else EXIT_UNSOLVED
    data = _read_input(a)
    r = execute(p, data)
    pos = r.find(_stmt(p, a.stmt), 0)
    if pos is None:
        raise ConfigError(f"{a.stmt} is not reached by the input")
    try:
        got = oracle_priors(p, r, pos, data)
    except CyclicProgramUnsupported as e:
        raise ConfigError(str(e)) from e
    print(" ".join(f"{r.trace[i].stmt}@{i}" for i in got) or "(none)")
    return EXIT_OK


def cmd_fixtures(a) -> int:
    for name in FIXTURE_NAMES:
        spec = load_fixture(name)
        print(f"{name:16s} {spec.input_length:2d} bytes  {spec.notes}")
        if a.export:
            d = Path(a.export)
            (d / "seeds" / name).mkdir(parents=True, exist_ok=True)
            (d / f"{name}.mtt").write_text(fixture_path(name).read_text("utf-8"))
            for i, s in enumerate(spec.seeds):
                (d / "seeds" / name / f"seed{i:03d}.bin").write_bytes(s)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mtfuzz", description="Greybox fuzzer for deeply nested branch constraints")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a fuzzing campaign")
    r.add_argument("--target", required=True, help="target program (.mtt)")
    r.add_argument("--seeds", required=True, help="directory of seed inputs")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--time", type=_positive, default=60.0, metavar="SECS")
    r.add_argument("--rng-seed", type=int, default=0)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--max-attempts", type=int, default=2, help="solve attempts per constraint")
    r.add_argument("--max-execs", type=int, default=None, help="campaign execution cap")
    r.add_argument("--log-implicit", action="store_true")
    _solver_flags(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("solve", help="solve one branch constraint")
    s.add_argument("--target", required=True)
    s.add_argument("--input", help="discovering input file")
    s.add_argument("--hex", help="discovering input as hex")
    s.add_argument("--stmt", help="statement id, e.g. 1:5 or foo:5")
    s.add_argument("--branch", choices=("t", "f"), default="t")
    s.add_argument("--occurrence", type=int, default=0)
    s.add_argument("--rng-seed", type=int, default=0)
    s.add_argument("--out", help="write the solving input here")
    s.add_argument("--dump-trace", action="store_true")
    s.add_argument("--dump-priors", metavar="ID")
    s.add_argument("--log-implicit", action="store_true")
    _solver_flags(s)
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", help="brute-force witness search or prior oracle")
    o.add_argument("mode", choices=("brute", "priors"))
    o.add_argument("--target", required=True)
    o.add_argument("--stmt", required=True)
    o.add_argument("--branch", choices=("t", "f"), default="t")
    o.add_argument("--length", type=int)
    o.add_argument("--positions", help="comma-separated byte offsets to enumerate (max 4)")
    o.add_argument("--samples", type=int, help="random samples instead of enumeration")
    o.add_argument("--input")
    o.add_argument("--hex", help="base input (brute) or input (priors) as hex")
    o.set_defaults(func=cmd_oracle)

    f = sub.add_parser("fixtures", help="list (and optionally export) built-in targets")
    f.add_argument("--export", metavar="DIR")
    f.set_defaults(func=cmd_fixtures)
    return ap


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if (a.verbose or getattr(a, "log_implicit", False))
                        else logging.WARNING, format="%(message)s")
    try:
        return a.func(a)
    except (ConfigError, TargetParseError) as e:
        print(f"mtfuzz: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
