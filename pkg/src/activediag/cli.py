"""Command line entry point: ``activediag <subcommand> ...``.

Exit codes: 0 success, 1 validation failure, 2 invariant violation,
64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from activediag.errors import DiagnosisError, ModelError

EXIT_OK, EXIT_INVALID, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_source(p, faults=True):
    p.add_argument("--circuit", help="circuit JSON file (use 'small' for the shipped reconstruction)")
    p.add_argument("--model", help="explicit model JSON file")
    if faults:
        p.add_argument("--faults", help="fault config JSON for --circuit")


def _circuit_arg(value):
    if value == "small":
        from activediag.circuit import small_circuit_path

        return str(small_circuit_path())
    return value


def _model_from(args):
    from activediag.harness import build_model

    return build_model(_circuit_arg(args.circuit), args.model, getattr(args, "faults", None))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="activediag", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("run", help="run policies over true state/mode pairs")
    _add_source(p)
    p.add_argument("--config", help="experiment config JSON (flags override nothing; use one or the other)")
    p.add_argument("-k", "--budget", type=int, default=6)
    p.add_argument("--policy", action="append", dest="policies",
                   help="greedy-partition, greedy-direct, brute-force, random, exact-optimal (repeatable)")
    p.add_argument("--pair", action="append", dest="pairs", metavar="STATE:MODE", help="restrict the sweep (repeatable)")
    p.add_argument("--out", default="results")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=10**7)
    p.add_argument("--factors", type=int, metavar="K", help="also write factors.json for budget K")

    p = sub.add_parser("zeta", help="submodularity factor report")
    _add_source(p)
    p.add_argument("-k", "--budget", type=int, default=2)
    p.add_argument("--depth", type=int, help="depth of the empirical search (default: k)")
    p.add_argument("--cap", type=int, default=10**7)
    p.add_argument("--out", help="write the report JSON here as well")

    p = sub.add_parser("verify", help="invariant sweep on generated instances")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("-k", "--budget", type=int, default=2)
    p.add_argument("--max-k", type=int, default=3)
    p.add_argument("--out", help="write violation witnesses (JSON) here")

    p = sub.add_parser("timing", help="selection latency against the number of modes")
    p.add_argument("--circuit", default="small")
    p.add_argument("--modes", default="1,3,9,27", help="comma separated mode counts")
    p.add_argument("-k", "--budget", type=int, default=6)
    p.add_argument("--sample", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", default="timing.csv")

    p = sub.add_parser("session", help="interactive diagnosis with real outcomes")
    _add_source(p)
    p.add_argument("-k", "--budget", type=int, default=6)

    p = sub.add_parser("validate", help="load and check input files")
    _add_source(p)
    return parser


def _cmd_run(args) -> int:
    from activediag.harness import ExperimentConfig, run_experiment

    if args.config:
        config = ExperimentConfig.from_file(args.config)
    else:
        pairs = None
        if args.pairs:
            pairs = []
            for item in args.pairs:
                if ":" not in item:
                    raise ModelError(f"--pair expects STATE:MODE, got {item!r}")
                pairs.append(tuple(item.split(":", 1)))
        config = ExperimentConfig(
            circuit=_circuit_arg(args.circuit), model=args.model, faults=args.faults, budget=args.budget,
            policies=args.policies or ["greedy-partition", "brute-force"], jobs=args.jobs, out=args.out,
            seed=args.seed, pairs=pairs, factor_budget=args.factors, cap=args.cap,
        )
    summary = run_experiment(config)
    for name, s in summary.policies.items():
        print(f"{name}: runs={s.runs} f_avg={s.f_avg:.6f} latency mean={s.latency_mean * 1e3:.3f} ms")
    if summary.parity_fraction is not None:
        n = len(summary.parity)
        print(f"parity with brute force: {round(summary.parity_fraction * n)}/{n} ({summary.parity_fraction:.4f})")
    print(f"artifacts written to {config.out}")
    return EXIT_OK


def _cmd_zeta(args) -> int:
    from activediag.guarantees import factor_report

    model = _model_from(args)
    report = factor_report(model, args.budget, args.depth, args.cap)
    doc = report.to_dict()
    text = json.dumps(doc, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text)
    for name, lo, hi, ok in report.chain():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {lo!r} <= {hi!r}", file=sys.stderr)
    if report.zero_base_violations:
        print(f"FAIL {len(report.zero_base_violations)} zero-base ratio violation(s)", file=sys.stderr)
    ok = report.chain_holds() and not report.zero_base_violations
    return EXIT_OK if ok else EXIT_VIOLATION


def _cmd_verify(args) -> int:
    from activediag.verify import run_verify

    results = run_verify(args.seed, args.instances, args.depth, args.budget, args.max_k)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if args.out:
        Path(args.out).write_text(json.dumps({r.name: r.violations for r in results}, indent=2, default=str))
    if failed:
        first = failed[0]
        print(f"first violation in {first.name}: {json.dumps(first.violations[0], default=str)[:2000]}")
        return EXIT_VIOLATION
    print(f"all {len(results)} suites passed")
    return EXIT_OK


def _cmd_timing(args) -> int:
    from activediag.harness import timing_scan

    counts = [int(c) for c in args.modes.split(",") if c]
    scan = timing_scan(_circuit_arg(args.circuit), counts, budget=args.budget, sample=args.sample,
                       seed=args.seed, repeats=args.repeats, out=args.out)
    for n, lat, cnt in scan.rows:
        print(f"|Q|={n}: mean selection latency {lat * 1e3:.4f} ms over {cnt} selections")
    if scan.r_squared is not None:
        print(f"linear fit: slope={scan.slope:.3e} s/mode intercept={scan.intercept:.3e} s R^2={scan.r_squared:.4f}")
    return EXIT_OK


def _cmd_session(args) -> int:
    from activediag.policies import interactive_session

    model = _model_from(args)
    record = interactive_session(model, args.budget)
    print(f"final reward {record.final_reward:.6f}; remaining states: {' '.join(sorted(record.final_indistinguishable))}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    from activediag.circuit import load_circuit

    if args.circuit and not args.faults and not args.model:
        c = load_circuit(_circuit_arg(args.circuit))
        print(f"circuit {c.name}: {len(c.action_labels())} actions, {len(c.state_labels())} states, "
              f"{len(c.sensors)} sensors ({len(c.fault_prone_sensors)} fault-prone)")
    model = _model_from(args)
    print(f"ok: {model!r}")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "zeta": _cmd_zeta,
    "verify": _cmd_verify,
    "timing": _cmd_timing,
    "session": _cmd_session,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DiagnosisError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
