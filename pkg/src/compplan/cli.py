"""Command line entry point: ``compplan {gen,plan,bench,verify}``.

Exit status: 0 success, 1 a planner did not converge, 2 an oracle check
failed, 3 bad usage.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import ALGORITHMS, DOMAINS, RunSpec, bench_table, run, to_csv, verify
from .mdp import ConfigurationError

EXIT_OK, EXIT_NONCONVERGED, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_sizes(text: str) -> list[int]:
    """``"3"``, ``"1-8"`` or ``"2,3,4"``."""
    sizes = []
    try:
        for part in text.split(","):
            if "-" in part:
                lo, hi = part.split("-")
                sizes.extend(range(int(lo), int(hi) + 1))
            else:
                sizes.append(int(part))
    except ValueError:
        raise UsageError(f"bad size list {text!r}") from None
    if not sizes:
        raise UsageError("empty size list")
    return sizes


def parse_algos(text: str) -> list[str]:
    algos = ALGORITHMS if text == "all" else text.split(",")
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad:
        raise UsageError(f"unknown algorithm(s) {bad}; choose from {ALGORITHMS} or 'all'")
    return list(algos)


def _spec(args, size: int, algo: str) -> RunSpec:
    return RunSpec(
        domain=args.domain,
        size=size,
        algorithm=algo,
        stochastic=args.stochastic,
        slip=args.slip,
        eps=args.eps,
        max_iters=args.max_iters,
        subgoal_k=args.subgoal_k,
        goal_corner=args.goal_corner,
        seed=args.seed,
    )


def _write(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_gen(args) -> int:
    mdp, _ = _spec(args, parse_sizes(args.size)[0], "apmi").build()
    _write(json.dumps(mdp.to_json()) + "\n", args.out)
    return EXIT_OK


def cmd_plan(args) -> int:
    sizes, algos = parse_sizes(args.size), parse_algos(args.algo)
    if len(sizes) != 1 or len(algos) != 1:
        raise UsageError("plan takes a single --size and a single --algo")
    res = run(_spec(args, sizes[0], algos[0]))
    rep = res.report
    print(f"{res.mdp.name}: {args.algo} {'converged' if rep.converged else 'DID NOT CONVERGE'}")
    print(f"  iterations        {rep.iterations}")
    print(f"  backups per state {rep.backups_per_state:.3f}")
    print(f"  value at start    {res.value_at_start:.9g}")
    print(f"  runtime           {res.runtime_ms:.1f} ms")
    if args.out:
        Path(args.out).write_text(to_csv([res]))
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def cmd_bench(args) -> int:
    specs = [_spec(args, n, a) for n in parse_sizes(args.size) for a in parse_algos(args.algo)]
    csv_text, table, results = bench_table(specs)
    if args.out:
        Path(args.out).write_text(csv_text)
    else:
        sys.stdout.write(csv_text + "\n")
    sys.stdout.write(table)
    return EXIT_OK if all(r.report.converged for r in results) else EXIT_NONCONVERGED


def cmd_verify(args) -> int:
    stalled = failed = False
    for size in parse_sizes(args.size):
        for algo in parse_algos(args.algo):
            rep = verify(_spec(args, size, algo), args.tol)
            line = f"{rep.result.mdp.name} {algo}: gap {rep.gap:.3g} (tol {rep.tol:g})"
            if rep.enumeration_gap is not None:
                line += f", enumeration gap {rep.enumeration_gap:.3g}"
            if not rep.converged:
                stalled = True
                print(line + "  NOT CONVERGED")
            else:
                failed |= not rep.ok
                print(line + ("  ok" if rep.ok else "  FAIL"))
    if stalled:
        return EXIT_NONCONVERGED
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--domain", choices=DOMAINS, required=True)
    common.add_argument("--size", default="1", help="problem size: N, a range lo-hi, or a list a,b,c")
    common.add_argument("--stochastic", action="store_true")
    common.add_argument("--slip", type=float, default=None, help="slip probability (domain default if unset)")
    common.add_argument("--algo", default="oomi", help="apmi, aopmi, oomi, a comma list, or 'all'")
    common.add_argument("--eps", type=float, default=None,
                        help="convergence threshold (default: exact for deterministic, 1e-6 otherwise)")
    common.add_argument("--max-iters", type=int, default=10**6)
    common.add_argument("--subgoal-k", type=float, default=None)
    common.add_argument("--goal-corner", default="nw", choices=("nw", "ne", "sw", "se"))
    common.add_argument("--out", default=None, help="output file (stdout if unset)")
    common.add_argument("--seed", type=int, default=0, help="seed for the random domain")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="compplan", description="Compositional planning with option models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[common], help="write an MDP as JSON").set_defaults(func=cmd_gen)
    sub.add_parser("plan", parents=[common], help="plan one instance").set_defaults(func=cmd_plan)
    b = sub.add_parser("bench", parents=[common], help="sweep sizes and algorithms")
    b.set_defaults(func=cmd_bench)
    v = sub.add_parser("verify", parents=[common], help="compare against oracle values")
    v.add_argument("--tol", type=float, default=None)
    v.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"compplan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
