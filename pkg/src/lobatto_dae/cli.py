"""Command-line entry point: ``lobatto-dae <subcommand>``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import harness, rstrings, symbols
from .dae import SolverConfig, integrate, trajectory_csv
from .errors import LobattoDAEError
from .problems import PROBLEMS, get_problem
from .tableau import PartitionedTableau, lobatto_pair


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text)


def _cmd_verify(args) -> int:
    reports = []
    for s in args.s:
        pair = lobatto_pair(s)
        if args.perturb:
            i, j, delta = int(args.perturb[0]), int(args.perturb[1]), float(args.perturb[2])
            pair = PartitionedTableau(pair.first.with_entry(i - 1, j - 1, delta), pair.second)
        reports += harness.verify_pair(pair, args.tol)
    print(harness.format_verify_table(reports))
    _write(args.output, harness.verify_csv(reports))
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    return 1 if failed else 0


def _study_values(args) -> dict:
    values = harness.load_config(args.config) if args.config else {}
    for key in ("problem", "omega", "slope", "h0", "ratio", "steps", "T", "tol", "max_iter", "jacobian", "newton"):
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    return values


def _cmd_converge(args) -> int:
    values = _study_values(args)
    stages = args.s or [values.get("s", 2)]
    reports = []
    try:
        for s in stages:
            reports.append(harness.run_convergence(harness.study_from_values({**values, "s": s})))
    except LobattoDAEError as exc:
        print(f"study aborted: {exc}", file=sys.stderr)
        return 2
    print(harness.format_convergence_table(reports))
    output = args.output or values.get("output")
    _write(output, harness.convergence_csv(reports))
    _write(args.summary, harness.convergence_summary_csv(reports))
    return 0 if all(r.passed for r in reports) else 1


def _cmd_rstrings(args) -> int:
    if args.class_of:
        elem = rstrings.parse_rstring(args.class_of)
        max_dim = args.max_dim or rstrings.max_dim_for_order(elem.order)
        text = rstrings.format_edges(rstrings.class_edges(elem, max_dim))
    else:
        elems = rstrings.enumerate_elementary(args.order)
        text = "".join(f"{g}\n" for g in elems)
    sys.stdout.write(text)
    _write(args.output, text)
    return 0


def _cmd_words(args) -> int:
    pair = lobatto_pair(args.s)
    limit = symbols.theorem_range(pair)
    k_max = limit if args.k_max is None else args.k_max
    values = symbols.evaluate_words(pair, k_max)
    _write(args.output, symbols.format_word_csv(values))
    in_range = [v for v in values if v.word.k <= limit]
    bad = [v for v in in_range if v.verdict != "vanishing"]
    for k in range(k_max + 1):
        vk = [abs(v.value) for v in values if v.word.k == k]
        tag = "in range" if k <= limit else "beyond range"
        print(f"k={k} ({tag}): {len(vk)} words, max |value| = {max(vk):.3e}")
    for v in bad:
        print(f"not vanishing: {v.word} = {v.value:.6e} ({v.verdict})")
    return 1 if bad else 0


def _cmd_integrate(args) -> int:
    params = {}
    if args.omega is not None:
        params["omega"] = args.omega
    if args.slope is not None:
        params["slope"] = args.slope
    prob = get_problem(args.problem, **params)
    config = SolverConfig(tol=args.tol, max_iter=args.max_iter, jacobian=args.jacobian, newton=args.newton)
    nsteps = args.nsteps if args.nsteps is not None else int(round(args.T / args.h))
    try:
        traj = integrate(prob, lobatto_pair(args.s), prob.initial, args.h, nsteps, config)
    except LobattoDAEError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return 2
    text = trajectory_csv(prob, traj)
    if args.output:
        _write(args.output, text)
    else:
        sys.stdout.write(text)
    end = traj[-1]
    if prob.exact is not None:
        q, p, lam = prob.exact(end.t)
        err = max(np.max(np.abs(end.q - q)), np.max(np.abs(end.p - p)))
        print(f"t={end.t:.6g} steps={nsteps} endpoint (q,p) error={err:.3e}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lobatto-dae", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="check tableau conditions and the vanishing-word suite")
    v.add_argument("--s", type=int, nargs="+", default=[2, 3, 4, 5])
    v.add_argument("--tol", type=float, default=1e-12)
    v.add_argument("--perturb", nargs=3, metavar=("I", "J", "DELTA"), help="add DELTA to a_IJ (1-based)")
    v.add_argument("--output", help="CSV report path")
    v.set_defaults(func=_cmd_verify)

    c = sub.add_parser("converge", help="run convergence studies and fit observed orders")
    c.add_argument("--config", help="flat key = value file; flags override it")
    c.add_argument("--problem", choices=sorted(PROBLEMS))
    c.add_argument("--s", type=int, nargs="+")
    c.add_argument("--omega", type=float)
    c.add_argument("--slope", type=float)
    c.add_argument("--h0", type=float)
    c.add_argument("--ratio", type=float)
    c.add_argument("--steps", type=int)
    c.add_argument("--T", type=float)
    c.add_argument("--tol", type=float)
    c.add_argument("--max-iter", dest="max_iter", type=int)
    c.add_argument("--jacobian", choices=["analytic", "fd"])
    c.add_argument("--newton", choices=["simplified", "full"])
    c.add_argument("--output", help="per-point CSV path")
    c.add_argument("--summary", help="fit summary CSV path")
    c.set_defaults(func=_cmd_converge)

    r = sub.add_parser("rstrings", help="list elementary R-strings or a class derivation")
    r.add_argument("--order", type=int, default=3)
    r.add_argument("--class", dest="class_of", help="elementary string, e.g. '(3,0)'")
    r.add_argument("--max-dim", type=int)
    r.add_argument("--output")
    r.set_defaults(func=_cmd_rstrings)

    w = sub.add_parser("words", help="evaluate symbol words for a Lobatto pair")
    w.add_argument("--s", type=int, default=4)
    w.add_argument("--k-max", type=int)
    w.add_argument("--output", help="CSV path")
    w.set_defaults(func=_cmd_words)

    i = sub.add_parser("integrate", help="integrate one problem and write the trajectory")
    i.add_argument("--problem", choices=sorted(PROBLEMS), default="particle")
    i.add_argument("--s", type=int, default=3)
    i.add_argument("--h", type=float, default=0.01)
    i.add_argument("--T", type=float, default=1.0)
    i.add_argument("--nsteps", type=int)
    i.add_argument("--omega", type=float)
    i.add_argument("--slope", type=float)
    i.add_argument("--tol", type=float, default=1e-12)
    i.add_argument("--max-iter", dest="max_iter", type=int, default=25)
    i.add_argument("--jacobian", choices=["analytic", "fd"], default="analytic")
    i.add_argument("--newton", choices=["simplified", "full"], default="simplified")
    i.add_argument("--output")
    i.set_defaults(func=_cmd_integrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
