"""Command-line entry point: run, sweep, eval, check-halfspace, check-gamma, fit."""
from __future__ import annotations

import argparse
import itertools
import sys

import numpy as np

from .bench import (DEFAULT_CLASS, ResultsTable, SweepConfig, build_class, fit_rate, format_fit,
                    load_class, parse_kv, result_row, run_sweep, strictly_decreasing)
from .core import Transcript, Universe, make_rng, read_contexts, table_class
from .gftpl import GammaSpec, materialize_gamma, perturbation, verify_admissibility
from .halfspace import random_guarantee_sweep
from .mcerror import k_error_all
from .reduction import LEARNERS, ExperimentConfig, max_chain_violation, run_experiment
from .streams import STREAM_KINDS, StreamSpec


def _class_from_arg(path: str | None):
    return load_class(path) if path else build_class(DEFAULT_CLASS)


def _stream_from_args(args) -> StreamSpec:
    weights = None
    if args.stream_weights:
        weights = tuple(float(v) for v in args.stream_weights.replace(",", " ").split())
    return StreamSpec(args.stream, bias=args.bias, weights=weights, script=args.script)


def cmd_run(args) -> int:
    hclass = _class_from_arg(args.class_spec)
    cfg = ExperimentConfig(hclass, args.T, args.learner, args.seed, args.m, args.epsilon,
                           _stream_from_args(args))
    result = run_experiment(cfg)
    if args.transcript:
        result.transcript.save(args.transcript)
    row = result_row(result, timing=not args.no_timing)
    table = ResultsTable([row], {"learner": args.learner, "T": str(args.T),
                                 "seed": str(args.seed), "stream": args.stream,
                                 "class": args.class_spec or "default"})
    if args.results:
        table.save(args.results)
    sys.stdout.write(table.emit())
    chain = max_chain_violation(result)
    if chain > 1e-12:
        print(f"per-round halfspace chain violated by {chain:.3e}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args) -> int:
    overrides = {}
    for item in args.set or []:
        overrides.update(parse_kv(item))
    for key in ("learner", "T", "seeds", "output", "workers", "m", "epsilon"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = str(val)
    if args.no_timing:
        overrides["timing"] = "false"
    if args.config:
        cfg = SweepConfig.from_file(args.config, overrides)
    else:
        cfg = SweepConfig.from_mapping(overrides)
    table = run_sweep(cfg)
    if not cfg.output:
        sys.stdout.write(table.emit())
    try:
        fit = fit_rate(table)
    except ValueError:
        return 0
    print(format_fit(fit), file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    transcript = Transcript.load(args.transcript)
    hclass = _class_from_arg(args.class_spec)
    errs = k_error_all(transcript, hclass)
    for k, e in enumerate(errs):
        print(f"h{k},{float(e)!r}")
    k = int(np.argmax(errs))
    print(f"max,{float(errs[k])!r},h{k}")
    return 0


def cmd_check_halfspace(args) -> int:
    worst = random_guarantee_sweep(args.draws, make_rng(args.seed))
    ok = worst <= args.tol
    print(f"halfspace guarantee: max(value - B/m) = {worst:.3e} "
          f"over {args.draws} draws -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _binary_classes(D: int, max_size: int):
    """Every nonempty set of at most ``max_size`` distinct nonzero binary tables over D points."""
    tables = [t for t in itertools.product((0, 1), repeat=D) if any(t)]
    for size in range(1, max_size + 1):
        yield from itertools.combinations(tables, size)


def gamma_checks(max_h: int = 8, max_M: int = 4, max_D: int = 4, seed: int = 0,
                 exhaustive_D: int = 3, samples: int = 200) -> tuple[bool, list[str]]:
    """Admissibility and implementability over small binary table classes.

    Classes over D <= ``exhaustive_D`` separator points are enumerated and checked one by
    one.  For every D the class of all nonzero tables is also checked: Gamma of a subclass
    is a row subset of its Gamma, and distinct rows and column gaps >= 1 are inherited by
    row subsets, so this covers every class over that separator.  Larger D additionally get
    ``samples`` random classes checked directly.
    """
    rng = make_rng(seed)
    ok, report = True, []
    for D in range(1, max_D + 1):
        universe = Universe(rng.random((D, 2)))
        tables = [t for t in itertools.product((0, 1), repeat=D) if any(t)]
        if D <= exhaustive_D:
            classes = list(_binary_classes(D, max_h))
        else:
            classes = []
            for _ in range(samples):
                size = int(rng.integers(1, min(max_h, len(tables)) + 1))
                pick = rng.choice(len(tables), size=size, replace=False)
                classes.append(tuple(tables[i] for i in sorted(pick)))
        classes.append(tuple(tables))
        worst_gap, n = np.inf, 0
        for tabs in classes:
            hclass = table_class(universe, tabs)
            for M in range(1, max_M + 1):
                good, gap = verify_admissibility(GammaSpec(universe.contexts, M), hclass)
                ok &= good
                worst_gap = min(worst_gap, gap)
                n += 1
        report.append(f"D={D}: {n} (class, M) cases, smallest column gap {worst_gap}")
    # implementability: factored perturbation against explicit <alpha, Gamma row>
    worst = 0.0
    for D in (1, 2, 3):
        universe = Universe(rng.random((D, 2)))
        for M in (1, 2, 3, 4):
            tabs = [t for t in itertools.product((0, 1), repeat=D) if any(t)]
            hclass = table_class(universe, tabs)
            spec = GammaSpec(universe.contexts, M)
            G, labels = materialize_gamma(spec, hclass)
            for _ in range(10):
                alpha = rng.uniform(0, 10, size=(D, M))
                explicit = G @ alpha.ravel()
                factored = np.array([perturbation(spec, alpha, hclass[k], np.array(th))
                                     for k, th in labels])
                worst = max(worst, float(np.max(np.abs(explicit - factored))))
    ok &= worst <= 1e-12
    report.append(f"implementability: max |factored - explicit| = {worst:.3e}")
    return bool(ok), report


def check_class_gamma(hclass, separator, m: int, seed: int = 0,
                      n_alpha: int = 100) -> tuple[bool, list[str]]:
    """Admissibility of one class over a separator, plus the implementability identity."""
    spec = GammaSpec(separator, m + 1)
    ok, gap = verify_admissibility(spec, hclass)
    report = [f"admissible={ok} smallest column gap={gap}"]
    G, labels = materialize_gamma(spec, hclass)
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(n_alpha):
        alpha = rng.uniform(0.0, 1.0, size=(spec.D, spec.grid_size))
        explicit = G @ alpha.ravel()
        factored = np.array([perturbation(spec, alpha, hclass[k], np.array(th))
                             for k, th in labels])
        worst = max(worst, float(np.max(np.abs(explicit - factored))))
    report.append(f"implementability: max |factored - explicit| = {worst:.3e}")
    return ok and worst <= 1e-12, report


def cmd_check_gamma(args) -> int:
    if args.class_spec:
        hclass = load_class(args.class_spec)
        if args.separator:
            separator = read_contexts(args.separator)
        elif hclass.universe is not None:
            separator = hclass.universe.contexts
        else:
            print("check-gamma needs a separator file for classes without a universe",
                  file=sys.stderr)
            return 2
        ok, report = check_class_gamma(hclass, separator, args.m, args.seed)
    else:
        ok, report = gamma_checks(seed=args.seed)
    for line in report:
        print(line)
    print("Gamma admissibility and implementability:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_fit(args) -> int:
    rows, header = [], {}
    for path in args.results:
        t = ResultsTable.load(path)
        rows.extend(t.rows)
        header.update(t.header)
    fit = fit_rate(ResultsTable(rows, header))
    print(format_fit(fit))
    ok = True
    if args.max_slope is not None and fit.slope > args.max_slope:
        print(f"slope {fit.slope:.4f} exceeds {args.max_slope}")
        ok = False
    if args.decreasing and not strictly_decreasing(fit.mean_K):
        print("mean K is not strictly decreasing in T")
        ok = False
    return 0 if ok else 1


def _add_stream_args(p):
    p.add_argument("--stream", choices=STREAM_KINDS, default="stochastic-linear")
    p.add_argument("--bias", type=float, default=0.5)
    p.add_argument("--stream-weights", help="comma separated label weights a in g(x)=b+<a,x>")
    p.add_argument("--script", help="scripted stream file: context columns then a label")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multical", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one experiment: transcript plus a results row")
    p.add_argument("--learner", choices=LEARNERS, default="linolpo")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class", dest="class_spec", help="JSON hypothesis class spec")
    _add_stream_args(p)
    p.add_argument("--transcript", help="write the transcript here")
    p.add_argument("--results", help="write the results row here")
    p.add_argument("--no-timing", action="store_true", help="record wall_ms as 0")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="T x seed sweep from a key = value config")
    p.add_argument("--config")
    p.add_argument("--learner", choices=LEARNERS)
    p.add_argument("--T", help="space or comma separated, 2^k allowed")
    p.add_argument("--seeds", type=int, help="number of seeds 0..n-1")
    p.add_argument("--m", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--output")
    p.add_argument("--set", action="append", help="extra key=value override")
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="K per hypothesis for a saved transcript")
    p.add_argument("transcript")
    p.add_argument("--class", dest="class_spec")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check-halfspace", help="randomized halfspace guarantee check")
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_check_halfspace)

    p = sub.add_parser("check-gamma", help="Gamma admissibility and implementability")
    p.add_argument("--class", dest="class_spec", help="check one table class instead")
    p.add_argument("--separator", help="separator contexts file (default: the class universe)")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check_gamma)

    p = sub.add_parser("fit", help="log-log rate fit of results files")
    p.add_argument("results", nargs="+")
    p.add_argument("--max-slope", type=float)
    p.add_argument("--decreasing", action="store_true")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
