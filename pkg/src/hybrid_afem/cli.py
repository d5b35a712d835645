"""Command line driver for the sweep, adaptive runs and smoke checks.

Exit status: 0 on success, 2 if an acceptance check failed (with ``--check``
or for smoke runs), 1 on error.
"""
import argparse
import logging
import os
import sys

from . import experiments as ex
from .amr import AmrError

log = logging.getLogger("hybrid_afem")

ESTIMATOR_CHOICES = {"residual": ("residual",), "hybrid": ("hybrid",),
                     "both": ("residual", "hybrid")}


def build_parser():
    p = argparse.ArgumentParser(prog="hybrid-afem", description=__doc__.splitlines()[0])
    p.add_argument("--problem", choices=["1", "2", "3", "conv", "iface"], default="1")
    p.add_argument("--estimator", choices=list(ESTIMATOR_CHOICES), default="both")
    p.add_argument("--epsilon", type=float, default=None,
                   help="diffusion parameter; for problem 1 without --tol a single "
                        "sweep point instead of the full sweep")
    p.add_argument("--theta", type=float, default=0.5, help="bulk marking parameter")
    p.add_argument("--tol", type=float, default=None, help="relative error tolerance")
    p.add_argument("--max-dofs", type=int, default=None)
    p.add_argument("--max-iter", type=int, default=60)
    p.add_argument("--quad-order", type=int, default=7, help="rule order for the error norm")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--check", action="store_true",
                   help="compare against the published reference values")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _report(checks):
    ok = True
    for name, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip())
        ok &= bool(passed)
    return ok


def _sweep(args):
    eps = ex.SWEEP_EPSILONS if args.epsilon is None else (args.epsilon,)
    rows, secs = ex.timed(ex.run_sweep, eps)
    ex.save_sweep(rows, args.out)
    print(f"{'epsilon':>9} {'err':>11} {'eta/err':>8} {'xi/err':>8} {'large':>6}")
    for r in rows:
        print(f"{r.epsilon:9.0e} {r.err:11.4e} {r.eta_effind:8.3f} {r.xi_effind:8.3f} "
              f"{r.large_elements:6d}")
    print(f"sweep: {secs:.2f} s")
    return _report(ex.check_sweep(rows)) if args.check else True


def _amr(args):
    ok = True
    summaries = []
    for est in ESTIMATOR_CHOICES[args.estimator]:
        res, summ = ex.run_amr(args.problem, est, tol=args.tol, theta=args.theta,
                               max_dofs=args.max_dofs, epsilon=args.epsilon,
                               quad_order=args.quad_order, max_iter=args.max_iter)
        ex.save_amr(res, summ, args.out)
        summaries.append(summ)
        print(f"problem {summ.problem} {est:8s} dofs={summ.dofs:6d} rel_err={summ.rel_err:.4e} "
              f"effind={summ.effind:.3f} slope={summ.slope:.3f} iters={summ.iterations} "
              f"({res.reason}, {summ.seconds:.2f} s)")
        if args.check:
            ok &= _report(ex.check_amr(summ))
    ex.save_summary(summaries, args.out)
    return ok


def _smoke(args):
    rep = ex.run_smoke(args.problem)
    print(rep.name)
    return _report(rep.checks)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if not (0 < args.theta <= 1):
            raise ValueError("--theta must lie in (0, 1]")
        os.makedirs(args.out, exist_ok=True)
        if args.problem in ("conv", "iface"):
            ok = _smoke(args)
        elif args.problem == "1" and args.tol is None and args.max_dofs is None:
            ok = _sweep(args)
        else:
            ok = _amr(args)
    except (ValueError, AmrError, OSError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if ok else 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
