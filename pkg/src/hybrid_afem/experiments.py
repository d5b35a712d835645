"""Experiment drivers: epsilon sweep, adaptive runs, smoke checks, file output."""
import csv
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List

import numpy as np

from .amr import AmrConfig, adaptive_solve, solve_on
from .fem import assemble_galerkin, assemble_supg, energy_norm_error, solve
from .hybrid import xi
from .mesh import build_initial_mesh, uniform_refine, write_mesh
from .problems import DEFAULT_TOL, define_problem, interface_smoke
from .recovery import conformity_defect, divergence_defect
from .residual import eta, residual_parts

SWEEP_EPSILONS = (1e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 1.0, 10.0, 100.0)

# Published reference values: epsilon -> (eta effectivity, xi effectivity) on the
# 10x10 split-square mesh, and adaptive-run end points (DOFs, effectivity).
REFERENCE_SWEEP = {
    1e-5: (0.66, 0.80), 1e-4: (0.66, 0.84), 5e-4: (0.93, 1.09), 1e-3: (1.21, 1.35),
    5e-3: (2.22, 1.20), 1e-2: (2.81, 1.28), 5e-2: (4.83, 1.38), 1e-1: (5.58, 1.38),
    1.0: (5.57, 1.36), 10.0: (5.56, 1.36), 100.0: (5.56, 1.36),
}
REFERENCE_AMR = {
    ("2", "residual"): (10987, 5.11), ("2", "hybrid"): (9383, 1.80),
    ("3", "residual"): (16217, 5.74), ("3", "hybrid"): (13664, 1.88),
}
SWEEP_TOL = 0.10
AMR_EFF_TOL = 0.15
AMR_DOF_TOL = 0.25
SLOPE_RANGE = (-0.60, -0.42)
ETA_SPREAD_RANGE = (7.0, 10.0)
XI_SPREAD_MAX = 2.0


@dataclass
class SweepRow:
    epsilon: float
    err: float
    eta: float
    xi: float
    eta_effind: float
    xi_effind: float
    large_elements: int


def evaluate_fixed(mesh, problem):
    """Solve and estimate on a fixed mesh; returns (solution, err, eta field, xi breakdown)."""
    data = problem.data
    uh = solve_on(mesh, data)
    err = energy_norm_error(mesh, data, uh, problem.exact_u, problem.exact_grad).energy
    return uh, err, eta(mesh, uh, data), xi(mesh, uh, data)


def run_sweep(epsilons=SWEEP_EPSILONS, n=10, problem_id="1"):
    """Effectivity indices of both estimators on the fixed n x n split-square mesh."""
    mesh = build_initial_mesh(n, n)
    rows = []
    for e in epsilons:
        p = define_problem(problem_id, e)
        _, err, ef, hb = evaluate_fixed(mesh, p)
        rows.append(SweepRow(float(e), err, ef.total, hb.total, ef.total / err, hb.total / err,
                             int(hb.recovered.large.sum())))
    return rows


def check_sweep(rows):
    """Acceptance checks on a sweep; returns list of (name, passed, detail)."""
    out = []
    for r in rows:
        ref = REFERENCE_SWEEP.get(r.epsilon)
        if ref is None:
            continue
        for name, got, want in (("eta", r.eta_effind, ref[0]), ("xi", r.xi_effind, ref[1])):
            rel = got / want - 1
            out.append((f"sweep eps={r.epsilon:g} {name}", abs(rel) <= SWEEP_TOL,
                        f"{got:.3f} vs {want:.2f} ({rel:+.1%})"))
    e = np.array([r.eta_effind for r in rows])
    x = np.array([r.xi_effind for r in rows])
    se, sx = e.max() / e.min(), x.max() / x.min()
    out.append(("eta spread", ETA_SPREAD_RANGE[0] <= se <= ETA_SPREAD_RANGE[1], f"{se:.2f}"))
    out.append(("xi spread", sx <= XI_SPREAD_MAX, f"{sx:.2f}"))
    return out


@dataclass
class AmrSummary:
    problem: str
    estimator: str
    dofs: int
    elements: int
    rel_err: float
    effind: float
    slope: float
    iterations: int
    seconds: float
    converged: bool


def run_amr(problem_id, estimator="hybrid", tol=None, theta=0.5, max_dofs=None,
            epsilon=None, quad_order=7, check_properties=False, max_iter=60):
    """Adaptive run from the 4 x 4 initial mesh; returns (AmrResult, AmrSummary)."""
    p = define_problem(problem_id, epsilon)
    if tol is None and max_dofs is None:
        tol = DEFAULT_TOL.get(p.id)
    cfg = AmrConfig(theta_d=theta, tol=tol, max_dofs=max_dofs, estimator=estimator,
                    quad_order=quad_order, check_properties=check_properties,
                    max_iter=max_iter)
    res = adaptive_solve(p, cfg)
    tr = res.trace
    try:
        slope = tr.decay_slope()
    except ValueError:
        slope = float("nan")
    ref = p.reference_norm(cfg.reference_norm)
    last = tr.last
    summary = AmrSummary(p.id, estimator, last.dofs, last.elements,
                         last.err / ref if ref else float("nan"), last.effind, slope,
                         len(tr.records), last.seconds, res.converged)
    return res, summary


def check_amr(summary):
    out = []
    ref = REFERENCE_AMR.get((summary.problem, summary.estimator))
    tag = f"problem {summary.problem} {summary.estimator}"
    out.append((f"{tag} converged", summary.converged, ""))
    if ref is not None:
        rd = summary.dofs / ref[0] - 1
        re = summary.effind / ref[1] - 1
        out.append((f"{tag} dofs", abs(rd) <= AMR_DOF_TOL, f"{summary.dofs} vs {ref[0]} ({rd:+.1%})"))
        out.append((f"{tag} effind", abs(re) <= AMR_EFF_TOL,
                    f"{summary.effind:.3f} vs {ref[1]:.2f} ({re:+.1%})"))
    lo, hi = SLOPE_RANGE
    out.append((f"{tag} slope", lo <= summary.slope <= hi, f"{summary.slope:.3f}"))
    return out


# ---------------------------------------------------------------------------
# Smoke checks
# ---------------------------------------------------------------------------
@dataclass
class SmokeReport:
    name: str
    checks: List[tuple] = field(default_factory=list)
    values: Dict[str, object] = field(default_factory=dict)

    def add(self, name, passed, detail=""):
        self.checks.append((name, bool(passed), detail))

    @property
    def passed(self):
        return all(c[1] for c in self.checks)


def smoke_convection(levels=3, epsilon=1e-3, n0=4):
    """SUPG path with beta = 0: weights, small-path recovery, boundedness, decay."""
    rep = SmokeReport("convection-smoke")
    p = define_problem("conv", epsilon)
    data = p.data
    # one bisection round first, so every level shares the same diagonal pattern
    mesh = uniform_refine(build_initial_mesh(n0, n0), 2)
    etas, xis, errs = [], [], []
    for lev in range(levels):
        uh = solve(assemble_supg(mesh, data))
        parts = residual_parts(mesh, uh, data)
        rep.add(f"level {lev}: gamma == 1", np.all(parts.gamma_k == 1.0) and np.all(parts.gamma_e == 1.0))
        hb = xi(mesh, uh, data)
        rep.add(f"level {lev}: all elements small", not hb.recovered.large.any())
        vb = data.dirichlet(mesh.vertices[:, 0], mesh.vertices[:, 1])
        bmax = np.abs(vb[mesh.dirichlet_vertices]).max()
        umax = np.abs(uh.values).max()
        rep.add(f"level {lev}: max|u_T| within 20% of max|g_D|", umax <= 1.2 * bmax,
                f"{umax:.4f} vs {bmax:.4f}")
        ev = eta(mesh, uh, data).total
        rep.add(f"level {lev}: estimators finite", np.isfinite(ev) and np.isfinite(hb.total))
        etas.append(ev)
        xis.append(hb.total)
        errs.append(energy_norm_error(mesh, data, uh, p.exact_u, p.exact_grad).energy)
        if lev + 1 < levels:
            mesh = uniform_refine(mesh, 2)
    rep.add("eta decays under refinement", all(b < a for a, b in zip(etas, etas[1:])),
            " ".join(f"{v:.3e}" for v in etas))
    rep.add("xi decays under refinement", all(b < a for a, b in zip(xis, xis[1:])),
            " ".join(f"{v:.3e}" for v in xis))
    # a = 0: SUPG reduces to Galerkin
    p0 = define_problem("conv", epsilon, advection=(0.0, 0.0))
    m0 = build_initial_mesh(8, 8)
    ug = solve(assemble_galerkin(m0, p0.data)).values
    us = solve(assemble_supg(m0, p0.data)).values
    diff = np.abs(ug - us).max()
    rep.add("a = 0: SUPG equals Galerkin", diff <= 1e-10 * max(1.0, np.abs(ug).max()), f"{diff:.1e}")
    rep.values.update(eta=etas, xi=xis, err=errs)
    return rep


def smoke_interface(jumps=(1.0, 10.0, 100.0, 1e3, 1e4), n=8, refinements=1):
    """Checkerboard alpha: conformity of the recovered flux and bounded ratios."""
    rep = SmokeReport("interface-smoke")
    mesh = uniform_refine(build_initial_mesh(n, n), refinements)
    ratios = []
    for jump in jumps:
        p = interface_smoke(jump)
        uh = solve(assemble_galerkin(mesh, p.data))
        ef = eta(mesh, uh, p.data)
        hb = xi(mesh, uh, p.data)
        edge, iface = conformity_defect(hb.recovered)
        rep.add(f"jump {jump:g}: H(div) conformity", max(edge, iface) <= 1e-10, f"{edge:.1e}")
        dd = divergence_defect(hb.recovered)
        rep.add(f"jump {jump:g}: divergence identity", dd <= 1e-12, f"{dd:.1e}")
        pos = ef.indicators > 0
        loc = float((hb.indicators[pos] / ef.indicators[pos]).max())
        glob = hb.total / ef.total
        ratios.append((glob, loc))
        rep.values[f"jump {jump:g}"] = dict(eta=ef.total, xi=hb.total, ratio=glob, local=loc)
        if jump == 1.0:
            ref = define_problem("iface", jump=1.0)
            ref.data.alpha = 1.0
            uc = solve(assemble_galerkin(mesh, ref.data))
            ec, xc = eta(mesh, uc, ref.data).total, xi(mesh, uc, ref.data).total
            dev = max(abs(ec - ef.total) / ec, abs(xc - hb.total) / xc)
            rep.add("jump 1 matches constant alpha", dev <= 1e-12, f"{dev:.1e}")
    g = np.array([r[0] for r in ratios])
    loc = np.array([r[1] for r in ratios])
    rep.add("global xi/eta bounded across jumps", g.max() / g.min() <= 2.0,
            " ".join(f"{v:.3f}" for v in g))
    rep.add("local max xi_K/eta_K bounded across jumps", loc.max() / loc.min() <= 2.0,
            " ".join(f"{v:.3f}" for v in loc))
    return rep


def run_smoke(name):
    key = {"conv": "conv", "convection-smoke": "conv",
           "iface": "iface", "interface-smoke": "iface"}.get(name)
    if key is None:
        raise ValueError(f"unknown smoke problem {name!r}")
    return smoke_convection() if key == "conv" else smoke_interface()


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------
def write_rows(path, rows):
    rows = [asdict(r) for r in rows]
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.10e}" if isinstance(v, float) else v) for k, v in r.items()})


def write_plotdata(path, x, y):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for a, b in zip(x, y):
            w.writerow([f"{a:.10e}", f"{b:.10e}"])


def save_sweep(rows, out):
    os.makedirs(out, exist_ok=True)
    write_rows(os.path.join(out, "sweep.csv"), rows)
    eps = [r.epsilon for r in rows]
    write_plotdata(os.path.join(out, "plotdata_sweep_eta.csv"), eps, [r.eta_effind for r in rows])
    write_plotdata(os.path.join(out, "plotdata_sweep_xi.csv"), eps, [r.xi_effind for r in rows])


def save_amr(result, summary, out):
    os.makedirs(out, exist_ok=True)
    tag = f"{summary.problem}_{summary.estimator}"
    result.trace.write_csv(os.path.join(out, f"trace_{tag}.csv"))
    write_mesh(result.mesh, os.path.join(out, f"mesh_final_{tag}.txt"))
    write_mesh(result.mesh, os.path.join(out, "mesh_final.txt"))
    tr = result.trace
    dofs = tr.column("dofs")
    write_plotdata(os.path.join(out, f"plotdata_{tag}_err.csv"), dofs, tr.column("err"))
    est = tr.column("eta" if summary.estimator == "residual" else "xi")
    write_plotdata(os.path.join(out, f"plotdata_{tag}_estimator.csv"), dofs, est)


def save_summary(summaries, out):
    os.makedirs(out, exist_ok=True)
    write_rows(os.path.join(out, "summary.csv"), summaries)


def timed(fn, *a, **kw):
    t = time.perf_counter()
    r = fn(*a, **kw)
    return r, time.perf_counter() - t

