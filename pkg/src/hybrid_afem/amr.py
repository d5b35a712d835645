"""Adaptive loop: solve, estimate, mark (bulk criterion), bisect."""
import csv
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .fem import assemble_galerkin, assemble_supg, energy_norm_error, solve
from .hybrid import xi
from .mesh import bisect, build_initial_mesh, is_conforming
from .recovery import conformity_defect, divergence_defect
from .residual import eta

ESTIMATORS = ("residual", "hybrid")
TRACE_COLUMNS = ("iter", "dofs", "elements", "err", "eta", "xi", "effind", "seconds")


class AmrError(RuntimeError):
    """Adaptive run failed; ``trace`` holds the iterations completed so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class AmrConfig:
    theta_d: float = 0.5
    tol: Optional[float] = None
    max_dofs: Optional[int] = None
    max_iter: int = 60
    estimator: str = "hybrid"
    stop_on: str = "error"          # "error" (true error) or "estimator"
    reference_norm: str = "l2"      # norm of u in the relative stopping rule
    delta0: float = 0.5
    quad_order: int = 7
    check_properties: bool = False
    initial_n: int = 4

    def __post_init__(self):
        if not (0 < self.theta_d <= 1):
            raise ValueError("theta_d must lie in (0, 1]")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.stop_on not in ("error", "estimator"):
            raise ValueError("stop_on must be 'error' or 'estimator'")
        if self.tol is not None and self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class AmrRecord:
    iter: int
    dofs: int
    elements: int
    err: float
    eta: float
    xi: float
    effind: float
    seconds: float
    conformity: float = float("nan")
    divergence: float = float("nan")
    ratio_xi_eta: float = float("nan")
    ratio_eta_xi: float = float("nan")


@dataclass
class AmrTrace:
    estimator: str
    records: List[AmrRecord] = field(default_factory=list)

    def append(self, rec):
        if self.records and rec.dofs <= self.records[-1].dofs:
            raise AmrError("DOF count did not increase", self)
        self.records.append(rec)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def last(self):
        return self.records[-1]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow([r.iter, r.dofs, r.elements, f"{r.err:.10e}", f"{r.eta:.10e}",
                            f"{r.xi:.10e}", f"{r.effind:.10e}", f"{r.seconds:.4f}"])

    def decay_slope(self, decades=1.0):
        """Least-squares slope of log err vs log DOFs over the last ``decades``."""
        dofs = self.column("dofs").astype(float)
        err = self.column("err")
        sel = dofs >= dofs[-1] / 10 ** decades
        if sel.sum() < 2:
            raise ValueError("not enough iterations in the final decade")
        return float(np.polyfit(np.log(dofs[sel]), np.log(err[sel]), 1)[0])


@dataclass
class AmrResult:
    solution: object
    mesh: object
    trace: AmrTrace
    converged: bool
    reason: str


def dorfler_mark(indicators, theta_d=0.5):
    """Minimal set carrying theta_d of the total squared indicator.

    Greedy on squared indicators sorted descending, ties by id ascending.
    Returns sorted element ids; empty if all indicators vanish.
    """
    ind = np.asarray(indicators, dtype=float)
    if ind.ndim != 1:
        raise ValueError("indicators must be one-dimensional")
    if np.any(ind < 0) or not np.all(np.isfinite(ind)):
        raise ValueError("indicators must be finite and nonnegative")
    if not (0 < theta_d <= 1):
        raise ValueError("theta_d must lie in (0, 1]")
    sq = ind * ind
    total = sq.sum()
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(sq)), -sq))
    cum = np.cumsum(sq[order])
    n = int(np.searchsorted(cum, theta_d * total, side="left")) + 1
    return np.sort(order[:min(n, len(sq))])


def is_minimal_bulk(indicators, marked, theta_d):
    """True if ``marked`` meets the bulk criterion and dropping its smallest
    member breaks it."""
    sq = np.asarray(indicators, dtype=float) ** 2
    target = theta_d * sq.sum()
    s = sq[marked].sum()
    if s < target:
        return False
    return s - sq[marked].min() < target


def count_dofs(mesh):
    """Degrees of freedom: all mesh vertices."""
    return int(mesh.n_vertices)


def solve_on(mesh, data, delta0=0.5):
    """Galerkin for a = 0, SUPG otherwise."""
    _, adv, _ = data.coefficients(mesh)
    if np.any(adv != 0):
        return solve(assemble_supg(mesh, data, delta0))
    return solve(assemble_galerkin(mesh, data))


def estimate(mesh, solution, data):
    """Residual field and hybrid breakdown of one discrete solution."""
    return eta(mesh, solution, data), xi(mesh, solution, data)


def adaptive_solve(problem, config=None, mesh=None):
    """Run the adaptive loop on a TestProblem."""
    cfg = config or AmrConfig()
    if cfg.tol is None and cfg.max_dofs is None:
        raise ValueError("set tol or max_dofs")
    data = problem.data
    if cfg.stop_on == "error" and cfg.tol is not None and not problem.has_exact:
        raise ValueError("error-based stopping needs an exact solution")
    if mesh is None:
        mesh = build_initial_mesh(cfg.initial_n, cfg.initial_n)
    trace = AmrTrace(cfg.estimator)
    t0 = time.perf_counter()
    for it in range(cfg.max_iter + 1):
        uh = solve_on(mesh, data, cfg.delta0)
        ef, hb = estimate(mesh, uh, data)
        if problem.has_exact:
            err = energy_norm_error(mesh, data, uh, problem.exact_u, problem.exact_grad,
                                    cfg.quad_order).energy
        else:
            err = float("nan")
        est = ef if cfg.estimator == "residual" else hb
        rec = AmrRecord(iter=it, dofs=count_dofs(mesh), elements=mesh.n_triangles, err=err,
                        eta=ef.total, xi=hb.total, effind=est.total / err if err > 0 else float("nan"),
                        seconds=time.perf_counter() - t0)
        if cfg.check_properties:
            rec.conformity = max(conformity_defect(hb.recovered))
            rec.divergence = divergence_defect(hb.recovered)
            pos = ef.indicators > 0
            rec.ratio_xi_eta = float((hb.indicators[pos] / ef.indicators[pos]).max())
            rec.ratio_eta_xi = float(patch_ratio(mesh, ef.indicators, hb.indicators))
            if not is_conforming(mesh):
                raise AmrError(f"non-conforming mesh at iteration {it}", trace)
        trace.append(rec)

        if cfg.tol is not None:
            measure = err if cfg.stop_on == "error" else est.total
            ref = problem.reference_norm(cfg.reference_norm) if cfg.stop_on == "error" else 1.0
            if measure <= cfg.tol * ref:
                return AmrResult(uh, mesh, trace, True, "tolerance reached")
        if cfg.max_dofs is not None and rec.dofs >= cfg.max_dofs:
            return AmrResult(uh, mesh, trace, cfg.tol is None, "max_dofs reached")
        if it == cfg.max_iter:
            break
        marked = dorfler_mark(est.indicators, cfg.theta_d)
        if len(marked) == 0:
            return AmrResult(uh, mesh, trace, True, "estimator vanished")
        if not is_minimal_bulk(est.indicators, marked, cfg.theta_d):
            raise AmrError(f"marked set not minimal at iteration {it}", trace)
        mesh = bisect(mesh, marked)
    return AmrResult(uh, mesh, trace, False, "max_iter reached")


def patch_ratio(mesh, eta_k, xi_k):
    """max_K eta_K / sum_{K' in omega_K} xi_K' over elements with positive patch sum."""
    nb = mesh.neighbors
    s = xi_k.copy()
    for j in range(3):
        ok = nb[:, j] >= 0
        s[ok] += xi_k[nb[ok, j]]
    pos = s > 0
    return (eta_k[pos] / s[pos]).max() if pos.any() else 0.0
