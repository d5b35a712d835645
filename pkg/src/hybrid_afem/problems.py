"""Model problems with known exact solutions on [-1, 1]^2."""
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .fem import CONVECTION_REACTION, DIFFUSION, ProblemData

PROBLEM_IDS = ("1", "2", "3", "conv", "iface")
_ALIASES = {"1": "1", "2": "2", "3": "3", 1: "1", 2: "2", 3: "3",
            "conv": "conv", "convection-smoke": "conv",
            "iface": "iface", "interface-smoke": "iface"}
DEFAULT_EPSILON = {"1": 1e-4, "2": 1e-4, "3": 1e-4, "conv": 1e-3, "iface": None}
DEFAULT_TOL = {"2": 0.1, "3": 0.01}


@dataclass
class TestProblem:
    """Exact solution callbacks bundled with the problem data.

    ``norm_u`` is the energy norm of the exact solution and ``norm_u_l2``
    its L2 norm (None if unknown).
    """
    __test__ = False

    id: str
    data: ProblemData
    exact_u: Optional[Callable]
    exact_grad: Optional[Callable]
    norm_u: Optional[float]
    epsilon: Optional[float]
    description: str = ""
    norm_u_l2: Optional[float] = None

    def reference_norm(self, kind="l2"):
        """|||u||| ("energy") or beta^{1/2} |u| ("l2")."""
        if kind == "energy":
            return self.norm_u
        if kind == "l2":
            return None if self.norm_u_l2 is None else np.sqrt(self.data.beta) * self.norm_u_l2
        raise ValueError(f"unknown reference norm {kind!r}")

    @property
    def has_exact(self):
        return self.exact_u is not None


def _resolve(pid):
    try:
        return _ALIASES[pid]
    except (KeyError, TypeError):
        raise ValueError(f"unknown problem id {pid!r}; expected one of {PROBLEM_IDS}") from None


# --- Problem 1: smooth cosine bump ----------------------------------------
def problem1(epsilon=1e-4):
    k = 1.0 + epsilon * np.pi ** 2 / 2.0
    h = np.pi / 2.0

    def f(x, y):
        return np.cos(h * x) * np.cos(h * y)

    def u(x, y):
        return f(x, y) / k

    def grad(x, y):
        return (-h * np.sin(h * x) * np.cos(h * y) / k,
                -h * np.cos(h * x) * np.sin(h * y) / k)

    data = ProblemData(source=f, reaction=1.0, beta=1.0, epsilon=epsilon,
                       regime=CONVECTION_REACTION)
    # |||u|||^2 = (eps (pi/2)^2 * 2 + 1) |cos cos|^2 / k^2 with |cos cos|^2 = 1
    return TestProblem("1", data, u, grad, float(1.0 / np.sqrt(k)), epsilon,
                       "smooth solution, reaction-dominated for small epsilon", float(1.0 / k))


# --- Problem 2: boundary layers --------------------------------------------
def problem2(epsilon=1e-4):
    s = np.sqrt(epsilon)

    def u(x, y):
        return np.exp(-(x + 1) / s) + np.exp(-(y + 1) / s)

    def grad(x, y):
        return -np.exp(-(x + 1) / s) / s + 0 * y, -np.exp(-(y + 1) / s) / s + 0 * x

    data = ProblemData(source=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
                       reaction=1.0, beta=1.0, epsilon=epsilon, dirichlet=u,
                       regime=CONVECTION_REACTION)
    q = np.exp(-2.0 / s)
    l2 = 2.0 * s * (1.0 - q * q) + 2.0 * s * s * (1.0 - q) ** 2
    grad2 = 2.0 * s * (1.0 - q * q)          # eps |grad u|^2
    return TestProblem("2", data, u, grad, float(np.sqrt(l2 + grad2)), epsilon,
                       "boundary layers along x=-1 and y=-1", float(np.sqrt(l2)))


# --- Problem 3: interior layer ---------------------------------------------
def problem3(epsilon=1e-4):
    ie = 1.0 / np.sqrt(epsilon)

    def u(x, y):
        return np.tanh(ie * (x * x + y * y - 0.25))

    def grad(x, y):
        s = ie * (x * x + y * y - 0.25)
        w = 2.0 * ie / np.cosh(s) ** 2
        return w * x, w * y

    def f(x, y):
        r2 = x * x + y * y
        s = ie * (r2 - 0.25)
        t = np.tanh(s)
        sech2 = 1.0 / np.cosh(s) ** 2
        lap = ie * sech2 * (4.0 - 2.0 * ie * t * 4.0 * r2)
        return -epsilon * lap + t

    data = ProblemData(source=f, reaction=1.0, beta=1.0, epsilon=epsilon, dirichlet=u,
                       regime=CONVECTION_REACTION)
    energy, l2 = _problem3_norms(epsilon)
    return TestProblem("3", data, u, grad, energy, epsilon,
                       "interior layer on the circle of radius 1/2", l2)


@lru_cache(maxsize=32)
def _problem3_norms(epsilon):
    """Energy and L2 norms of tanh((r^2 - 1/4)/sqrt(eps)) over the square.

    The square is eight copies of the wedge 0 <= theta <= pi/4,
    0 <= r <= sec(theta); the radial integrals are done with breakpoints
    around the layer at r = 1/2.
    """
    ie = 1.0 / np.sqrt(epsilon)
    width = 10.0 / ie

    def radial(g, R):
        pts = [p for p in (0.5 - width, 0.5, 0.5 + width) if 0.0 < p < R]
        val, _ = integrate.quad(lambda r: r * g(r), 0.0, R, points=pts or None, limit=400,
                                epsabs=1e-14, epsrel=1e-12)
        return val

    def wedge(g):
        val, _ = integrate.quad(lambda t: radial(g, 1.0 / np.cos(t)), 0.0, np.pi / 4,
                                epsabs=1e-13, epsrel=1e-11)
        return 8.0 * val

    grad2 = wedge(lambda r: epsilon * (2.0 * ie * r / np.cosh(ie * (r * r - 0.25)) ** 2) ** 2)
    l2 = wedge(lambda r: np.tanh(ie * (r * r - 0.25)) ** 2)
    return float(np.sqrt(l2 + grad2)), float(np.sqrt(l2))


# --- smoke problems ---------------------------------------------------------
def convection_smoke(epsilon=1e-3, advection=(1 / np.sqrt(2), 1 / np.sqrt(2))):
    """Streamline-aligned smooth solution u = cos(pi (x - y) / 4).

    a . grad u = 0 for a parallel to (1, 1), so f = -eps Lap u.
    """
    w = np.pi / 4.0

    def u(x, y):
        return np.cos(w * (x - y))

    def grad(x, y):
        g = -w * np.sin(w * (x - y))
        return g, -g

    def f(x, y):
        return 2.0 * epsilon * w * w * np.cos(w * (x - y)) + \
            (advection[0] - advection[1]) * (-w * np.sin(w * (x - y)))

    data = ProblemData(source=f, advection=tuple(advection), reaction=0.0, beta=0.0,
                       epsilon=epsilon, dirichlet=u, regime=CONVECTION_REACTION)
    return TestProblem("conv", data, u, grad, None, epsilon,
                       "convection-dominated, SUPG path, beta = 0")


def checkerboard_alpha(jump):
    """alpha = jump on the first and third quadrant, 1 elsewhere."""
    def alpha(x, y):
        return np.where(x * y > 0, float(jump), 1.0)
    return alpha


def interface_smoke(jump=1e4):
    data = ProblemData(source=lambda x, y: np.ones_like(np.asarray(x, dtype=float)),
                       alpha=checkerboard_alpha(jump), regime=DIFFUSION)
    return TestProblem("iface", data, None, None, None, None,
                       "checkerboard diffusion coefficient, f = 1, u = 0 on the boundary")


def define_problem(pid, epsilon=None, **kw):
    """Construct a test problem by id ("1", "2", "3", "conv", "iface")."""
    key = _resolve(pid)
    if key == "iface":
        return interface_smoke(**kw)
    eps = DEFAULT_EPSILON[key] if epsilon is None else float(epsilon)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    return {"1": problem1, "2": problem2, "3": problem3, "conv": convection_smoke}[key](eps, **kw)
