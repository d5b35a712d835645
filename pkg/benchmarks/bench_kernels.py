"""Compare the numba kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--refine N] [--repeat R]

Times each element kernel on a uniformly refined mesh, checks that both
paths agree, and times one full solve + estimate cycle in a subprocess
per path (HYBRID_AFEM_NUMBA=1 / 0).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from hybrid_afem import kernels
from hybrid_afem.fem import project_data
from hybrid_afem.hybrid import XI_SOURCE_ORDER, residual_size
from hybrid_afem.mesh import build_initial_mesh, uniform_refine
from hybrid_afem.problems import define_problem
from hybrid_afem.amr import solve_on
from hybrid_afem.recovery import recover_flux
from hybrid_afem.residual import residual_parts

CYCLE = """
import time
from hybrid_afem.amr import estimate, solve_on
from hybrid_afem.mesh import build_initial_mesh, uniform_refine
from hybrid_afem.problems import define_problem
p = define_problem("1", 1e-4)
m = uniform_refine(build_initial_mesh(10, 10), {refine})
u = solve_on(m, p.data); estimate(m, u, p.data)   # warm-up / JIT
t = time.perf_counter()
for _ in range({repeat}):
    u = solve_on(m, p.data); estimate(m, u, p.data)
print((time.perf_counter() - t) / {repeat})
"""


def kernel_inputs(refine):
    p = define_problem("1", 1e-4)
    mesh = uniform_refine(build_initial_mesh(10, 10), refine)
    uh = solve_on(mesh, p.data)
    proj = project_data(mesh, p.data, source_order=XI_SOURCE_ORDER)
    parts = residual_parts(mesh, uh, p.data, proj, h=residual_size(mesh))
    rec = recover_flux(mesh, p.data, parts, proj)
    alpha, adv, react = p.data.coefficients(mesh)
    c = np.ascontiguousarray(mesh.coords)
    blocks = (np.ascontiguousarray(mesh.grad_lambda), np.ascontiguousarray(mesh.areas),
              alpha, adv, react, np.full(mesh.n_triangles, 0.01))
    small = (c, np.ascontiguousarray(mesh.areas), np.ascontiguousarray(mesh.local_edge_lengths),
             parts.r0, parts.rg, rec.traces.c)
    large = (c, np.full(mesh.n_triangles, 0.2 * mesh.inradii.min()), parts.r0, parts.rg,
             rec.traces.c)
    return mesh, {"p1_local_blocks": blocks, "small_terms": small, "large_terms": large}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--refine", type=int, default=6, help="bisection rounds of the 10x10 mesh")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-cycle", action="store_true", help="skip the subprocess timings")
    args = ap.parse_args(argv)

    mesh, inputs = kernel_inputs(args.refine)
    print(f"mesh: {mesh.n_triangles} triangles, numba active in-process: {kernels.USE_NUMBA}")
    print(f"{'kernel':18s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s} {'max diff':>9s}")
    for name, a in inputs.items():
        f_np = getattr(kernels, name + "_numpy")
        f_nb = getattr(kernels, name + "_numba")
        r_np, r_nb = f_np(*a), f_nb(*a)       # also triggers compilation
        r_np = r_np if isinstance(r_np, tuple) else (r_np,)
        r_nb = r_nb if isinstance(r_nb, tuple) else (r_nb,)
        diff = max(float(np.max(np.abs(x - y) / (1 + np.abs(x)))) for x, y in zip(r_np, r_nb))
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:18s} {t_np:11.2f} {t_nb:11.2f} {t_np / t_nb:8.1f} {diff:9.1e}")

    if args.no_cycle:
        return 0
    code = CYCLE.format(refine=args.refine, repeat=args.repeat)
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, HYBRID_AFEM_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        out[flag] = float(res.stdout.split()[-1])
    print(f"solve+estimate cycle: numpy {out['0'] * 1e3:.1f} ms, numba {out['1'] * 1e3:.1f} ms")
    return 0


if __name__ == "__main__":
    sys.exit(main())
