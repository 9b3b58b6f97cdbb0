"""Compare the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py --nel 200 --repeat 20
    python benchmarks/bench_kernels.py --end-to-end --nel 60 --iters 30

The kernel timings run both implementations in one process. The end-to-end
mode launches two subprocesses, one with FLEXOPT_NUMBA=0, and times a short
optimization run in each.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from flexopt import _kernels
from flexopt.fem import Assembler, element_stiffness
from flexopt.mesh import build_mesh


def _time(fn, repeat):
    fn()  # warm-up, includes jit compilation
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_table(nel: int, repeat: int) -> list[tuple[str, float, float, float]]:
    mesh = build_mesh(nel, nel)
    ke = element_stiffness(0.3, 2).matrix
    asm = Assembler(mesh, ke)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(mesh.n_dofs)
    v = rng.standard_normal(mesh.n_dofs)
    w = rng.random(mesh.n_elements)
    vals = rng.standard_normal(mesh.edof.shape)
    edof = mesh.edof
    pos = asm._positions
    size = asm.nnz
    ke_flat = np.ascontiguousarray(ke).ravel()
    cases = {
        "quadratic": ("quadratic", (u, edof, ke)),
        "bilinear": ("bilinear", (u, v, edof, ke)),
        "scatter": ("scatter", (pos, w, ke_flat, size)),
        "gather_add": ("gather_add", (vals, edof, mesh.n_dofs)),
    }
    rows = []
    for name, (stem, args) in cases.items():
        t_np = _time(lambda: getattr(_kernels, f"{stem}_numpy")(*args), repeat)
        if _kernels.nb is not None:
            t_nb = _time(lambda: getattr(_kernels, f"{stem}_numba")(*args), repeat)
        else:
            t_nb = float("nan")
        rows.append((name, t_np, t_nb, t_np / t_nb))
    return rows


_RUN = """
import time
from flexopt import RunConfig, run, BACKEND
t0 = time.perf_counter()
r = run(RunConfig(nelx={n}, nely={n}, doc=["tx"], dof=["ty"], emax=[1.2], max_iter={it}))
print(BACKEND, time.perf_counter() - t0, r.objective)
"""


def end_to_end(nel: int, iters: int) -> None:
    for flag in ("1", "0"):
        env = dict(os.environ, FLEXOPT_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", _RUN.format(n=nel, it=iters)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        backend, secs, f = out[0], float(out[1]), float(out[2])
        print(f"{backend:6s} {nel}x{nel}, {iters} iterations: {secs:7.2f} s  (f={f:.10g})")


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nel", type=int, default=200)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--end-to-end", action="store_true")
    p.add_argument("--iters", type=int, default=30)
    args = p.parse_args(argv)
    if args.end_to_end:
        end_to_end(args.nel, args.iters)
        return
    print(f"backend in use: {_kernels.BACKEND}; mesh {args.nel}x{args.nel}")
    print(f"{'kernel':12s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, t_np, t_nb, ratio in kernel_table(args.nel, args.repeat):
        print(f"{name:12s} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {ratio:8.2f}")


if __name__ == "__main__":
    main()
