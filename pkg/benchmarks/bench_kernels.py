"""Time the numba and numpy flavour of every hot kernel, plus one end-to-end run per backend.

    python3 benchmarks/bench_kernels.py [--repeat 20]

The end-to-end runs start a fresh interpreter with RICHARDS_LAB_NUMBA set,
since the backend is chosen at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from richards_lab import _kernels, fem2d
from richards_lab.harness import default_soil

E2E = (
    "import time; from richards_lab.harness import run, ExperimentConfig;"
    "run(ExperimentConfig(problem='fdm1d_generic', K=3), write=False);"
    "t=time.perf_counter(); run(ExperimentConfig(problem='{problem}'), write=False);"
    "print(time.perf_counter()-t)"
)


def cases():
    rng = np.random.default_rng(0)
    soil = default_soil()
    psi = -rng.uniform(0.0, 5.0, 200_000)
    vg = (psi, soil.alpha, soil.n, soil.m, soil.theta_r, soil.theta_s, soil.K_s)

    mesh = fem2d.TriMesh(80, 80)
    idx = np.ascontiguousarray(mesh.triangles.ravel())
    vals = rng.standard_normal(idx.size)
    scatter = (idx, vals, mesh.n_nodes)

    n = 2000
    flow = (rng.standard_normal(n + 2), rng.uniform(0, 1, n + 1), *rng.uniform(0.1, 0.4, (3, n)),
            1e-4, 1e-3, 0.5)
    transport = (rng.uniform(1, 2, n), rng.standard_normal(n - 1), *rng.uniform(0.1, 0.4, (3, n)),
                 1.0, 1e-6, 1e-3, 100.0)
    return {
        "van_genuchten (2e5 heads)": ("van_genuchten", vg),
        "scatter_add (80x80 mesh)": ("scatter_add", scatter),
        "explicit_flow_sweep (2000 nodes)": ("explicit_flow_sweep", flow),
        "explicit_transport_sweep (2000 nodes)": ("explicit_transport_sweep", transport),
    }


def end_to_end(problem):
    out = {}
    for flag, name in (("1", "numba"), ("0", "numpy")):
        env = dict(os.environ, RICHARDS_LAB_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", E2E.format(problem=problem)], env=env,
                             capture_output=True, text=True, check=True)
        out[name] = float(res.stdout.strip())
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    print(f"{'kernel':40s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s}")
    for label, (name, call_args) in cases().items():
        fast = getattr(_kernels, f"{name}_numba")
        slow = getattr(_kernels, f"{name}_numpy")
        fast(*call_args)                     # compile outside the timing
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat))
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat))
        print(f"{label:40s} {1e3 * t_fast:11.3f} {1e3 * t_slow:11.3f} {t_slow / t_fast:9.2f}")

    print()
    for problem in ("fdm1d_generic", "benchmark2d"):
        res = end_to_end(problem)
        print(f"end-to-end {problem:16s} numba {res['numba']:.3f} s   numpy {res['numpy']:.3f} s")


if __name__ == "__main__":
    main()
