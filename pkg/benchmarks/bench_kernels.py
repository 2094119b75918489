"""Compare the compiled rigid-body kernel against the pure-Python fallback.

The two backends must produce bit-identical trajectories; this script
checks that first, then times both on the batch shapes the filters
actually use (EKF finite-difference stencils, UKF sigma sets, PF clouds)
and on a long single-trajectory propagation.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from attbench.core import BACKEND, kernels_py

if BACKEND != "compiled":
    raise SystemExit(
        "compiled backend unavailable (BACKEND=%r); build the extension "
        "first or drop ATTBENCH_PURE_PYTHON" % BACKEND
    )

from attbench.core import _kernels_cy  # noqa: E402  (after the guard)

IXX, IYY, IZZ = 23745.0, 17560.0, 36065.0
DT = 0.1


def make_states(m, seed=0):
    rng = np.random.default_rng(seed)
    states = np.empty((m, 7))
    q = rng.normal(size=(m, 4))
    states[:, :4] = q / np.linalg.norm(q, axis=1, keepdims=True)
    states[:, 4:] = rng.normal(scale=0.15, size=(m, 3))
    return states


def run(step, states, n_steps):
    out = states.copy()
    for _ in range(n_steps):
        out = step(out, DT, IXX, IYY, IZZ, 0.0, 0.0, 0.0)
    return out


def bench(step, states, n_steps, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        run(step, states, n_steps)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    print("backend check: BACKEND=%s" % BACKEND)
    for m in (15, 21, 1000):
        a = run(_kernels_cy.rk4_step_batch, make_states(m), 50)
        b = run(kernels_py.rk4_step_batch, make_states(m), 50)
        same = np.array_equal(a, b)
        print("  batch %5d x 50 steps: bit-identical=%s" % (m, same))
        if not same:
            raise SystemExit("backend mismatch; parity is a hard requirement")

    print()
    print("%-38s %12s %12s %8s" % ("case", "compiled", "python", "speedup"))
    cases = [
        ("EKF jacobian stencil (15 x 2000)", 15, 2000),
        ("UKF sigma set       (21 x 2000)", 21, 2000),
        ("PF cloud          (1000 x  300)", 1000, 300),
        ("long trajectory      (1 x 20000)", 1, 20000),
    ]
    for label, m, n in cases:
        states = make_states(m)
        tc = bench(_kernels_cy.rk4_step_batch, states, n)
        tp = bench(kernels_py.rk4_step_batch, states, n, repeats=3)
        print("%-38s %10.4f s %10.4f s %7.1fx" % (label, tc, tp, tp / tc))


if __name__ == "__main__":
    main()
