"""Grid refinement table for the coupled scheme.

For each (nx, nv, nt) level, runs the baseline problem and prints the
iteration count, the weak-form residual against the test bank, the L1
distance to the previous level's final density (coarsened by averaging),
and the variant A/B gap.

    python scripts/refinement_study.py [--levels 3]
"""

import argparse
import time

import numpy as np

from kinefp.core import GridSpec, ModelParams, PhaseGrid, gaussian_bump, gaussian_phase_density
from kinefp.kernels import RhoSpec, alpha_of_c, rho_on_grid
from kinefp.oracle import test_function_bank, weak_form_residual
from kinefp.picard import l1_sup_diff, run_scheme


def weak_residual(res, grid, params):
    rho = rho_on_grid(grid, RhoSpec.default(params))
    alpha = alpha_of_c(np.clip(res.c, 0, None), params)
    pot = params.gamma * res.state.anastomosis[..., None] - alpha[..., None] * rho
    return float(weak_form_residual(res.p, res.state.force, pot, params, grid, test_function_bank(grid)).max())


def coarsen(p):
    """Average 2 x 2 blocks of a 1D phase array (cell-centred nodes nest this way)."""
    return 0.25 * (p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args()
    params = ModelParams()
    prev = None
    print(f"{'nx':>5} {'nt':>5} {'iters':>5} {'weak':>10} {'dist':>10} {'A-B':>10} {'secs':>6}")
    for lev in range(args.levels):
        n, nt = 32 * 2 ** lev, 30 * 2 ** lev
        grid = PhaseGrid(GridSpec(nx=n, nv=n, nt=nt), 1)
        p0 = gaussian_phase_density(grid, -1.0, 0.5, 0.5, 0.5)
        c0 = gaussian_bump(grid, 1.5, 1.0, 1.0)
        t0 = time.perf_counter()
        a = run_scheme(params, grid, p0, c0)
        b = run_scheme(params, grid, p0, c0, variant="B")
        secs = time.perf_counter() - t0
        dist = float("nan")
        if prev is not None:
            coarse_grid, coarse_p = prev
            dist = float(np.sum(coarse_grid.weights * np.abs(coarsen(a.p[-1]) - coarse_p)))
        print(f"{n:5d} {nt:5d} {a.report.iterations:5d} {weak_residual(a, grid, params):10.3e} "
              f"{dist:10.3e} {l1_sup_diff(a.p, b.p, grid):10.3e} {secs:6.1f}")
        prev = (grid, a.p[-1])


if __name__ == "__main__":
    main()
