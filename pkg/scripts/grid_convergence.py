"""Print finite-difference error against the ring closed form as h is halved."""

import numpy as np

from rbmhit.oracles import (GRID_INTERIOR, annulus_escape_probability, grid_laplace_solve,
                            optimal_omega, ring_grid)

R_IN, R_OUT = 0.25, 1.0


def ring_error(h: float) -> tuple[float, int]:
    prob, rho = ring_grid(R_IN, R_OUT, h)
    prob.omega = optimal_omega(prob.flags.shape)
    sol = grid_laplace_solve(prob)
    m = prob.flags == GRID_INTERIOR
    exact = np.array([annulus_escape_probability(2, r, R_IN, R_OUT) for r in rho[m]])
    return float(np.max(np.abs(sol.u[m] - exact) / exact)), sol.sweeps


if __name__ == "__main__":
    prev = None
    print(f"{'h':>8s} {'max rel err':>12s} {'ratio':>7s} {'sweeps':>7s}")
    for h in (0.1, 0.05, 0.025, 0.0125):
        err, sweeps = ring_error(h)
        ratio = f"{prev / err:7.2f}" if prev else " " * 7
        print(f"{h:8.4f} {err:12.3e} {ratio} {sweeps:7d}")
        prev = err
