"""Reference values that do not use the path simulator."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit
from scipy.integrate import quad

from .conformal import L_epsilon, sc_map
from .core import Estimate


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def newtonian_potential(n: int, x: Sequence[float], y: Sequence[float]) -> float:
    """``log|x-y| / 2pi`` in the plane, ``-|x-y|^{2-n} / ((n-2) w_n)`` above.

    ``w_n`` is the area of the unit sphere in R^n, so the potential increases
    with ``|x-y|`` in every dimension.
    """
    if n < 2:
        raise ValueError("dimension must be at least 2")
    r = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    if r == 0:
        raise ValueError("potential is singular at x = y")
    if n == 2:
        return math.log(r) / (2.0 * math.pi)
    return -r ** (2 - n) / ((n - 2) * sphere_area(n))


def potential_at(n: int, eps: float) -> float:
    """``G_{n,0}`` at distance ``eps`` from the origin."""
    return newtonian_potential(n, [eps] + [0.0] * (n - 1), [0.0] * n)


def strip_harmonic_measure(w: complex, L: float) -> float:
    """Chance that Brownian motion in ``-L < Re w < 0`` leaves through ``Re w = -L``."""
    if not L > 0:
        raise ValueError("L must be positive")
    x = complex(w).real
    slack = 1e-12 * L
    if not -L - slack <= x <= slack:
        raise ValueError(f"Re w = {x} outside [-{L}, 0]")
    return min(1.0, max(0.0, -x / L))


def annulus_escape_probability(n: int, rho: float, r_in: float, r_out: float) -> float:
    """Chance of reaching ``|x| = r_in`` before ``|x| = r_out`` from radius ``rho``."""
    if n < 2:
        raise ValueError("dimension must be at least 2")
    if not 0 < r_in < r_out:
        raise ValueError("need 0 < r_in < r_out")
    if not r_in <= rho <= r_out:
        raise ValueError("rho outside the annulus")
    if n == 2:
        return math.log(r_out / rho) / math.log(r_out / r_in)
    k = 2 - n
    return (rho ** k - r_out ** k) / (r_in ** k - r_out ** k)


def thm51_prediction(z0: complex, eps: float) -> float:
    """Hitting chance of ``[1, 1+eps]`` before ``(-inf, 0]`` from ``z0``, via the rectangle map."""
    return strip_harmonic_measure(sc_map(z0, eps), L_epsilon(eps))


def half_plane_interval_measure(z: complex, a: float, b: float) -> float:
    """Harmonic measure of ``[a, b]`` in the upper half-plane seen from ``z``."""
    z = complex(z)
    if not z.imag > 0 or not a < b:
        raise ValueError("need Im z > 0 and a < b")
    return (cmath.phase(z - b) - cmath.phase(z - a)) / math.pi


def disk_arc_measure(z: complex, theta_lo: float, theta_hi: float) -> float:
    """Harmonic measure of an arc of the unit circle, by quadrature of the Poisson kernel."""
    z = complex(z)
    if not abs(z) < 1:
        raise ValueError("z must lie in the open unit disk")
    r2 = abs(z) ** 2

    def kernel(t):
        return (1.0 - r2) / abs(cmath.exp(1j * t) - z) ** 2 / (2.0 * math.pi)

    val, _ = quad(kernel, theta_lo, theta_hi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


@dataclass(frozen=True)
class BoundsReport:
    epsilons: tuple[float, ...]
    products: tuple[float, ...]
    min_product: float
    max_product: float
    ratio: float
    degenerate: tuple[bool, ...]


def thm31_bounds_check(p_hats: Sequence[float] | float, epsilons: Sequence[float] | float,
                       n: int) -> BoundsReport:
    """Products ``p_hat * G_{n,0}(eps)`` across a sweep and their spread.

    ``ratio`` is the largest over the smallest magnitude among non-zero
    products; a bounded ratio is what the scaling law predicts.
    """
    ps = np.atleast_1d(np.asarray(p_hats, float))
    es = np.atleast_1d(np.asarray(epsilons, float))
    if ps.shape != es.shape:
        raise ValueError("p_hats and epsilons must have equal length")
    prods = tuple(float(p * potential_at(n, e)) for p, e in zip(ps, es))
    degenerate = tuple(bool(v == 0.0) for v in prods)
    live = [v for v, d in zip(prods, degenerate) if not d]
    lo = min(live) if live else 0.0
    hi = max(live) if live else 0.0
    mags = [abs(v) for v in live]
    ratio = max(mags) / min(mags) if mags else math.inf
    return BoundsReport(tuple(es.tolist()), prods, lo, hi, ratio, degenerate)


# grid solver

GRID_INTERIOR, GRID_TARGET, GRID_ABSORBING, GRID_REFLECTING, GRID_OUTSIDE = 0, 1, 2, 3, 4
_FLAG_CHARS = {".": GRID_INTERIOR, "T": GRID_TARGET, "A": GRID_ABSORBING,
               "R": GRID_REFLECTING, "#": GRID_OUTSIDE}


class GridError(RuntimeError):
    pass


@dataclass
class GridProblem:
    """Node flags on a uniform grid of spacing ``h``.

    Target nodes hold 1, absorbing nodes 0.  Interior and reflecting nodes
    satisfy the five-point equation; a reflecting node mirrors each missing
    neighbour through itself, i.e. zero normal difference.  ``theta`` holds,
    per node and direction (+row, -row, +col, -col), the fraction of ``h`` at
    which a curved Dirichlet boundary cuts the grid line (1 when it does not);
    with cuts the stencil uses Shortley-Weller weights.
    """
    flags: np.ndarray
    h: float
    theta: np.ndarray | None = None
    omega: float = 1.9
    tol: float = 1e-10
    max_sweeps: int = 1_000_000

    @staticmethod
    def from_rows(rows: Sequence[str], h: float, **kw) -> "GridProblem":
        flags = np.array([[_FLAG_CHARS[c] for c in row] for row in rows], dtype=np.int8)
        return GridProblem(flags, h, **kw)


def optimal_omega(shape: tuple[int, int]) -> float:
    """SOR factor that is optimal for the Dirichlet square of this size."""
    n = max(shape)
    return 2.0 / (1.0 + math.sin(math.pi / n))


def strip_grid(L: float, h: float, height: int = 5, **kw) -> GridProblem:
    """Columns from ``x = -L`` (target) to ``x = 0`` (absorbing), reflecting top and bottom."""
    m = round(L / h)
    if not math.isclose(m * h, L, rel_tol=1e-9) or m < 2:
        raise GridError("L must be a multiple of h with at least two cells")
    flags = np.zeros((height, m + 1), dtype=np.int8)
    flags[0, :] = GRID_REFLECTING
    flags[-1, :] = GRID_REFLECTING
    flags[:, 0] = GRID_TARGET
    flags[:, -1] = GRID_ABSORBING
    return GridProblem(flags, h, **kw)


def ring_grid(r_in: float, r_out: float, h: float, **kw) -> tuple[GridProblem, np.ndarray]:
    """Square grid with target disk ``rho <= r_in`` and absorbing ``rho >= r_out``.

    Returns the problem and the node radii.
    """
    m = int(math.ceil(r_out / h)) + 1
    ax = h * np.arange(-m, m + 1)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    rho = np.hypot(X, Y)
    flags = np.full(rho.shape, GRID_INTERIOR, dtype=np.int8)
    flags[rho <= r_in] = GRID_TARGET
    flags[rho >= r_out] = GRID_ABSORBING
    theta = np.ones(rho.shape + (4,))
    steps = ((1, 0), (-1, 0), (0, 1), (0, -1))
    for i, j in zip(*np.nonzero(flags == GRID_INTERIOR)):
        p = np.array([X[i, j], Y[i, j]])
        for k, (di, dj) in enumerate(steps):
            f = flags[i + di, j + dj]
            if f == GRID_INTERIOR:
                continue
            r = r_in if f == GRID_TARGET else r_out
            d = h * np.array([di, dj], float)
            # smallest t in (0, 1] with |p + t d| = r
            a, b, c = d @ d, 2 * p @ d, p @ p - r * r
            disc = math.sqrt(max(b * b - 4 * a * c, 0.0))
            roots = [t for t in ((-b - disc) / (2 * a), (-b + disc) / (2 * a)) if 0 < t <= 1 + 1e-12]
            theta[i, j, k] = min(min(roots), 1.0) if roots else 1.0
    return GridProblem(flags, h, theta=theta, **kw), rho


@dataclass
class GridSolution:
    u: np.ndarray
    h: float
    sweeps: int
    residual: float


@njit(cache=True)
def _sor(flags, theta, u, omega, tol, max_sweeps):
    ny, nx = flags.shape
    res = 0.0
    for sweep in range(1, max_sweeps + 1):
        res = 0.0
        for i in range(ny):
            for j in range(nx):
                f = flags[i, j]
                if f != GRID_INTERIOR and f != GRID_REFLECTING:
                    continue
                s = 0.0
                wsum = 0.0
                for k in range(4):
                    di = 1 if k == 0 else (-1 if k == 1 else 0)
                    dj = 1 if k == 2 else (-1 if k == 3 else 0)
                    a = i + di
                    b = j + dj
                    if a < 0 or a >= ny or b < 0 or b >= nx or flags[a, b] == GRID_OUTSIDE:
                        # mirrored ghost node
                        a = i - di
                        b = j - dj
                        if (a < 0 or a >= ny or b < 0 or b >= nx
                                or flags[a, b] == GRID_OUTSIDE):
                            # closed on both sides: no flux along this axis
                            continue
                    t = theta[i, j, k]
                    t2 = theta[i, j, k ^ 1]
                    w = 1.0 / (t * (t + t2))
                    s += w * u[a, b]
                    wsum += w
                if wsum == 0.0:
                    continue
                r = s / wsum - u[i, j]
                if abs(r) > res:
                    res = abs(r)
                u[i, j] += omega * r
        if res < tol:
            return sweep, res
    return max_sweeps + 1, res


def grid_laplace_solve(problem: GridProblem) -> GridSolution:
    flags = np.asarray(problem.flags, dtype=np.int8)
    if flags.ndim != 2 or min(flags.shape) < 3:
        raise GridError("grid must be 2D with at least 3 nodes per side")
    if not problem.h > 0:
        raise GridError("h must be positive")
    # one Dirichlet node is enough for a unique solution; all-target grids give u = 1
    if not ((flags == GRID_TARGET) | (flags == GRID_ABSORBING)).any():
        raise GridError("grid has no target or absorbing nodes")
    if not 0 < problem.omega < 2:
        raise GridError("SOR factor must lie in (0, 2)")
    theta = problem.theta
    if theta is None:
        theta = np.ones(flags.shape + (4,))
    theta = np.asarray(theta, dtype=float)
    if theta.shape != flags.shape + (4,) or not ((theta > 0) & (theta <= 1)).all():
        raise GridError("theta must have shape flags.shape + (4,) with values in (0, 1]")
    u = np.where(flags == GRID_TARGET, 1.0, 0.0)
    sweeps, res = _sor(flags, theta, u, problem.omega, problem.tol, problem.max_sweeps)
    if sweeps > problem.max_sweeps:
        raise GridError(f"SOR did not reach residual {problem.tol:g} in "
                        f"{problem.max_sweeps} sweeps (last {res:.3g})")
    return GridSolution(u, problem.h, sweeps, res)


@dataclass(frozen=True)
class BracketReport:
    p_full: float
    p_local: float
    lower_ok: bool
    upper_ok: bool
    holds: bool
    sigma_lower: float
    sigma_upper: float
    notes: tuple[str, ...] = field(default_factory=tuple)


def localization_bracket(p_full: Estimate, p_local: Estimate, constant: float = 2.0,
                         n_sigma: float = 3.0) -> BracketReport:
    """Check ``p_local <= p_full <= constant * p_local`` up to ``n_sigma`` noise."""
    sf, sl = p_full.sigma, p_local.sigma
    s_lo = math.hypot(sf, sl)
    s_hi = math.hypot(sf, constant * sl)
    lower = p_local.p_hat - n_sigma * s_lo <= p_full.p_hat
    upper = p_full.p_hat <= constant * p_local.p_hat + n_sigma * s_hi
    notes = []
    if not lower:
        notes.append("localized estimate exceeds the full-domain estimate")
    if not upper:
        notes.append(f"full-domain estimate exceeds {constant} x localized estimate")
    return BracketReport(p_full.p_hat, p_local.p_hat, lower, upper, lower and upper,
                         s_lo, s_hi, tuple(notes))
