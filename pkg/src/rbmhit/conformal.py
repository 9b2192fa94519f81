"""Schwarz-Christoffel map of the upper half-plane onto a rectangle.

``f(z) = int_0^z dxi / (sqrt(xi) sqrt(xi - 1) sqrt(xi - 1 - eps))`` with every
square root cut along the downward vertical ray, so the integrand is
analytic on the closed upper half-plane minus the prevertices
``0, 1, 1 + eps``.  The images are

    f(0) = 0,  f(1) = -L,  f(1 + eps) = -L - i l,  f(inf) = -i l,

so ``(-inf, 0]`` lands on the wall ``Re w = 0`` and ``[1, 1 + eps]`` on
``Re w = -L``.

Integrals start at the nearest prevertex ``b`` and use ``xi = b + (z - b) s^2``,
which cancels the inverse square-root singularity at ``b``.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad

QUAD_TOL = 1e-10
_EPSABS = 1e-13
_EPSREL = 1e-12
_ROOT_I = cmath.exp(0.25j * math.pi)


class QuadratureError(RuntimeError):
    pass


def sqrt_down(w: complex) -> complex:
    """Square root with its cut on the negative imaginary axis."""
    return _ROOT_I * cmath.sqrt(-1j * w)


def _agm(a: float, b: float) -> float:
    for _ in range(64):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def _K_from_complement(kp: float) -> float:
    return math.pi / (2.0 * _agm(1.0, kp))


def elliptic_K(k: float) -> float:
    """Complete elliptic integral of the first kind, modulus ``k``."""
    if not abs(k) < 1.0:
        raise ValueError(f"elliptic_K needs |k| < 1, got {k}")
    k = abs(k)
    return _K_from_complement(math.sqrt((1.0 - k) * (1.0 + k)))


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not eps > 0 or not math.isfinite(eps):
        raise ValueError(f"epsilon must be positive and finite, got {eps}")
    return eps


def L_epsilon(eps: float) -> float:
    """Rectangle width ``2 K(k) / sqrt(1 + eps)`` with modulus ``k = 1 / sqrt(1 + eps)``."""
    eps = _check_eps(eps)
    kp = math.sqrt(eps / (1.0 + eps))
    return 2.0 * _K_from_complement(kp) / math.sqrt(1.0 + eps)


def l_epsilon(eps: float) -> float:
    """Rectangle height ``2 K(k') / sqrt(1 + eps)`` with ``k' = sqrt(eps / (1 + eps))``."""
    eps = _check_eps(eps)
    k = 1.0 / math.sqrt(1.0 + eps)
    return 2.0 * _K_from_complement(k) / math.sqrt(1.0 + eps)


def sc_integrand(xi: complex, eps: float) -> complex:
    if xi in (0, 1, 1 + eps):
        raise ValueError(f"sc_integrand is singular at the prevertex {xi}")
    return 1.0 / (sqrt_down(xi) * sqrt_down(xi - 1.0) * sqrt_down(xi - 1.0 - eps))


def _quad_retry(f, a: float, b: float, what: str, points) -> tuple[float, float]:
    # a round-off warning at the strict tolerance gets one retry at QUAD_TOL scale
    for epsabs, epsrel in ((_EPSABS, _EPSREL), (0.1 * QUAD_TOL, QUAD_TOL)):
        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            try:
                return quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=500, points=points)
            except IntegrationWarning as exc:
                msg = str(exc)
    raise QuadratureError(f"{what}: {msg}")


def _cquad(fun, a: float, b: float, what: str, points=None) -> complex:
    out = []
    for part in (lambda s: fun(s).real, lambda s: fun(s).imag):
        val, err = _quad_retry(part, a, b, what, points)
        if err > QUAD_TOL:
            raise QuadratureError(f"{what}: error estimate {err:.3g} exceeds {QUAD_TOL:g}")
        out.append(val)
    return complex(out[0], out[1])


def _diffs(eps: float) -> tuple[tuple[float, ...], ...]:
    # exact pairwise offsets pos[k] - pos[j]; 1 + eps itself is rounded
    return ((0.0, -1.0, -(1.0 + eps)), (1.0, 0.0, -eps), (1.0 + eps, eps, 0.0))


def _local_integral(k: int, h: complex, eps: float) -> complex:
    """Integral from prevertex ``k`` to ``pos[k] + h`` via ``xi = pos[k] + h s^2``."""
    if h == 0:
        return 0j
    offs = [d for j, d in enumerate(_diffs(eps)[k]) if j != k]
    root = sqrt_down(h)

    def g(s):
        hs = h * s * s
        den = 1.0 + 0j
        for d in offs:
            den *= sqrt_down(d + hs)
        return 2.0 * root / den

    # near another prevertex at distance gap the integrand behaves like
    # 1 / sqrt(s^2 + c^2) with c^2 = gap / |h|; s = c sinh(u) flattens it
    c = math.sqrt(min(abs(d) for d in offs) / abs(h))
    what = f"sc integral from prevertex {k} over {h}"
    if c >= 1.0:
        return _cquad(g, 0.0, 1.0, what)

    def gu(u):
        return g(c * math.sinh(u)) * c * math.cosh(u)

    return _cquad(gu, 0.0, math.asinh(1.0 / c), what)


def _leg(k: int, eps: float) -> complex:
    """Integral from prevertex ``k`` to prevertex ``k + 1``."""
    half = 0.5 * _diffs(eps)[k + 1][k]
    return _local_integral(k, half, eps) - _local_integral(k + 1, -half, eps)


@lru_cache(maxsize=256)
def _prevertex_values(eps: float) -> tuple[complex, complex, complex]:
    f1 = _leg(0, eps)
    f2 = f1 + _leg(1, eps)
    M = 2.0 * (1.0 + eps)

    def tail(u):
        # xi = M / u^2 on u in (0, 1]
        xi = M / (u * u)
        return sc_integrand(xi, eps) * 2.0 * M / (u * u * u)

    f_inf = f2 + _local_integral(2, 1.0 + eps, eps) + _cquad(tail, 0.0, 1.0, "sc tail")
    return f1, f2, f_inf


def sc_vertices(eps: float) -> tuple[complex, complex, complex, complex]:
    """Images of ``0, 1, 1 + eps, inf``."""
    eps = _check_eps(eps)
    return (0j,) + _prevertex_values(eps)


def sc_map(z: complex, eps: float, contour: str = "segment") -> complex:
    """Evaluate the map at ``z`` in the closed upper half-plane.

    ``contour="segment"`` integrates along the straight segment from the
    nearest prevertex; ``contour="arc"`` goes from ``0`` along the real axis
    to ``|z|`` and then along the circle, which gives an independent value.
    """
    eps = _check_eps(eps)
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError("z must be finite")
    if z.imag < 0:
        raise ValueError(f"z = {z} is below the real axis")
    prevs = (0.0, 1.0, 1.0 + eps)
    vals = sc_vertices(eps)
    if contour == "segment":
        k = min(range(3), key=lambda j: abs(z - prevs[j]))
        return vals[k] + _local_integral(k, z - prevs[k], eps)
    if contour == "arc":
        R = abs(z)
        if R == 0:
            return 0j
        k = min(range(3), key=lambda j: abs(R - prevs[j]))
        w = vals[k] + _local_integral(k, complex(R - prevs[k]), eps)
        theta = cmath.phase(z)
        if theta == 0:
            return w
        if any(abs(R - p) < 1e-12 for p in prevs[1:]):
            raise ValueError("arc contour would start at a prevertex")

        def g(t):
            xi = R * cmath.exp(1j * t)
            return sc_integrand(xi, eps) * 1j * xi

        return w + _cquad(g, 0.0, theta, f"sc arc to {z}")
    raise ValueError(f"unknown contour {contour!r}")


def limit_f0(z0: complex) -> complex:
    """Pointwise limit of ``sc_map(z0, eps)`` as ``eps -> 0``.

    With ``z0 = R e^{i theta}`` the integral from 0 becomes
    ``e^{-i theta / 2} R^{-1/2} int_0^1 dt / (sqrt(t) (t - e^{-i theta} / R))``
    followed by ``t = s^2``.  The prefactor comes from the scaling ``xi = z0 t``.
    """
    z0 = complex(z0)
    R = abs(z0)
    theta = cmath.phase(z0)
    if not (R > 0 and 0 < theta < math.pi):
        raise ValueError("z0 must lie in the open upper half-plane")
    a = cmath.exp(-1j * theta) / R

    # the pole at b = sqrt(a) gives a peak of width |Im b| near Re b;
    # s = Re b + |Im b| sinh(u) flattens it
    b = cmath.sqrt(a)
    p, q = b.real, abs(b.imag)

    def g(u):
        s = p + q * math.sinh(u)
        return 2.0 / (s * s - a) * q * math.cosh(u)

    val = _cquad(g, math.asinh(-p / q), math.asinh((1.0 - p) / q), f"limit integral at {z0}")
    return cmath.exp(-0.5j * theta) / math.sqrt(R) * val


@dataclass(frozen=True)
class MobiusMap:
    """``(a z + b) / (c z + d)`` with complex coefficients normalised to ``ad - bc = 1``."""
    a: complex
    b: complex
    c: complex
    d: complex

    @staticmethod
    def make(a: complex, b: complex, c: complex, d: complex) -> "MobiusMap":
        det = a * d - b * c
        if abs(det) < 1e-300:
            raise ValueError("degenerate Mobius map (ad - bc = 0)")
        s = cmath.sqrt(det)
        return MobiusMap(a / s, b / s, c / s, d / s)

    def inverse(self) -> "MobiusMap":
        return MobiusMap(self.d, -self.b, -self.c, self.a)

    def compose(self, other: "MobiusMap") -> "MobiusMap":
        """``self(other(z))``."""
        m = np.array([[self.a, self.b], [self.c, self.d]]) @ np.array(
            [[other.a, other.b], [other.c, other.d]])
        return MobiusMap.make(*(complex(v) for v in m.ravel()))

    def __call__(self, z: complex) -> complex:
        return mobius_apply(self, z)


def mobius_apply(m: MobiusMap, z: complex) -> complex:
    z = complex(z)
    den = m.c * z + m.d
    if abs(den) <= 1e-15 * (abs(m.c) * abs(z) + abs(m.d)):
        raise ZeroDivisionError(f"{z} is the pole of the Mobius map")
    return (m.a * z + m.b) / den


def cayley() -> MobiusMap:
    """``i (z - i) / (z + i)``: upper half-plane onto the unit disk, ``i -> 0``."""
    return MobiusMap.make(1j, 1.0, 1.0, 1j)
