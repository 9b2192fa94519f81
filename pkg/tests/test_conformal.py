import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.special import ellipk

from rbmhit import conformal as cf
from rbmhit.conformal import (L_epsilon, MobiusMap, cayley, elliptic_K, l_epsilon, limit_f0,
                              mobius_apply, sc_integrand, sc_map, sc_vertices)


def _K_quad(k):
    val, _ = quad(lambda t: 1.0 / math.sqrt(1.0 - (k * math.sin(t)) ** 2), 0.0, math.pi / 2,
                  epsabs=1e-13, epsrel=1e-13)
    return val


def _L_quad(eps):
    # int_0^1 dxi / (sqrt(xi) sqrt(1 - xi) sqrt(1 + eps - xi))
    val, _ = quad(lambda x: 1.0 / math.sqrt(1.0 + eps - x), 0.0, 1.0, weight="alg",
                  wvar=(-0.5, -0.5), epsabs=1e-14, epsrel=1e-14)
    return val


def _l_quad(eps):
    # int_1^{1+eps} dxi / (sqrt(xi) sqrt(xi - 1) sqrt(1 + eps - xi))
    val, _ = quad(lambda x: 1.0 / math.sqrt(x), 1.0, 1.0 + eps, weight="alg",
                  wvar=(-0.5, -0.5), epsabs=1e-14, epsrel=1e-14)
    return val


def test_K_at_zero():
    assert elliptic_K(0.0) == pytest.approx(math.pi / 2, rel=1e-15)


def test_K_known_value():
    assert elliptic_K(1 / math.sqrt(2)) == pytest.approx(1.8540746773013719, rel=1e-13)


@pytest.mark.parametrize("k", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
def test_K_against_quadrature(k):
    assert abs(elliptic_K(k) - _K_quad(k)) < 1e-10


@pytest.mark.parametrize("k", [0.0, 0.5, 0.99, 0.999999, 1 - 1e-12])
def test_K_against_scipy(k):
    assert elliptic_K(k) == pytest.approx(ellipk(k * k), rel=1e-12)


def test_K_log_asymptote():
    kp = 1e-4
    k = math.sqrt(1 - kp * kp)
    assert abs(elliptic_K(k) - math.log(4 / kp)) < 1e-7


def test_K_diverges_at_one():
    with pytest.raises(ValueError):
        elliptic_K(1.0)
    with pytest.raises(ValueError):
        elliptic_K(1.5)


@pytest.mark.parametrize("eps", [0.01, 0.1, 1.0, 3.0])
def test_L_and_l_against_quadrature(eps):
    assert abs(L_epsilon(eps) - _L_quad(eps)) < 1e-8
    assert abs(l_epsilon(eps) - _l_quad(eps)) < 1e-8


def test_L_at_one():
    # modulus 1/sqrt(2): 2 K / sqrt(2)
    assert L_epsilon(1.0) == pytest.approx(2.622057554292119, rel=1e-14)
    assert l_epsilon(1.0) == pytest.approx(L_epsilon(1.0), rel=1e-14)


def test_L_log_offset_is_ln16():
    # K(k) ~ ln(4 / k') with k'^2 = eps / (1 + eps), so L + ln eps -> 2 ln 4
    for eps in (1e-6, 1e-9):
        assert abs(L_epsilon(eps) + math.log(eps) - math.log(16)) < 2 * eps * abs(math.log(eps))


def test_L_decreasing():
    eps = np.linspace(1e-3, 1.0, 200)
    L = [L_epsilon(e) for e in eps]
    assert all(a > b for a, b in zip(L, L[1:]))


def test_integrand_positive_branch():
    assert sc_integrand(3.0, 1.0) == pytest.approx(1 / math.sqrt(6), rel=1e-15)
    assert abs(sc_integrand(3.0, 1.0).imag) < 1e-15


def test_integrand_between_prevertices():
    # on (0, 1) two factors sit on their +i side: the value is negative real
    v = sc_integrand(0.5 + 1e-9j, 1e-3)
    assert v.real < 0 and abs(v.imag) < 1e-6 * abs(v)
    # on (1, 1 + eps) only one does: the value is negative imaginary
    w = sc_integrand(1.0005 + 1e-12j, 1e-3)
    assert w.imag < 0 and abs(w.real) < 1e-6 * abs(w)
    # the cuts point straight down, so the axis between prevertices is not a cut
    assert abs(sc_integrand(0.5 - 1e-9j, 1e-3) - v) < 1e-6 * abs(v)


def test_integrand_continuous_around_i():
    t = np.linspace(0, 2 * math.pi, 20001)
    vals = np.array([sc_integrand(1j + 0.5 * cmath.exp(1j * s), 0.1) for s in t])
    assert np.max(np.abs(np.diff(vals))) < 1e-3


def test_integrand_singular_at_prevertex():
    with pytest.raises(ValueError):
        sc_integrand(1.0, 0.1)


def test_vertices_at_moderate_eps():
    eps = 0.1
    L, l = L_epsilon(eps), l_epsilon(eps)
    v0, v1, v2, v3 = sc_vertices(eps)
    assert sc_map(0, eps) == 0
    assert abs(sc_map(1.0, eps) - (-L)) < 1e-8
    assert abs(sc_map(1.0 + eps, eps) - sc_map(1.0, eps) - (-1j * l)) < 1e-8
    assert abs(v2 - (-L - 1j * l)) < 1e-8
    assert abs(v3 - (-1j * l)) < 1e-8


@pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-4, 1e-8, 1e-12])
def test_vertices_across_scales(eps):
    L, l = L_epsilon(eps), l_epsilon(eps)
    _, v1, v2, v3 = sc_vertices(eps)
    assert abs(v1 + L) < 1e-10 * L
    assert abs(v2 - (-L - 1j * l)) < 1e-10 * L
    assert abs(v3 + 1j * l) < 1e-10 * L


def test_sides_are_axis_parallel():
    eps = 0.1
    L = L_epsilon(eps)
    for x in (-3.0, -0.2):
        assert abs(sc_map(x, eps).real) < 1e-10
    for x in (0.2, 0.7, 0.95):
        assert abs(sc_map(x, eps).imag) < 1e-10
    for x in (1.02, 1.05, 1.09):
        assert abs(sc_map(x, eps).real + L) < 1e-10
    # right angle at f(1)
    d = 1e-6
    a = sc_map(1 - d, eps) - sc_map(1.0, eps)
    b = sc_map(1 + d, eps) - sc_map(1.0, eps)
    assert abs(abs(cmath.phase(b / a)) - math.pi / 2) < 1e-6


def test_far_points_approach_last_vertex():
    eps = 0.1
    top = sc_vertices(eps)[3]
    gaps = [abs(sc_map(T * 1j, eps) - top) for T in (1e2, 1e4, 1e6)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 3 / math.sqrt(1e6)


@pytest.mark.parametrize("z", [1.2j, 0.8j, 0.3 + 0.2j, -2 + 0.5j, 3 + 1j, 0.5 + 1e-4j, 1.5 + 0.01j])
@pytest.mark.parametrize("eps", [0.1, 0.02, 1e-5])
def test_segment_and_arc_agree(z, eps):
    assert abs(sc_map(z, eps) - sc_map(z, eps, contour="arc")) < 1e-9


def test_map_lands_in_rectangle():
    eps = 0.1
    L, l = L_epsilon(eps), l_epsilon(eps)
    rng = np.random.default_rng(3)
    for _ in range(50):
        z = complex(rng.uniform(-5, 5), rng.uniform(0.01, 5))
        w = sc_map(z, eps)
        assert -L < w.real < 0
        assert -l < w.imag < 0


def test_map_rejects_lower_half_plane():
    with pytest.raises(ValueError):
        sc_map(0.5 - 0.1j, 0.1)
    with pytest.raises(ValueError):
        sc_map(1j, 0.0)


def test_quadrature_failure_is_reported(monkeypatch):
    monkeypatch.setattr(cf, "QUAD_TOL", 0.0)
    with pytest.raises(cf.QuadratureError, match="exceeds"):
        sc_map(0.3 + 0.2j, 0.1)


def test_limit_against_small_eps():
    assert abs(limit_f0(1j) - sc_map(1j, 1e-6)) < 1e-2
    assert abs(limit_f0(1j) - sc_map(1j, 1e-8)) < 1e-3


def test_limit_closed_form():
    for z in (1j, 0.3 + 0.2j, -2 + 0.5j, 3 + 1j, 5j):
        s = cmath.sqrt(z)
        exact = cmath.log((s - 1) / (s + 1)) - 1j * math.pi
        assert abs(limit_f0(z) - exact) < 1e-12
    assert limit_f0(1j).real == pytest.approx(-math.asinh(1.0), abs=1e-12)


def test_limit_needs_prefactor():
    # dropping exp(-i theta / 2) / sqrt(R) misses the small-eps map
    z = 2j
    bare = limit_f0(z) * math.sqrt(2.0) * cmath.exp(0.25j * math.pi)
    assert abs(bare - sc_map(z, 1e-8)) > 0.1
    assert abs(limit_f0(z) - sc_map(z, 1e-8)) < 1e-6


@given(st.floats(0.01, 10.0), st.floats(0.01, math.pi - 0.01))
def test_limit_real_part_negative(R, theta):
    w = limit_f0(R * cmath.exp(1j * theta))
    assert w.real < 0
    assert -math.pi <= w.imag <= 0


def test_limit_rejects_boundary():
    with pytest.raises(ValueError):
        limit_f0(2.0)
    with pytest.raises(ValueError):
        limit_f0(-2.0 + 0j)


def test_cayley_sends_i_to_zero():
    assert abs(cayley()(1j)) < 1e-15
    assert abs(1j * (0.5j - 1j) / (0.5j + 1j) - cayley()(0.5j)) < 1e-15


def test_identity_map():
    ident = MobiusMap.make(1, 0, 0, 1)
    assert mobius_apply(ident, 0.3 + 0.7j) == 0.3 + 0.7j


def test_pole_is_an_error():
    with pytest.raises(ZeroDivisionError):
        mobius_apply(cayley(), -1j)
    with pytest.raises(ValueError):
        MobiusMap.make(1, 2, 2, 4)


cplx_h = st.builds(complex, st.floats(-50, 50), st.floats(1e-3, 50))


@given(cplx_h)
def test_cayley_maps_half_plane_into_disk(z):
    assert abs(cayley()(z)) < 1.0


@given(cplx_h, st.floats(0.1, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_real_mobius_preserves_half_plane(z, a, b, c):
    m = MobiusMap.make(a, b, c, (1 + b * c) / a)
    w = m(z)
    assert abs(m.a * m.d - m.b * m.c - 1) < 1e-12
    assert w.imag > 0


@given(cplx_h)
def test_inverse_composes_to_identity(z):
    m = cayley()
    back = m.inverse().compose(m)
    assert abs(back(z) - z) <= 1e-14 * max(1.0, abs(z)) ** 2
    assert abs(m.inverse()(m(z)) - z) <= 1e-13 * max(1.0, abs(z)) ** 2
