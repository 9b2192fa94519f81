import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numba import njit

from rbmhit.core import (Estimate, RngStream, binomial_estimate, init_state, normal_draw,
                         philox4x32, rng_normal, seed_path_rng, wilson_interval)


def _block(ctr, key):
    u = [np.uint64(v) for v in (*ctr, *key)]
    return [int(w) for w in philox4x32(*u)]


# Random123 known-answer vectors for philox4x32-10
@pytest.mark.parametrize("ctr, key, expected", [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
])
def test_philox_known_answers(ctr, key, expected):
    assert tuple(_block(ctr, key)) == expected


def test_same_seed_same_stream():
    a = seed_path_rng(42, 0)
    b = seed_path_rng(42, 0)
    assert np.array_equal(a.normals(100), b.normals(100))


def test_distinct_paths_differ():
    assert seed_path_rng(42, 0).normal() != seed_path_rng(42, 1).normal()


def test_distinct_seeds_differ():
    assert seed_path_rng(1, 5).normal() != seed_path_rng(2, 5).normal()


def test_normals_match_single_draws():
    a = seed_path_rng(3, 9)
    b = seed_path_rng(3, 9)
    assert np.array_equal(a.normals(7), [normal_draw(b) for _ in range(7)])


@njit(cache=True)
def _first_draws(seed, n):
    st = np.zeros(4, dtype=np.uint64)
    spare = np.zeros(1)
    out = np.empty(n)
    for k in range(n):
        init_state(st, spare, np.uint64(seed), np.uint64(k))
        out[k] = rng_normal(st, spare)
    return out


def test_first_draws_across_paths_are_centred():
    x = _first_draws(42, 10**6)
    assert abs(x.mean()) < 4.0 / math.sqrt(1e6)
    # neighbouring streams are uncorrelated
    assert abs(np.corrcoef(x[:-1], x[1:])[0, 1]) < 4.0 / math.sqrt(1e6)


def test_normal_moments():
    x = seed_path_rng(7, 0).normals(10**6)
    assert abs(x.mean()) < 4e-3
    assert abs(x.var() - 1.0) < 0.01
    # kurtosis of a normal is 3
    assert abs(np.mean(x**4) / x.var() ** 2 - 3.0) < 0.05


def test_uniform_range():
    rng = seed_path_rng(11, 3)
    u = np.array([rng.uniform() for _ in range(20000)])
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 4 * math.sqrt(1 / 12 / 20000)


def test_stream_rejects_out_of_range_seed():
    with pytest.raises(ValueError):
        RngStream(-1, 0)
    with pytest.raises(ValueError):
        RngStream(0, 2**64)


def test_wilson_zero_hits():
    e = binomial_estimate(0, 100, 0.95)
    assert e.p_hat == 0.0
    assert e.ci_low == 0.0
    assert e.ci_high == pytest.approx(0.036993, abs=1e-6)


def test_wilson_half_is_symmetric():
    e = binomial_estimate(50, 100, 0.95)
    assert e.p_hat == 0.5
    assert 0.5 - e.ci_low == pytest.approx(e.ci_high - 0.5, abs=1e-15)


def test_wilson_all_hits():
    assert binomial_estimate(100, 100, 0.95).ci_high == 1.0


def test_zero_paths_is_an_error():
    with pytest.raises(ValueError):
        binomial_estimate(0, 0)
    with pytest.raises(ValueError):
        binomial_estimate(5, 4)


def _wilson_by_roots(k, n, z):
    # endpoints solve (p_hat - p)^2 = z^2 p (1 - p) / n
    ph = k / n
    a = 1 + z * z / n
    b = -(2 * ph + z * z / n)
    c = ph * ph
    return sorted(np.roots([a, b, c]).real)


@given(st.integers(1, 10**6).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))),
       st.sampled_from([0.5, 0.9, 0.95, 0.99]))
def test_wilson_matches_quadratic_roots(kn, conf):
    k, n = kn
    e = binomial_estimate(k, n, conf)
    lo, hi = _wilson_by_roots(k, n, _z(conf))
    assert 0.0 <= e.ci_low <= e.p_hat <= e.ci_high <= 1.0
    assert e.p_hat == k / n
    assert e.ci_low == pytest.approx(max(lo, 0.0), abs=1e-9)
    assert e.ci_high == pytest.approx(min(hi, 1.0), abs=1e-9)


def _z(conf):
    from scipy.stats import norm
    return norm.ppf(0.5 + conf / 2)


@pytest.mark.parametrize("p", [0.01, 0.1, 0.5])
def test_wilson_coverage(p):
    n = 1000
    z = _z(0.95)
    ks = np.random.default_rng(2024).binomial(n, p, size=10**4)
    cover = np.mean([lo <= p <= hi for lo, hi in (wilson_interval(int(k), n, z) for k in ks)])
    assert 0.93 <= cover <= 0.97


def test_timeout_flag():
    assert binomial_estimate(10, 1000, n_timeouts=5).flags == ()
    e = binomial_estimate(10, 1000, n_timeouts=11)
    assert e.flags and e.timeout_fraction == pytest.approx(0.011)


def test_sigma_is_one_sigma_halfwidth():
    e = binomial_estimate(300, 1000)
    assert e.sigma == pytest.approx(math.sqrt(0.3 * 0.7 / 1000), rel=2e-3)


@settings(max_examples=50)
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
def test_stream_is_deterministic_and_finite(seed, path):
    a = seed_path_rng(seed, path).normals(5)
    b = seed_path_rng(seed, path).normals(5)
    assert np.array_equal(a, b)
    assert np.all(np.isfinite(a))


def test_estimate_is_value_type():
    e = binomial_estimate(3, 10, master_seed=9)
    assert e == Estimate(**{f: getattr(e, f) for f in e.__dataclass_fields__})
