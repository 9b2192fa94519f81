"""Counter-based random streams and binomial estimates.

Every path owns an independent Philox4x32-10 stream keyed by the master
seed, with the path index in the upper half of the 128-bit counter.  A
path's draws therefore depend only on ``(master_seed, path_index)`` and
never on how paths are split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np
from numba import njit

_MUL0 = np.uint64(0xD2511F53)
_MUL1 = np.uint64(0xCD9E8D57)
_WEYL0 = np.uint64(0x9E3779B9)
_WEYL1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S5 = np.uint64(5)
_S6 = np.uint64(6)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_TWO_PI = 2.0 * math.pi

# state layout: [seed, path_index, block_counter, has_spare]
SEED, PATH, BLOCK, SPARE = 0, 1, 2, 3
_U64_MAX = 2**64


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten rounds of Philox4x32 on 32-bit words held in uint64."""
    for _ in range(10):
        p0 = _MUL0 * c0
        p1 = _MUL1 * c2
        n0 = ((p1 >> _S32) ^ c1 ^ k0) & _MASK
        n1 = p1 & _MASK
        n2 = ((p0 >> _S32) ^ c3 ^ k1) & _MASK
        n3 = p0 & _MASK
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + _WEYL0) & _MASK
        k1 = (k1 + _WEYL1) & _MASK
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def _next_block(st):
    seed = st[0]
    path = st[1]
    blk = st[2]
    st[2] = blk + _ONE
    return philox4x32(blk & _MASK, blk >> _S32, path & _MASK, path >> _S32,
                      seed & _MASK, seed >> _S32)


@njit(cache=True, nogil=True)
def _u53(a, b):
    return ((a >> _S5) * 67108864.0 + (b >> _S6)) / 9007199254740992.0


@njit(cache=True, nogil=True)
def rng_uniform(st, spare):
    """Uniform on [0, 1) with 53 random bits; always consumes a fresh block."""
    w0, w1, w2, w3 = _next_block(st)
    return _u53(w0, w1)


@njit(cache=True, nogil=True)
def rng_normal(st, spare):
    """Standard normal by Box-Muller; the second variate is buffered."""
    if st[3] != _ZERO:
        st[3] = _ZERO
        return spare[0]
    w0, w1, w2, w3 = _next_block(st)
    u1 = 1.0 - _u53(w0, w1)
    u2 = _u53(w2, w3)
    r = math.sqrt(-2.0 * math.log(u1))
    spare[0] = r * math.sin(_TWO_PI * u2)
    st[3] = _ONE
    return r * math.cos(_TWO_PI * u2)


@njit(cache=True, nogil=True)
def init_state(st, spare, seed, path):
    st[0] = seed
    st[1] = path
    st[2] = _ZERO
    st[3] = _ZERO
    spare[0] = 0.0


@njit(cache=True, nogil=True)
def fill_normals(st, spare, out):
    for i in range(out.shape[0]):
        out[i] = rng_normal(st, spare)


def _check_u64(name: str, v: int) -> int:
    v = int(v)
    if not 0 <= v < _U64_MAX:
        raise ValueError(f"{name} must lie in [0, 2**64), got {v}")
    return v


class RngStream:
    """Per-path stream.  Thin wrapper over the state arrays used by the kernels."""

    def __init__(self, master_seed: int, path_index: int):
        self.master_seed = _check_u64("master_seed", master_seed)
        self.path_index = _check_u64("path_index", path_index)
        self.state = np.zeros(4, dtype=np.uint64)
        self.spare = np.zeros(1, dtype=np.float64)
        init_state(self.state, self.spare, np.uint64(self.master_seed),
                   np.uint64(self.path_index))

    def normal(self) -> float:
        return float(rng_normal(self.state, self.spare))

    def normals(self, k: int) -> np.ndarray:
        out = np.empty(k)
        fill_normals(self.state, self.spare, out)
        return out

    def uniform(self) -> float:
        return float(rng_uniform(self.state, self.spare))

    def __repr__(self) -> str:
        return (f"RngStream(master_seed={self.master_seed}, path_index={self.path_index}, "
                f"block={int(self.state[BLOCK])})")


def seed_path_rng(master_seed: int, path_index: int) -> RngStream:
    return RngStream(master_seed, path_index)


def normal_draw(rng: RngStream) -> float:
    return rng.normal()


def _z_value(confidence: float) -> float:
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    return NormalDist().inv_cdf(0.5 + confidence / 2.0)


def wilson_interval(n_hits: int, n_paths: int, z: float) -> tuple[float, float]:
    p = n_hits / n_paths
    z2 = z * z
    denom = 1.0 + z2 / n_paths
    center = (p + z2 / (2.0 * n_paths)) / denom
    half = z / denom * math.sqrt(p * (1.0 - p) / n_paths + z2 / (4.0 * n_paths * n_paths))
    lo = max(0.0, min(center - half, p))
    hi = min(1.0, max(center + half, p))
    if n_hits == 0:
        lo = 0.0
    if n_hits == n_paths:
        hi = 1.0
    return lo, hi


@dataclass(frozen=True)
class Estimate:
    p_hat: float
    ci_low: float
    ci_high: float
    n_paths: int
    n_hits: int
    master_seed: int
    confidence: float = 0.95
    n_timeouts: int = 0
    flags: tuple[str, ...] = field(default_factory=tuple)

    @property
    def sigma(self) -> float:
        """Wilson half-width at one standard deviation."""
        lo, hi = wilson_interval(self.n_hits, self.n_paths, 1.0)
        return 0.5 * (hi - lo)

    @property
    def timeout_fraction(self) -> float:
        return self.n_timeouts / self.n_paths


def binomial_estimate(n_hits: int, n_paths: int, confidence: float = 0.95,
                      master_seed: int = 0, n_timeouts: int = 0) -> Estimate:
    if n_paths <= 0:
        raise ValueError("n_paths must be positive")
    if not 0 <= n_hits <= n_paths:
        raise ValueError(f"n_hits={n_hits} outside [0, {n_paths}]")
    if not 0 <= n_timeouts <= n_paths - n_hits:
        raise ValueError("n_timeouts must count non-hit paths only")
    lo, hi = wilson_interval(n_hits, n_paths, _z_value(confidence))
    flags: tuple[str, ...] = ()
    if n_timeouts > 0.01 * n_paths:
        flags = ("timeout_fraction_above_1pct",)
    return Estimate(p_hat=n_hits / n_paths, ci_low=lo, ci_high=hi, n_paths=n_paths,
                    n_hits=n_hits, master_seed=master_seed, confidence=confidence,
                    n_timeouts=n_timeouts, flags=flags)
