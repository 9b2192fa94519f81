"""Reflected Brownian paths stopped on target or absorbing boundary.

Near a stopping set the path advances by Euler-Maruyama steps of size
``dt``.  Contacts inside a step are detected by the straight chord and, with
bridge correction, by sampling the Brownian-bridge touch probability
``exp(-2 d0 d1 / dt)`` against every wall that can stop the path.  Reflecting
walls fold the end point back by mirror images.

Far from every stopping set the path can instead jump to a uniform point on
the largest sphere that avoids all stopping walls and all curved walls.
Reflecting flat walls do not limit the sphere: the mirrored path is a free
Brownian motion there, so folding the jump's end point is exact.  The clock
advances by the mean exit time ``r^2 / n``.  Hitting probabilities are
unaffected because they depend only on the path's trace.  The default
``max_time`` is large because the half-plane exit time has tail ``t^-1/4``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .core import Estimate, RngStream, binomial_estimate, init_state, rng_normal, rng_uniform
from .geometry import (ABSORBING, FLAT, INTERIOR, REFLECTING, SPHERE, TARGET, BoundaryClass,
                       BoundaryPartition, Domain, GeometryError, Wall, classify_point,
                       compile_tables, distance_to_boundary)

TIMEOUT = 0
_OUTSIDE = -1
CHUNK = 2048
_BRIDGE_FLOOR = 1e-15


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    max_time: float = 1e10
    bridge_correction: bool = True
    master_seed: int = 0
    n_paths: int = 10_000
    sphere_jumps: bool = True
    jump_factor: float = 4.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if self.n_paths <= 0:
            raise ValueError("n_paths must be positive")
        if self.jump_factor < 1:
            raise ValueError("jump_factor must be at least 1")


@dataclass(frozen=True)
class PathState:
    position: np.ndarray
    time: float = 0.0


@dataclass(frozen=True)
class PathOutcome:
    cls: str
    exit_point: tuple[float, ...]
    exit_time: float
    steps: int


OUTCOME_NAMES = {TARGET: "HitTarget", ABSORBING: "HitAbsorbing", TIMEOUT: "Timeout"}


@dataclass(frozen=True)
class Localization:
    """Optional spheres centred at the origin used by the localization check.

    ``arm_radius > 0``: the truncation sphere becomes absorbing only after the
    path first comes within ``arm_radius`` of the origin.  ``arm_radius == 0``
    with finite ``trunc_radius`` truncates from the start.
    """
    arm_radius: float = 0.0
    trunc_radius: float = math.inf


@dataclass
class PathBatch:
    cls: np.ndarray
    exit_points: np.ndarray
    exit_times: np.ndarray
    steps: np.ndarray

    def estimate(self, master_seed: int, confidence: float = 0.95) -> Estimate:
        hits = int(np.count_nonzero(self.cls == TARGET))
        timeouts = int(np.count_nonzero(self.cls == TIMEOUT))
        return binomial_estimate(hits, len(self.cls), confidence, master_seed, timeouts)


# numba kernels

@njit(cache=True, nogil=True)
def _norm(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i] * x[i]
    return math.sqrt(s)


@njit(cache=True, nogil=True)
def _sd(walls, w, x):
    if walls[w, 0] == FLAT:
        return walls[w, 3] * (x[int(walls[w, 1])] - walls[w, 2])
    return walls[w, 3] * (walls[w, 2] - _norm(x))


@njit(cache=True, nogil=True)
def _coord(walls, w, x):
    mode = int(walls[w, 4])
    a = int(walls[w, 1])
    if mode == 1:
        return x[1 - a]
    if mode == 2:
        s = 0.0
        for i in range(x.shape[0]):
            if i != a:
                s += x[i] * x[i]
        return math.sqrt(s)
    if mode == 3:
        return math.atan2(x[1], x[0])
    return 0.0


@njit(cache=True, nogil=True)
def _wall_class(walls, segs, w, x, tol):
    c = _coord(walls, w, x)
    if walls[w, 4] == 3:
        tol = tol / walls[w, 2]
    s0 = int(walls[w, 5])
    s1 = s0 + int(walls[w, 6])
    best = 0
    for s in range(s0, s1):
        if segs[s, 0] - tol <= c <= segs[s, 1] + tol:
            cls = int(segs[s, 2])
            if best == 0 or cls < best:
                best = cls
    if best != 0:
        return best
    gap = math.inf
    for s in range(s0, s1):
        g = max(segs[s, 0] - c, c - segs[s, 1])
        if g < gap:
            gap = g
            best = int(segs[s, 2])
    return best


@njit(cache=True, nogil=True)
def _classify(walls, segs, x, tol):
    best = INTERIOR
    for w in range(walls.shape[0]):
        d = _sd(walls, w, x)
        if d < -tol:
            return _OUTSIDE
        if d <= tol:
            cls = _wall_class(walls, segs, w, x, tol)
            if cls < best:
                best = cls
    return best


@njit(cache=True, nogil=True)
def _contact_class(walls, segs, w, x, tol):
    best = _wall_class(walls, segs, w, x, tol)
    for v in range(walls.shape[0]):
        if v != w and abs(_sd(walls, v, x)) <= tol:
            cls = _wall_class(walls, segs, v, x, tol)
            if cls < best:
                best = cls
    return best


@njit(cache=True, nogil=True)
def _stop_distance(walls, segs, x):
    """Radius of the largest ball around x free of stopping and curved walls."""
    d = math.inf
    for w in range(walls.shape[0]):
        dn = abs(_sd(walls, w, x))
        if walls[w, 0] == SPHERE:
            if dn < d:
                d = dn
            continue
        if walls[w, 7] == 0.0:
            continue
        mode = int(walls[w, 4])
        c = _coord(walls, w, x)
        s0 = int(walls[w, 5])
        for s in range(s0, s0 + int(walls[w, 6])):
            cls = segs[s, 2]
            if cls != TARGET and cls != ABSORBING:
                continue
            gap = 0.0
            if mode != 0:
                gap = max(segs[s, 0] - c, c - segs[s, 1], 0.0)
            r = math.sqrt(dn * dn + gap * gap)
            if r < d:
                d = r
    return d


@njit(cache=True, nogil=True)
def _fold_flat(q, axis_lo, axis_hi):
    for a in range(q.shape[0]):
        lo = axis_lo[a]
        hi = axis_hi[a]
        has_lo = not math.isnan(lo)
        has_hi = not math.isnan(hi)
        if has_lo and has_hi:
            width = hi - lo
            u = (q[a] - lo) % (2.0 * width)
            if u > width:
                u = 2.0 * width - u
            q[a] = lo + u
        elif has_lo:
            if q[a] < lo:
                q[a] = 2.0 * lo - q[a]
        elif has_hi:
            if q[a] > hi:
                q[a] = 2.0 * hi - q[a]


@njit(cache=True, nogil=True)
def _fold_spheres(walls, q):
    for w in range(walls.shape[0]):
        if walls[w, 0] != SPHERE:
            continue
        r = walls[w, 2]
        rho = _norm(q)
        if walls[w, 3] * (r - rho) < 0.0 and rho > 0.0:
            f = (2.0 * r - rho) / rho
            for i in range(q.shape[0]):
                q[i] *= f


@njit(cache=True, nogil=True)
def _sphere_crossing(x, dx, r, inside_out):
    """First chord parameter in [0, 1] where |x + t dx| = r, or -1."""
    a = 0.0
    b = 0.0
    c = -r * r
    for i in range(x.shape[0]):
        a += dx[i] * dx[i]
        b += 2.0 * x[i] * dx[i]
        c += x[i] * x[i]
    if a == 0.0:
        return -1.0
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return -1.0
    sq = math.sqrt(disc)
    if inside_out:
        # start inside the ball, leave through the sphere
        t = (-b + sq) / (2.0 * a)
    else:
        t = (-b - sq) / (2.0 * a)
    if 0.0 <= t <= 1.0:
        return t
    return -1.0


@njit(cache=True, nogil=True)
def bridge_probability(d0, d1, dt):
    if d0 <= 0.0 or d1 <= 0.0:
        return 1.0
    return math.exp(-2.0 * d0 * d1 / dt)


@njit(cache=True, nogil=True)
def _event_time(walls, w, x, dx, q, dt, bridge, st, spare):
    d0 = _sd(walls, w, x)
    d1 = _sd(walls, w, q)
    if walls[w, 0] == FLAT:
        if d1 < 0.0:
            return d0 / (d0 - d1) if d0 > 0.0 else 0.0
    else:
        t = _sphere_crossing(x, dx, walls[w, 2], walls[w, 3] > 0.0)
        if t >= 0.0:
            return t
        if d1 < 0.0:
            return 1.0
    if bridge and walls[w, 7] != 0.0:
        p = bridge_probability(d0, d1, dt)
        if p > _BRIDGE_FLOOR and rng_uniform(st, spare) < p:
            s = d0 + d1
            return d0 / s if s > 0.0 else 0.0
    return -1.0


@njit(cache=True, nogil=True)
def _project(walls, w, c):
    if walls[w, 0] == FLAT:
        c[int(walls[w, 1])] = walls[w, 2]
    else:
        rho = _norm(c)
        if rho > 0.0:
            f = walls[w, 2] / rho
            for i in range(c.shape[0]):
                c[i] *= f


@njit(cache=True, nogil=True)
def _aux_sphere_event(x, dx, q, r, inside_out, dt, bridge, st, spare):
    """Contact with an interior sphere that is not a domain wall."""
    t = _sphere_crossing(x, dx, r, inside_out)
    if t >= 0.0:
        return t
    sgn = 1.0 if inside_out else -1.0
    d0 = sgn * (r - _norm(x))
    d1 = sgn * (r - _norm(q))
    if d1 < 0.0:
        return 1.0
    if bridge:
        p = bridge_probability(d0, d1, dt)
        if p > _BRIDGE_FLOOR and rng_uniform(st, spare) < p:
            s = d0 + d1
            return d0 / s if s > 0.0 else 0.0
    return -1.0


@njit(cache=True, nogil=True)
def run_one(walls, segs, axis_lo, axis_hi, x, dt, max_time, bridge, jumps, jump_factor,
            arm_r, trunc_r, tol, st, spare, out_exit):
    """Run one path from ``x`` (modified in place).  Returns (class, time, steps)."""
    n = x.shape[0]
    q = np.empty(n)
    dx = np.empty(n)
    c = np.empty(n)
    sq = math.sqrt(dt)
    zone = jump_factor * sq
    t = 0.0
    steps = 0
    armed = not (arm_r > 0.0) or _norm(x) <= arm_r
    truncating = trunc_r < math.inf
    while True:
        if t >= max_time:
            for i in range(n):
                out_exit[i] = x[i]
            return TIMEOUT, t, steps
        if jumps:
            d = _stop_distance(walls, segs, x)
            rho = _norm(x)
            if not armed:
                d = min(d, abs(rho - arm_r))
            elif truncating:
                d = min(d, trunc_r - rho)
            if d == math.inf:
                # nothing can stop this path
                for i in range(n):
                    out_exit[i] = x[i]
                return TIMEOUT, max_time, steps
            if d > zone:
                s = 0.0
                for i in range(n):
                    dx[i] = rng_normal(st, spare)
                    s += dx[i] * dx[i]
                s = d / math.sqrt(s)
                for i in range(n):
                    x[i] += s * dx[i]
                _fold_flat(x, axis_lo, axis_hi)
                t += d * d / n
                steps += 1
                continue
        for i in range(n):
            dx[i] = sq * rng_normal(st, spare)
            q[i] = x[i] + dx[i]
        best_t = 2.0
        best_cls = 0
        for w in range(walls.shape[0]):
            et = _event_time(walls, w, x, dx, q, dt, bridge, st, spare)
            if et < 0.0 or et >= best_t:
                continue
            for i in range(n):
                c[i] = x[i] + et * dx[i]
            _project(walls, w, c)
            cls = _contact_class(walls, segs, w, c, tol)
            if cls == TARGET or cls == ABSORBING:
                best_t = et
                best_cls = cls
                for i in range(n):
                    out_exit[i] = c[i]
        if armed and truncating:
            et = _aux_sphere_event(x, dx, q, trunc_r, True, dt, bridge, st, spare)
            if et >= 0.0 and et < best_t:
                best_t = et
                best_cls = ABSORBING
                for i in range(n):
                    out_exit[i] = x[i] + et * dx[i]
                rho = _norm(out_exit)
                for i in range(n):
                    out_exit[i] *= trunc_r / rho
        steps += 1
        if best_cls != 0:
            return best_cls, t + best_t * dt, steps
        t += dt
        if not armed:
            if _aux_sphere_event(x, dx, q, arm_r, False, dt, bridge, st, spare) >= 0.0:
                armed = True
        _fold_flat(q, axis_lo, axis_hi)
        _fold_spheres(walls, q)
        for i in range(n):
            x[i] = q[i]


@njit(cache=True, nogil=True)
def _sample_start(x, start, radius, axis_lo, axis_hi, st, spare):
    n = x.shape[0]
    if radius <= 0.0:
        for i in range(n):
            x[i] = start[i]
        return
    s = 0.0
    for i in range(n):
        x[i] = rng_normal(st, spare)
        s += x[i] * x[i]
    s = radius / math.sqrt(s)
    for i in range(n):
        x[i] = start[i] + s * x[i]
    _fold_flat(x, axis_lo, axis_hi)


@njit(cache=True, nogil=True)
def run_batch(walls, segs, axis_lo, axis_hi, starts, start_radius, dt, max_time, bridge,
              jumps, jump_factor, arm_r, trunc_r, tol, seed, index0, out_cls, out_exit,
              out_time, out_steps):
    n = starts.shape[1]
    st = np.zeros(4, dtype=np.uint64)
    spare = np.zeros(1)
    x = np.empty(n)
    e = np.empty(n)
    for k in range(out_cls.shape[0]):
        init_state(st, spare, seed, np.uint64(index0 + k))
        row = k if starts.shape[0] > 1 else 0
        _sample_start(x, starts[row], start_radius, axis_lo, axis_hi, st, spare)
        cls, t, steps = run_one(walls, segs, axis_lo, axis_hi, x, dt, max_time, bridge, jumps,
                                jump_factor, arm_r, trunc_r, tol, st, spare, e)
        out_cls[k] = cls
        out_time[k] = t
        out_steps[k] = steps
        for i in range(n):
            out_exit[k, i] = e[i]


@njit(cache=True, nogil=True)
def _reflect_step(walls, axis_lo, axis_hi, x, dx):
    for i in range(x.shape[0]):
        x[i] += dx[i]
    _fold_flat(x, axis_lo, axis_hi)
    _fold_spheres(walls, x)


# python API

def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("RBMHIT_WORKERS", os.cpu_count() or 1))
    if workers < 1:
        raise ValueError("workers must be at least 1")
    return workers


def _check_start(domain: Domain, partition: BoundaryPartition, start) -> np.ndarray:
    x = np.asarray(start, dtype=float)
    if x.shape != (domain.dim,):
        raise GeometryError(f"start must have dimension {domain.dim}")
    if classify_point(domain, partition, x) != BoundaryClass.INTERIOR \
            or distance_to_boundary(domain, x) <= domain.tolerance:
        raise GeometryError(f"start {tuple(x)} is not strictly inside the domain")
    return x


def step_reflected(domain: Domain, s: PathState, dt: float, rng: RngStream,
                   increment: Sequence[float] | None = None) -> PathState:
    """One Euler step with mirror reflection at every wall, ignoring the partition."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.array(s.position, dtype=float)
    if increment is None:
        dx = math.sqrt(dt) * rng.normals(domain.dim)
    else:
        dx = np.asarray(increment, dtype=float)
    walls, _, lo, hi = _tables_all_reflecting(domain)
    _reflect_step(walls, lo, hi, x, dx)
    return PathState(position=x, time=s.time + dt)


def _tables_all_reflecting(domain: Domain):
    from .geometry import Piece
    pieces = []
    for w in domain.walls():
        pieces.append(Piece(w.name) if w.coord == "none" else Piece(w.name, w.lo, w.hi))
    part = BoundaryPartition(epsilon=0.0, target=(), reflecting=tuple(pieces))
    return compile_tables(domain, part)


def bridge_crossing_probability(d0: float, d1: float, dt: float) -> float:
    """Chance that a Brownian bridge between wall distances d0, d1 touches the wall."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if d0 < 0 or d1 < 0:
        raise ValueError("distances must be non-negative")
    return float(bridge_probability(d0, d1, dt))


def run_path(domain: Domain, partition: BoundaryPartition, start, cfg: SimConfig,
             rng: RngStream) -> PathOutcome:
    x = _check_start(domain, partition, start).copy()
    walls, segs, lo, hi = compile_tables(domain, partition)
    e = np.empty(domain.dim)
    cls, t, steps = run_one(walls, segs, lo, hi, x, cfg.dt, cfg.max_time, cfg.bridge_correction,
                            cfg.sphere_jumps, cfg.jump_factor, 0.0, math.inf, domain.tolerance,
                            rng.state, rng.spare, e)
    return PathOutcome(OUTCOME_NAMES[cls], tuple(float(v) for v in e), float(t), int(steps))


def simulate_paths(domain: Domain, partition: BoundaryPartition, starts, cfg: SimConfig, *,
                   start_radius: float = 0.0, localization: Localization = Localization(),
                   extra_walls: Sequence[tuple[Wall, int]] = (), index_offset: int = 0,
                   workers: int | None = None) -> PathBatch:
    """Run ``cfg.n_paths`` paths; path ``k`` uses stream ``index_offset + k``.

    ``starts`` is one point or one point per path.  With ``start_radius > 0``
    each path starts uniformly on the sphere of that radius about the start,
    folded into the domain.
    """
    pts = np.atleast_2d(np.asarray(starts, dtype=float))
    if pts.shape[0] not in (1, cfg.n_paths):
        raise ValueError("starts must be one point or one point per path")
    if start_radius <= 0:
        for p in pts[: min(len(pts), 64)]:
            _check_start(domain, partition, p)
    if localization.trunc_radius >= domain.outer_radius:
        # the domain wall already absorbs there
        localization = Localization()
    walls, segs, lo, hi = compile_tables(domain, partition, extra_walls)
    n = cfg.n_paths
    cls = np.empty(n, dtype=np.int8)
    exits = np.empty((n, domain.dim))
    times = np.empty(n)
    steps = np.empty(n, dtype=np.int64)
    bounds = [(a, min(a + CHUNK, n)) for a in range(0, n, CHUNK)]

    def work(ab):
        a, b = ab
        run_batch(walls, segs, lo, hi, pts[a:b] if len(pts) > 1 else pts, start_radius,
                  cfg.dt, cfg.max_time, cfg.bridge_correction, cfg.sphere_jumps,
                  cfg.jump_factor, localization.arm_radius, localization.trunc_radius,
                  domain.tolerance, np.uint64(cfg.master_seed), index_offset + a,
                  cls[a:b], exits[a:b], times[a:b], steps[a:b])

    nw = min(_workers(workers), len(bounds))
    if nw == 1:
        for ab in bounds:
            work(ab)
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            list(pool.map(work, bounds))
    return PathBatch(cls, exits, times, steps)


def estimate_hit_probability(domain: Domain, partition: BoundaryPartition, start,
                             cfg: SimConfig, *, confidence: float = 0.95,
                             workers: int | None = None, **kwargs) -> Estimate:
    batch = simulate_paths(domain, partition, start, cfg, workers=workers, **kwargs)
    return batch.estimate(cfg.master_seed, confidence)
