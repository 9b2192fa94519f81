"""Domains, boundary partitions and point classification.

A domain is a list of walls.  A wall is either flat (``x[axis] = offset``)
or a sphere centred at the origin, with ``sign`` fixing which side is the
interior.  Each wall carries a scalar "natural coordinate" so a partition
can assign classes to pieces of it:

* ``none``: the wall has a single class everywhere
* ``line``: 2D flat wall, the other Cartesian coordinate
* ``radial``: nD flat wall, the distance from the wall's normal axis
* ``angle``: 2D circle, ``atan2(y, x)`` in ``[-pi, pi]``
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FLAT, SPHERE = 0, 1
COORD_MODES = {"none": 0, "line": 1, "radial": 2, "angle": 3}

# kernel class codes; lower code wins at corners
TARGET, ABSORBING, REFLECTING, INTERIOR = 1, 2, 3, 4

INF = math.inf


class BoundaryClass(enum.IntEnum):
    TARGET = TARGET
    ABSORBING = ABSORBING
    REFLECTING = REFLECTING
    INTERIOR = INTERIOR


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Wall:
    name: str
    kind: int
    axis: int
    offset: float
    sign: float
    coord: str
    lo: float
    hi: float

    def signed_distance(self, x: np.ndarray) -> float:
        if self.kind == FLAT:
            return self.sign * (x[self.axis] - self.offset)
        return self.sign * (self.offset - float(np.linalg.norm(x)))

    def coordinate(self, x: np.ndarray) -> float:
        if self.coord == "line":
            return float(x[1 - self.axis])
        if self.coord == "radial":
            mask = np.arange(len(x)) != self.axis
            return float(np.linalg.norm(x[mask]))
        if self.coord == "angle":
            return math.atan2(x[1], x[0])
        return 0.0


def _flat(name, axis, offset, sign, coord, lo=-INF, hi=INF) -> Wall:
    return Wall(name, FLAT, axis, float(offset), float(sign), coord, float(lo), float(hi))


def _sphere(name, radius, sign, coord="none", lo=0.0, hi=0.0) -> Wall:
    return Wall(name, SPHERE, -1, float(radius), float(sign), coord, float(lo), float(hi))


class Domain:
    dim: int

    def walls(self) -> tuple[Wall, ...]:
        raise NotImplementedError

    @property
    def scale(self) -> float:
        return 1.0

    @property
    def outer_radius(self) -> float:
        """Radius of the outermost origin-centred spherical wall, if any."""
        radii = [w.offset for w in self.walls() if w.kind == SPHERE and w.sign > 0]
        return max(radii) if radii else INF

    @property
    def tolerance(self) -> float:
        return 1e-12 * self.scale

    def wall(self, name: str) -> Wall:
        for w in self.walls():
            if w.name == name:
                return w
        raise GeometryError(f"{type(self).__name__} has no wall named {name!r}")


@dataclass(frozen=True)
class HalfPlane2D(Domain):
    """Upper half-plane ``y > 0``; the wall coordinate is ``x``."""
    dim: int = field(default=2, init=False)

    def walls(self):
        return (_flat("axis", 1, 0.0, 1.0, "line"),)


@dataclass(frozen=True)
class Strip2D(Domain):
    """``-L < x < 0``; walls ``left`` (x = -L) and ``right`` (x = 0)."""
    L: float = 1.0
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.L > 0:
            raise GeometryError("strip width must be positive")

    @property
    def scale(self):
        return self.L

    def walls(self):
        return (_flat("left", 0, -self.L, 1.0, "line"), _flat("right", 0, 0.0, -1.0, "line"))


@dataclass(frozen=True)
class Rectangle2D(Domain):
    """``[-L, 0] x [-l, 0]``, the image of the Schwarz-Christoffel map."""
    L: float = 1.0
    l: float = 1.0
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not (self.L > 0 and self.l > 0):
            raise GeometryError("rectangle sides must be positive")

    @property
    def scale(self):
        return max(self.L, self.l)

    def walls(self):
        L, l = self.L, self.l
        return (_flat("left", 0, -L, 1.0, "line", -l, 0.0),
                _flat("right", 0, 0.0, -1.0, "line", -l, 0.0),
                _flat("bottom", 1, -l, 1.0, "line", -L, 0.0),
                _flat("top", 1, 0.0, -1.0, "line", -L, 0.0))


@dataclass(frozen=True)
class Disk2D(Domain):
    radius: float = 1.0
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("radius must be positive")

    @property
    def scale(self):
        return self.radius

    def walls(self):
        return (_sphere("circle", self.radius, 1.0, "angle", -math.pi, math.pi),)


@dataclass(frozen=True)
class Annulus(Domain):
    dim: int = 2
    r_inner: float = 0.1
    r_outer: float = 1.0

    def __post_init__(self):
        if self.dim < 2:
            raise GeometryError("dimension must be at least 2")
        if not 0 < self.r_inner < self.r_outer:
            raise GeometryError("need 0 < r_inner < r_outer")

    @property
    def scale(self):
        return self.r_outer

    def walls(self):
        return (_sphere("inner", self.r_inner, -1.0), _sphere("outer", self.r_outer, 1.0))


@dataclass(frozen=True)
class HalfSpaceND(Domain):
    """``x_1 > 0`` in R^n; the flat wall coordinate is the distance from the x_1 axis."""
    dim: int = 3

    def __post_init__(self):
        if self.dim < 2:
            raise GeometryError("dimension must be at least 2")

    def walls(self):
        if self.dim == 2:
            return (_flat("flat", 0, 0.0, 1.0, "line"),)
        return (_flat("flat", 0, 0.0, 1.0, "radial", 0.0, INF),)


@dataclass(frozen=True)
class HalfBallND(Domain):
    """``{|x| < R, x_1 > 0}``: a flat disk plus the hemisphere."""
    dim: int = 3
    radius: float = 1.0

    def __post_init__(self):
        if self.dim < 2:
            raise GeometryError("dimension must be at least 2")
        if not self.radius > 0:
            raise GeometryError("radius must be positive")

    @property
    def scale(self):
        return self.radius

    def walls(self):
        R = self.radius
        if self.dim == 2:
            return (_flat("flat", 0, 0.0, 1.0, "line", -R, R),
                    _sphere("hemisphere", R, 1.0))
        return (_flat("flat", 0, 0.0, 1.0, "radial", 0.0, R),
                _sphere("hemisphere", R, 1.0))


@dataclass(frozen=True)
class Piece:
    wall: str
    lo: float = -INF
    hi: float = INF


@dataclass(frozen=True)
class BoundaryPartition:
    epsilon: float
    target: tuple[Piece, ...]
    absorbing: tuple[Piece, ...] = ()
    reflecting: tuple[Piece, ...] = ()

    def pieces(self):
        for cls, group in ((TARGET, self.target), (ABSORBING, self.absorbing),
                           (REFLECTING, self.reflecting)):
            for p in group:
                yield cls, p

    def validate(self, domain: Domain) -> None:
        tol = domain.tolerance
        by_wall: dict[str, list[tuple[float, float, int]]] = {}
        for cls, p in self.pieces():
            w = domain.wall(p.wall)
            if not p.lo <= p.hi:
                raise GeometryError(f"piece on {p.wall!r} has lo > hi")
            if w.coord == "none" and (p.lo, p.hi) != (-INF, INF):
                raise GeometryError(f"wall {p.wall!r} takes a single class; use the full range")
            by_wall.setdefault(p.wall, []).append((p.lo, p.hi, cls))
        for w in domain.walls():
            pieces = sorted(by_wall.get(w.name, []))
            if not pieces:
                raise GeometryError(f"wall {w.name!r} is not covered by the partition")
            if w.coord == "none":
                if len(pieces) > 1:
                    raise GeometryError(f"wall {w.name!r} has overlapping classes")
                continue
            reach = w.lo
            for i, (lo, hi, _) in enumerate(pieces):
                if lo > reach + tol:
                    raise GeometryError(f"gap on wall {w.name!r} between {reach} and {lo}")
                if i > 0 and lo < reach - tol:
                    raise GeometryError(f"overlapping pieces on wall {w.name!r} near {lo}")
                reach = max(reach, hi)
            if reach < w.hi - tol:
                raise GeometryError(f"gap on wall {w.name!r} between {reach} and {w.hi}")


# partition factories

def thm51_partition(epsilon: float) -> BoundaryPartition:
    """Target ``[1, 1+eps]``, absorbing ``(-inf, 0]``, reflecting elsewhere on the axis."""
    if not epsilon > 0:
        raise GeometryError("epsilon must be positive")
    return BoundaryPartition(
        epsilon=epsilon,
        target=(Piece("axis", 1.0, 1.0 + epsilon),),
        absorbing=(Piece("axis", -INF, 0.0),),
        reflecting=(Piece("axis", 0.0, 1.0), Piece("axis", 1.0 + epsilon, INF)))


def interval_partition(a: float, b: float) -> BoundaryPartition:
    """Half-plane with target ``[a, b]`` and the rest of the axis absorbing."""
    return BoundaryPartition(
        epsilon=b - a, target=(Piece("axis", a, b),),
        absorbing=(Piece("axis", -INF, a), Piece("axis", b, INF)))


def strip_partition() -> BoundaryPartition:
    return BoundaryPartition(epsilon=0.0, target=(Piece("left"),), absorbing=(Piece("right"),))


def rectangle_partition(rect: Rectangle2D) -> BoundaryPartition:
    return BoundaryPartition(
        epsilon=0.0,
        target=(Piece("left", -rect.l, 0.0),),
        absorbing=(Piece("right", -rect.l, 0.0),),
        reflecting=(Piece("bottom", -rect.L, 0.0), Piece("top", -rect.L, 0.0)))


def _arc_pieces(lo: float, hi: float) -> list[Piece]:
    # arcs are given in any angular range of length <= 2 pi and split at +-pi
    if not 0 <= hi - lo <= 2 * math.pi + 1e-15:
        raise GeometryError("arc must have length in [0, 2 pi]")
    shift = 2 * math.pi * math.floor((lo + math.pi) / (2 * math.pi))
    lo, hi = lo - shift, hi - shift
    if hi <= math.pi:
        return [Piece("circle", lo, hi)]
    return [Piece("circle", lo, math.pi), Piece("circle", -math.pi, hi - 2 * math.pi)]


def _complement(pieces: Sequence[Piece], lo: float, hi: float, wall: str) -> list[Piece]:
    out, reach = [], lo
    for p in sorted(pieces, key=lambda p: p.lo):
        if p.lo > reach:
            out.append(Piece(wall, reach, p.lo))
        reach = max(reach, p.hi)
    if reach < hi:
        out.append(Piece(wall, reach, hi))
    return out


def disk_arc_partition(theta_lo: float, theta_hi: float,
                       reflecting: tuple[float, float] | None = None) -> BoundaryPartition:
    """Target arc ``[theta_lo, theta_hi]``, optional reflecting arc, absorbing elsewhere."""
    target = _arc_pieces(theta_lo, theta_hi)
    refl = _arc_pieces(*reflecting) if reflecting is not None else []
    absorbing = _complement(target + refl, -math.pi, math.pi, "circle")
    return BoundaryPartition(epsilon=theta_hi - theta_lo, target=tuple(target),
                             absorbing=tuple(absorbing), reflecting=tuple(refl))


def annulus_partition() -> BoundaryPartition:
    return BoundaryPartition(epsilon=0.0, target=(Piece("inner"),), absorbing=(Piece("outer"),))


def disk_target_partition(domain: HalfSpaceND | HalfBallND, epsilon: float,
                          absorb_radius: float = INF) -> BoundaryPartition:
    """Target disk of radius ``epsilon`` at the origin of the flat wall, reflecting elsewhere.

    On ``HalfSpaceND`` the flat wall beyond ``absorb_radius`` is absorbing; on
    ``HalfBallND`` the hemisphere is absorbing.
    """
    if not epsilon > 0:
        raise GeometryError("epsilon must be positive")
    rim = domain.radius if isinstance(domain, HalfBallND) else absorb_radius
    if not epsilon < rim:
        raise GeometryError("target disk must fit inside the reflecting wall")
    absorbing: list[Piece] = []
    if domain.dim == 2:
        target = [Piece("flat", -epsilon, epsilon)]
        reflecting = [Piece("flat", -rim, -epsilon), Piece("flat", epsilon, rim)]
        if math.isfinite(absorb_radius) and isinstance(domain, HalfSpaceND):
            absorbing = [Piece("flat", -INF, -rim), Piece("flat", rim, INF)]
        elif isinstance(domain, HalfSpaceND):
            reflecting = [Piece("flat", -INF, -epsilon), Piece("flat", epsilon, INF)]
    else:
        target = [Piece("flat", 0.0, epsilon)]
        reflecting = [Piece("flat", epsilon, rim)]
        if math.isfinite(absorb_radius) and isinstance(domain, HalfSpaceND):
            absorbing = [Piece("flat", rim, INF)]
    if isinstance(domain, HalfBallND):
        absorbing.append(Piece("hemisphere"))
    return BoundaryPartition(epsilon=epsilon, target=tuple(target),
                             absorbing=tuple(absorbing), reflecting=tuple(reflecting))


# classification

def _piece_class(pieces: list[tuple[float, float, int]], c: float, tol: float) -> int:
    best = 0
    for lo, hi, cls in pieces:
        if lo - tol <= c <= hi + tol and (best == 0 or cls < best):
            best = cls
    if best:
        return best
    # numerically just past the end of the wall: nearest piece
    return min(pieces, key=lambda p: max(p[0] - c, c - p[1]))[2]


def _wall_pieces(partition: BoundaryPartition, name: str) -> list[tuple[float, float, int]]:
    return [(p.lo, p.hi, cls) for cls, p in partition.pieces() if p.wall == name]


def classify_point(domain: Domain, partition: BoundaryPartition, p: Sequence[float]) -> BoundaryClass:
    x = np.asarray(p, dtype=float)
    if x.shape != (domain.dim,):
        raise GeometryError(f"point must have dimension {domain.dim}")
    tol = domain.tolerance
    best = INTERIOR
    for w in domain.walls():
        d = w.signed_distance(x)
        if d < -tol:
            raise GeometryError(f"point {tuple(x)} lies outside the domain")
        if d <= tol:
            c = w.coordinate(x)
            ang_tol = tol / w.offset if w.coord == "angle" else tol
            cls = _piece_class(_wall_pieces(partition, w.name), c, ang_tol)
            best = min(best, cls)
    return BoundaryClass(best)


def distance_to_boundary(domain: Domain, p: Sequence[float]) -> float:
    """Euclidean distance to the boundary (all listed domains are convex or annular)."""
    x = np.asarray(p, dtype=float)
    d = INF
    for w in domain.walls():
        s = w.signed_distance(x)
        if s < -domain.tolerance:
            raise GeometryError(f"point {tuple(x)} lies outside the domain")
        d = min(d, max(s, 0.0))
    return d


def fold_strip(z: complex) -> float:
    """Fold ``Im z`` into ``[0, 1]`` by reflection at 0 and 1."""
    return 1.0 - abs(1.0 - (abs(z.imag) % 2.0))


def compile_tables(domain: Domain, partition: BoundaryPartition,
                   extra_walls: Sequence[tuple[Wall, int]] = ()):
    """Flatten a domain and partition into arrays for the path kernels.

    ``extra_walls`` adds single-class walls that are not part of the domain
    boundary, such as a stopping sphere inside the domain.

    Returns ``(walls, segs, axis_lo, axis_hi)``.  Rows of ``walls`` are
    ``[kind, axis, offset, sign, coord_mode, seg_start, seg_count, has_stop]``;
    rows of ``segs`` are ``[lo, hi, class]``.
    """
    partition.validate(domain)
    rows, segs = [], []
    entries = [(w, _wall_pieces(partition, w.name)) for w in domain.walls()]
    entries += [(w, [(-INF, INF, cls)]) for w, cls in extra_walls]
    for w, pieces in entries:
        start = len(segs)
        segs.extend(pieces)
        has_stop = any(cls in (TARGET, ABSORBING) for _, _, cls in pieces)
        rows.append([w.kind, w.axis, w.offset, w.sign, COORD_MODES[w.coord],
                     start, len(pieces), float(has_stop)])
    axis_lo = np.full(domain.dim, np.nan)
    axis_hi = np.full(domain.dim, np.nan)
    for w in domain.walls():
        if w.kind == FLAT:
            if w.sign > 0:
                axis_lo[w.axis] = w.offset
            else:
                axis_hi[w.axis] = w.offset
    return (np.array(rows, dtype=np.float64), np.array(segs, dtype=np.float64).reshape(-1, 3),
            axis_lo, axis_hi)
