import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rbmhit import geometry as g
from rbmhit.geometry import BoundaryClass as BC


def test_thm51_classes():
    dom = g.HalfPlane2D()
    part = g.thm51_partition(0.1)
    assert g.classify_point(dom, part, (1.05, 0.0)) == BC.TARGET
    assert g.classify_point(dom, part, (-1.0, 0.0)) == BC.ABSORBING
    assert g.classify_point(dom, part, (0.5, 0.0)) == BC.REFLECTING
    assert g.classify_point(dom, part, (0.5, 0.3)) == BC.INTERIOR


def test_corners_prefer_target_then_absorbing():
    dom = g.HalfPlane2D()
    part = g.thm51_partition(0.1)
    assert g.classify_point(dom, part, (1.0, 0.0)) == BC.TARGET
    assert g.classify_point(dom, part, (1.1, 0.0)) == BC.TARGET
    assert g.classify_point(dom, part, (0.0, 0.0)) == BC.ABSORBING
    ip = g.interval_partition(0.0, 1.0)
    assert g.classify_point(dom, ip, (1.0, 0.0)) == BC.TARGET


def test_tolerance_band():
    dom = g.HalfPlane2D()
    part = g.thm51_partition(0.1)
    assert g.classify_point(dom, part, (1.05, 1e-13)) == BC.TARGET
    assert g.classify_point(dom, part, (1.05, -1e-13)) == BC.TARGET
    with pytest.raises(g.GeometryError):
        g.classify_point(dom, part, (1.05, -1e-6))


def test_point_outside_is_an_error():
    with pytest.raises(g.GeometryError):
        g.classify_point(g.Disk2D(1.0), g.disk_arc_partition(0, 1), (1.5, 0.0))
    with pytest.raises(g.GeometryError):
        g.distance_to_boundary(g.Strip2D(1.0), (0.2, 0.0))


def test_wrong_dimension_is_an_error():
    with pytest.raises(g.GeometryError):
        g.classify_point(g.HalfPlane2D(), g.thm51_partition(0.1), (1.0, 0.0, 0.0))


@pytest.mark.parametrize("z, expected", [
    (0.3 + 0.5j, 0.5),
    (1 + 1.7j, 0.3),
    (-0.2j, 0.2),
    (0j, 0.0),
    (1j, 1.0),
    (2j, 0.0),
    (5.5j, 0.5),
])
def test_fold_strip_examples(z, expected):
    assert g.fold_strip(z) == pytest.approx(expected, abs=1e-12)


def _fold_iterated(z):
    h = abs(z.imag)
    # each pass moves h by at most 2 toward [0, 1]
    for _ in range(int(h) + 3):
        h = 1 - abs(1 - abs(h))
    return h


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(finite, finite)
def test_fold_strip_properties(x, y):
    z = complex(x, y)
    f = g.fold_strip(z)
    assert 0.0 <= f <= 1.0
    assert g.fold_strip(z + 2j) == pytest.approx(f, abs=1e-9)
    assert g.fold_strip(z.conjugate()) == f
    assert f == pytest.approx(_fold_iterated(z), abs=1e-9)


def test_distance_examples():
    assert g.distance_to_boundary(g.HalfPlane2D(), (3.0, 0.7)) == pytest.approx(0.7)
    assert g.distance_to_boundary(g.Annulus(2, 1.0, 2.0), (1.25, 0.0)) == pytest.approx(0.25)
    assert g.distance_to_boundary(g.Disk2D(1.0), (0.0, 0.0)) == pytest.approx(1.0)
    assert g.distance_to_boundary(g.Strip2D(1.0), (-0.3, 9.0)) == pytest.approx(0.3)
    assert g.distance_to_boundary(g.HalfBallND(3, 1.0), (0.2, 0.5, 0.0)) == pytest.approx(0.2)
    assert g.distance_to_boundary(g.Rectangle2D(2.0, 1.0), (-1.0, -0.8)) == pytest.approx(0.2)


def test_domain_invariants():
    with pytest.raises(g.GeometryError):
        g.Strip2D(0.0)
    with pytest.raises(g.GeometryError):
        g.Annulus(2, 1.0, 1.0)
    with pytest.raises(g.GeometryError):
        g.HalfSpaceND(1)
    with pytest.raises(g.GeometryError):
        g.Disk2D(-1.0)
    with pytest.raises(g.GeometryError):
        g.Rectangle2D(1.0, 0.0)


def test_partition_gap_and_overlap_are_rejected():
    dom = g.HalfPlane2D()
    gap = g.BoundaryPartition(0.1, target=(g.Piece("axis", 1.0, 1.1),),
                              absorbing=(g.Piece("axis", -math.inf, 0.0),),
                              reflecting=(g.Piece("axis", 1.1, math.inf),))
    with pytest.raises(g.GeometryError, match="gap"):
        gap.validate(dom)
    overlap = g.BoundaryPartition(0.1, target=(g.Piece("axis", 0.5, 1.1),),
                                  absorbing=(g.Piece("axis", -math.inf, 0.0),),
                                  reflecting=(g.Piece("axis", 0.0, 1.0),
                                              g.Piece("axis", 1.1, math.inf)))
    with pytest.raises(g.GeometryError, match="overlap"):
        overlap.validate(dom)
    missing = g.BoundaryPartition(0.0, target=(g.Piece("left"),))
    with pytest.raises(g.GeometryError, match="not covered"):
        missing.validate(g.Strip2D())


def _catalog():
    rect = g.Rectangle2D(2.0, 0.5)
    yield g.HalfPlane2D(), g.thm51_partition(0.1)
    yield g.HalfPlane2D(), g.interval_partition(-0.5, 0.25)
    yield g.Strip2D(1.5), g.strip_partition()
    yield rect, g.rectangle_partition(rect)
    yield g.Disk2D(2.0), g.disk_arc_partition(2.5, 4.0)
    yield g.Disk2D(1.0), g.disk_arc_partition(-0.5, 0.5, reflecting=(1.0, 2.0))
    yield g.Annulus(2, 0.1, 1.0), g.annulus_partition()
    yield g.Annulus(3, 0.3, 2.0), g.annulus_partition()
    yield g.HalfSpaceND(3), g.disk_target_partition(g.HalfSpaceND(3), 0.1, 2.0)
    yield g.HalfSpaceND(2), g.disk_target_partition(g.HalfSpaceND(2), 0.1)
    yield g.HalfBallND(3, 1.0), g.disk_target_partition(g.HalfBallND(3, 1.0), 0.05)
    yield g.HalfBallND(2, 1.0), g.disk_target_partition(g.HalfBallND(2, 1.0), 0.05)


def _boundary_points(dom, rng, n):
    walls = dom.walls()
    out = []
    for _ in range(n):
        w = walls[rng.integers(len(walls))]
        if w.kind == g.SPHERE:
            v = rng.normal(size=dom.dim)
            v *= w.offset / np.linalg.norm(v)
            if isinstance(dom, g.HalfBallND):
                v[0] = abs(v[0])
            out.append(v)
            continue
        lo = max(w.lo, -3.0)
        hi = min(w.hi, 3.0)
        x = rng.uniform(-3, 3, size=dom.dim)
        x[w.axis] = w.offset
        if dom.dim == 2:
            x[1 - w.axis] = rng.uniform(lo, hi)
        else:
            r = rng.uniform(max(lo, 0.0), hi)
            u = rng.normal(size=dom.dim - 1)
            x[np.arange(dom.dim) != w.axis] = r * u / np.linalg.norm(u)
        out.append(x)
    return out


def _expected_class(dom, part, x):
    # the piece containing the point, with the Target > Absorbing > Reflecting priority
    best = BC.INTERIOR
    for w in dom.walls():
        if abs(w.signed_distance(x)) > dom.tolerance:
            continue
        c = w.coordinate(x)
        for cls, p in part.pieces():
            if p.wall == w.name and p.lo <= c <= p.hi:
                best = min(best, BC(cls))
    return best


@pytest.mark.parametrize("dom, part", list(_catalog()))
def test_partition_tiles_boundary(dom, part):
    part.validate(dom)
    rng = np.random.default_rng(5)
    seen = set()
    for x in _boundary_points(dom, rng, 10**4):
        cls = g.classify_point(dom, part, x)
        assert cls != BC.INTERIOR
        assert cls == _expected_class(dom, part, x)
        seen.add(cls)
    assert BC.TARGET in seen


def test_partition_tiles_boundary_full_count():
    dom, part = g.HalfPlane2D(), g.thm51_partition(0.1)
    rng = np.random.default_rng(6)
    xs = np.column_stack([rng.uniform(-1, 3, 10**4), np.zeros(10**4)])
    classes = [g.classify_point(dom, part, x) for x in xs]
    assert BC.INTERIOR not in classes
    frac = np.mean([c == BC.TARGET for c in classes])
    assert frac == pytest.approx(0.1 / 4, abs=4 * math.sqrt(0.025 / 1e4))


def test_disk_arc_wraps_through_pi():
    part = g.disk_arc_partition(3.0, 3.5)
    dom = g.Disk2D(1.0)
    assert g.classify_point(dom, part, (math.cos(3.2), math.sin(3.2))) == BC.TARGET
    assert g.classify_point(dom, part, (math.cos(3.6), math.sin(3.6))) == BC.ABSORBING


def test_disk_target_rejects_oversized_target():
    with pytest.raises(g.GeometryError):
        g.disk_target_partition(g.HalfBallND(3, 1.0), 1.5)


def test_compile_tables_layout():
    walls, segs, lo, hi = g.compile_tables(g.HalfPlane2D(), g.thm51_partition(0.1))
    assert walls.shape == (1, 8)
    assert segs.shape == (4, 3)
    assert lo[1] == 0.0 and np.isnan(hi[1])
    assert walls[0, 7] == 1.0
