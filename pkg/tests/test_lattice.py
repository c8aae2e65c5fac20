import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gibbslab.lattice import (
    Bond,
    GeometryError,
    Volume,
    annulus,
    bonds_touching,
    box,
    centered_box,
    closure,
    inner_boundary,
    interior,
    linf,
    nn_neighbors,
    parse_volume,
    r_boundary,
)

coords = st.integers(-4, 4)


@st.composite
def volumes(draw, d=2, max_size=8):
    pts = draw(st.lists(st.tuples(*([coords] * d)), min_size=1, max_size=max_size))
    return Volume.of(pts, d)


def test_sites_sorted_and_deduplicated():
    v = Volume.of([(1, 0), (0, 1), (1, 0), (0, 0)])
    assert v.sites == ((0, 0), (0, 1), (1, 0))
    assert v.index((1, 0)) == 2


def test_box_and_centered_box():
    assert len(box(0, 2, 2)) == 9
    assert box((0, -1), (1, 1)).shape() == (2, 3)
    assert centered_box(3, 2).bounds() == ((-1, -1), (1, 1))
    assert centered_box(4, 1).bounds() == ((-1,), (2,))
    with pytest.raises(GeometryError):
        box((0, 0), (-1, 0))


def test_boundary_uses_max_metric():
    x = Volume.of([(0, 0)])
    assert len(r_boundary(x, 1)) == 8
    assert len(r_boundary(x, 2)) == 24
    assert closure(x, 1) == box(-1, 1, 2)


def test_inner_boundary_and_interior_of_box():
    b = box(0, 3, 2)
    assert len(inner_boundary(b, 1)) == 12
    assert interior(b, 1) == box(1, 2, 2)
    assert annulus(b, interior(b, 1)) == inner_boundary(b, 1)
    with pytest.raises(GeometryError):
        annulus(interior(b, 1), b)


def test_bonds_and_neighbours():
    bs = bonds_touching((0, 0), 2)
    assert [b.tip for b in bs[:2]] == [(1, 0), (0, 1)]
    assert [b.base for b in bs[2:]] == [(-1, 0), (0, -1)]
    assert nn_neighbors((0, 0)) == [(-1, 0), (0, -1), (0, 1), (1, 0)]
    with pytest.raises(GeometryError):
        Bond((0, 0), 2)


def test_parse_volume_literals():
    assert parse_volume("box: [-1..1]^2") == box(-1, 1, 2)
    assert parse_volume([[0, 0], [1, 0]]) == Volume.of([(0, 0), (1, 0)])
    assert parse_volume("[[2]]") == Volume.of([(2,)])
    with pytest.raises(GeometryError):
        parse_volume("square")


@given(volumes(), st.integers(0, 2))
def test_boundary_is_exactly_the_sites_within_r(v, r):
    lo = [min(s[k] for s in v) - r - 1 for k in range(2)]
    hi = [max(s[k] for s in v) + r + 1 for k in range(2)]
    expected = {
        y for y in itertools.product(range(lo[0], hi[0] + 1), range(lo[1], hi[1] + 1))
        if y not in v and min(linf(y, s) for s in v) <= r
    }
    assert set(r_boundary(v, r)) == expected


@given(volumes(), volumes())
def test_set_algebra(a, b):
    assert set(a | b) == set(a) | set(b)
    assert set(a & b) == set(a) & set(b)
    assert set(a - b) == set(a) - set(b)
    assert list((a | b).sites) == sorted(set(a) | set(b))


@given(volumes())
def test_inner_boundary_partitions(v):
    ib = inner_boundary(v, 1)
    assert ib.issubset(v)
    assert set(interior(v, 1)) | set(ib) == set(v)
    for s in interior(v, 1):
        assert all(y in v for y in nn_neighbors(s))
