"""Finite hypercubic lattice geometry.

Sites are plain integer tuples.  A :class:`Volume` is an explicit, sorted
list of sites, so arbitrary shapes (annuli, clipped half-planes) are as easy
to handle as boxes.  Distances use the max-metric, which makes a
nearest-neighbour potential a range-1 potential with a full ``3^d - 1`` site
boundary around a single site.
"""
from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

Site = tuple[int, ...]


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Volume:
    """Finite set of sites in ``Z^d``, held in lexicographic order."""

    d: int
    sites: tuple[Site, ...] = ()

    def __post_init__(self):
        if self.d < 1:
            raise GeometryError("dimension must be >= 1")
        cleaned = []
        for s in self.sites:
            s = tuple(int(c) for c in s)
            if len(s) != self.d:
                raise GeometryError(f"site {s} does not have dimension {self.d}")
            cleaned.append(s)
        ordered = tuple(sorted(set(cleaned)))
        if len(ordered) != len(cleaned):
            raise GeometryError("duplicate sites in volume")
        object.__setattr__(self, "sites", ordered)

    @classmethod
    def of(cls, sites: Iterable[Sequence[int]], d: int | None = None) -> Volume:
        """Build a volume from any iterable of sites, dropping duplicates."""
        sites = {tuple(int(c) for c in s) for s in sites}
        if d is None:
            if not sites:
                raise GeometryError("cannot infer dimension of an empty volume")
            d = len(next(iter(sites)))
        return cls(d, tuple(sites))

    @cached_property
    def _index(self) -> dict[Site, int]:
        return {s: i for i, s in enumerate(self.sites)}

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self) -> Iterator[Site]:
        return iter(self.sites)

    def __contains__(self, site) -> bool:
        return tuple(site) in self._index

    def index(self, site: Sequence[int]) -> int:
        try:
            return self._index[tuple(site)]
        except KeyError:
            raise GeometryError(f"site {tuple(site)} not in volume") from None

    def __or__(self, other: Volume) -> Volume:
        _check_dim(self, other)
        return Volume.of(self._index.keys() | other._index.keys(), self.d)

    def __and__(self, other: Volume) -> Volume:
        _check_dim(self, other)
        return Volume.of(self._index.keys() & other._index.keys(), self.d)

    def __sub__(self, other: Volume) -> Volume:
        _check_dim(self, other)
        return Volume.of(self._index.keys() - other._index.keys(), self.d)

    def issubset(self, other: Volume) -> bool:
        return all(s in other for s in self.sites)

    def is_box(self) -> bool:
        """True if the volume is a full Cartesian product of intervals."""
        if not self.sites:
            return False
        lo, hi = self.bounds()
        return len(self) == _box_size(lo, hi)

    def bounds(self) -> tuple[Site, Site]:
        lo = tuple(min(s[k] for s in self.sites) for k in range(self.d))
        hi = tuple(max(s[k] for s in self.sites) for k in range(self.d))
        return lo, hi

    def shape(self) -> tuple[int, ...]:
        lo, hi = self.bounds()
        return tuple(b - a + 1 for a, b in zip(lo, hi))

    def to_json(self) -> str:
        return json.dumps([list(s) for s in self.sites], separators=(",", ":"))


def _check_dim(a: Volume, b: Volume) -> None:
    if a.d != b.d:
        raise GeometryError(f"dimension mismatch: {a.d} vs {b.d}")


def _box_size(lo, hi) -> int:
    n = 1
    for a, b in zip(lo, hi):
        n *= b - a + 1
    return n


def box(lo: int | Sequence[int], hi: int | Sequence[int], d: int | None = None) -> Volume:
    """The box ``[lo..hi]^d`` (or the product of per-axis intervals)."""
    if isinstance(lo, int):
        if d is None:
            raise GeometryError("dimension required for scalar box bounds")
        lo = (lo,) * d
    if isinstance(hi, int):
        hi = (hi,) * len(lo)
    if len(lo) != len(hi):
        raise GeometryError("box bounds of different length")
    if any(b < a for a, b in zip(lo, hi)):
        raise GeometryError(f"empty box [{lo}..{hi}]")
    ranges = [range(a, b + 1) for a, b in zip(lo, hi)]
    return Volume(len(lo), tuple(itertools.product(*ranges)))


def centered_box(side: int, d: int, center: Sequence[int] | None = None) -> Volume:
    """Box of the given side length containing ``center`` (default origin).

    Odd sides are symmetric; even sides extend one further in the positive
    direction, so boxes of increasing side are nested.
    """
    if side < 1:
        raise GeometryError("side must be >= 1")
    center = tuple(center) if center is not None else (0,) * d
    lo = tuple(c - (side - 1) // 2 for c in center)
    hi = tuple(a + side - 1 for a in lo)
    return box(lo, hi)


def linf(a: Site, b: Site) -> int:
    return max(abs(x - y) for x, y in zip(a, b))


def _offsets(d: int, r: int) -> list[Site]:
    return [o for o in itertools.product(range(-r, r + 1), repeat=d) if any(o)]


def _require_nonempty(B: Volume) -> None:
    if len(B) == 0:
        raise GeometryError("empty volume")


def r_boundary(B: Volume, r: int) -> Volume:
    """Outer boundary ``{x not in B : d(x, B) <= r}``."""
    _require_nonempty(B)
    if r < 0:
        raise GeometryError("range must be nonnegative")
    out = set()
    for s in B.sites:
        for o in _offsets(B.d, r):
            y = tuple(a + b for a, b in zip(s, o))
            if y not in B:
                out.add(y)
    return Volume.of(out, B.d)


def closure(B: Volume, r: int) -> Volume:
    return B | r_boundary(B, r)


def inner_boundary(B: Volume, r: int) -> Volume:
    """Sites of ``B`` within distance ``r`` of the complement."""
    _require_nonempty(B)
    keep = []
    for s in B.sites:
        for o in _offsets(B.d, r):
            if tuple(a + b for a, b in zip(s, o)) not in B:
                keep.append(s)
                break
    return Volume(B.d, tuple(keep))


def interior(B: Volume, r: int) -> Volume:
    return B - inner_boundary(B, r)


def annulus(outer: Volume, inner: Volume) -> Volume:
    if not inner.issubset(outer):
        raise GeometryError("inner volume is not contained in outer volume")
    return outer - inner


@dataclass(frozen=True)
class Bond:
    """Nearest-neighbour pair ``<base, base + e_axis>``; ``axis`` is 0-based."""

    base: Site
    axis: int

    def __post_init__(self):
        if not 0 <= self.axis < len(self.base):
            raise GeometryError(f"axis {self.axis} out of range for d={len(self.base)}")

    @property
    def tip(self) -> Site:
        return shift(self.base, self.axis, 1)


def shift(x: Site, axis: int, step: int) -> Site:
    y = list(x)
    y[axis] += step
    return tuple(y)


def bonds_touching(x: Sequence[int], d: int) -> list[Bond]:
    """The ``2d`` bonds incident to ``x``: forward ones first, then backward."""
    x = tuple(x)
    if len(x) != d:
        raise GeometryError(f"site {x} does not have dimension {d}")
    forward = [Bond(x, e) for e in range(d)]
    backward = [Bond(shift(x, e, -1), e) for e in range(d)]
    return forward + backward


def nn_neighbors(x: Site) -> list[Site]:
    out = []
    for e in range(len(x)):
        out.append(shift(x, e, -1))
        out.append(shift(x, e, 1))
    return sorted(out)


_BOX_RE = re.compile(r"^\s*box\s*:\s*\[\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*\]\s*\^\s*(\d+)\s*$")


def parse_volume(value) -> Volume:
    """Parse ``"box: [lo..hi]^d"`` or a list of coordinate vectors (or its JSON text)."""
    if isinstance(value, str):
        m = _BOX_RE.match(value)
        if m:
            lo, hi, d = (int(g) for g in m.groups())
            return box(lo, hi, d)
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            raise GeometryError(f"unrecognised volume literal {value!r}") from None
    if not isinstance(value, list) or not value:
        raise GeometryError("volume literal must be a box spec or a nonempty list of sites")
    return Volume.of(value)


__all__ = [
    "Bond",
    "GeometryError",
    "Site",
    "Volume",
    "annulus",
    "bonds_touching",
    "box",
    "centered_box",
    "closure",
    "inner_boundary",
    "interior",
    "linf",
    "nn_neighbors",
    "parse_volume",
    "r_boundary",
    "shift",
]
