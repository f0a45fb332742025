"""Exact-rational points, basic open boxes and finite covers of [0,1]^d.

Points are sparse: a coordinate that is not stored reads as 0.  A box
constrains finitely many coordinates to open intervals; because only the
trace of a box on the unit cube matters, endpoints below 0 are stored as
``LOW`` (-1) and endpoints above 1 as ``HIGH`` (2).  With that
normalisation, containment and overlap of the traces are decided by plain
interval comparisons.

Nothing in this module uses a tolerance.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import BadParams, BudgetExhausted, EmptyResult

LOW = Fraction(-1)
HIGH = Fraction(2)
ZERO = Fraction(0)
ONE = Fraction(1)

_INT64_SAFE = 2**60


def rational(value) -> Fraction:
    """Parse ``value`` (int, Fraction, or a "num/den" string) as a Fraction.

    Floats are rejected: every value in this package is exact.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise BadParams(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise BadParams(f"not a rational: {value!r}") from exc
    raise BadParams(f"not a rational: {value!r}")


def fmt(r: Fraction) -> str:
    """Canonical "num/den" string."""
    return f"{r.numerator}/{r.denominator}"


# ---------------------------------------------------------------------------
# points


@dataclass(frozen=True, order=True)
class Point:
    """A point of [0,1]^d with finite support; ``items`` is sorted and zero-free."""

    items: tuple = ()

    def __post_init__(self):
        for _, v in self.items:
            if not ZERO <= v <= ONE:
                raise BadParams(f"coordinate value {v} outside [0,1]")

    @classmethod
    def of(cls, coords: Mapping[int, object] | Sequence[object] = ()) -> "Point":
        if isinstance(coords, Mapping):
            pairs = ((int(k), rational(v)) for k, v in coords.items())
        else:
            pairs = ((i, rational(v)) for i, v in enumerate(coords))
        return cls(tuple(sorted((k, v) for k, v in pairs if v != 0)))

    def __getitem__(self, coord: int) -> Fraction:
        for k, v in self.items:
            if k == coord:
                return v
        return ZERO

    @property
    def support(self) -> tuple:
        return tuple(k for k, _ in self.items)

    def dense(self, coords: Iterable[int]) -> tuple:
        d = dict(self.items)
        return tuple(d.get(c, ZERO) for c in coords)

    def project(self, coords: Iterable[int]) -> "Point":
        keep = set(coords)
        return Point(tuple((k, v) for k, v in self.items if k in keep))

    def replace(self, updates: Mapping[int, Fraction]) -> "Point":
        d = dict(self.items)
        d.update(updates)
        return Point.of(d)

    def shift(self, offset: int) -> "Point":
        return Point(tuple((k + offset, v) for k, v in self.items))

    def merge(self, other: "Point") -> "Point":
        d = dict(self.items)
        for k, v in other.items:
            if k in d:
                raise BadParams(f"coordinate {k} present in both points")
            d[k] = v
        return Point.of(d)

    def to_json(self) -> dict:
        return {str(k): fmt(v) for k, v in self.items}

    @classmethod
    def from_json(cls, obj) -> "Point":
        if isinstance(obj, list):
            return cls.of(obj)
        return cls.of({int(k): v for k, v in obj.items()})

    def __repr__(self):
        inner = ", ".join(f"{k}: {fmt(v)}" for k, v in self.items)
        return f"Point({{{inner}}})"


def point_order_key(p: Point, coords: Sequence[int]) -> tuple:
    """Lexicographic key over ``coords`` (absent values read as 0)."""
    return p.dense(coords)


def max_distance(p: Point, q: Point) -> Fraction:
    """Max-metric distance, exact."""
    coords = set(p.support) | set(q.support)
    return max((abs(p[c] - q[c]) for c in coords), default=ZERO)


# ---------------------------------------------------------------------------
# boxes


def _clamp(lo: Fraction, hi: Fraction) -> tuple:
    if lo >= hi:
        raise BadParams(f"empty interval ({lo}, {hi})")
    if hi <= 0 or lo >= 1:
        raise BadParams(f"interval ({lo}, {hi}) misses [0,1]")
    return (LOW if lo < 0 else lo, HIGH if hi > 1 else hi)


@dataclass(frozen=True, order=True)
class Box:
    """Basic open set: intersection of finitely many open coordinate slabs.

    ``constraints`` is a sorted tuple of ``(coord, lo, hi)``.  Coordinates
    whose interval covers all of [0,1] are dropped, so an empty constraint
    tuple is the whole cube.
    """

    constraints: tuple = ()

    @classmethod
    def of(cls, intervals: Mapping[int, tuple]) -> "Box":
        out = []
        for coord, (lo, hi) in intervals.items():
            lo, hi = _clamp(rational(lo), rational(hi))
            if lo == LOW and hi == HIGH:
                continue
            out.append((int(coord), lo, hi))
        return cls(tuple(sorted(out)))

    @property
    def support(self) -> tuple:
        return tuple(c for c, _, _ in self.constraints)

    def interval(self, coord: int) -> tuple:
        for c, lo, hi in self.constraints:
            if c == coord:
                return lo, hi
        return LOW, HIGH

    def contains(self, p: Point) -> bool:
        return all(lo < p[c] < hi for c, lo, hi in self.constraints)

    def subset_of(self, other: "Box") -> bool:
        for c, lo, hi in other.constraints:
            mlo, mhi = self.interval(c)
            if mlo < lo or mhi > hi:
                return False
        return True

    def intersect(self, other: "Box") -> "Box | None":
        coords = sorted(set(self.support) | set(other.support))
        out = []
        for c in coords:
            alo, ahi = self.interval(c)
            blo, bhi = other.interval(c)
            lo, hi = max(alo, blo), min(ahi, bhi)
            if lo >= hi:
                return None
            if lo == LOW and hi == HIGH:
                continue
            out.append((c, lo, hi))
        return Box(tuple(out))

    def meets(self, other: "Box") -> bool:
        return self.intersect(other) is not None

    def to_json(self) -> dict:
        return {str(c): [fmt(lo), fmt(hi)] for c, lo, hi in self.constraints}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Box":
        return cls.of({int(k): (v[0], v[1]) for k, v in obj.items()})

    def __repr__(self):
        inner = ", ".join(f"{c}: ({fmt(lo)}, {fmt(hi)})" for c, lo, hi in self.constraints)
        return f"Box({{{inner}}})"


def box_member(p: Point, b: Box) -> bool:
    return b.contains(p)


# ---------------------------------------------------------------------------
# covers


@dataclass(frozen=True)
class Cover:
    boxes: tuple

    def __post_init__(self):
        if not self.boxes:
            raise BadParams("a cover needs at least one box")

    @classmethod
    def of(cls, boxes: Iterable[Box]) -> "Cover":
        """Build a cover, dropping duplicate boxes (first occurrence wins)."""
        seen, out = set(), []
        for b in boxes:
            if b not in seen:
                seen.add(b)
                out.append(b)
        return cls(tuple(out))

    @property
    def support(self) -> tuple:
        return tuple(sorted({c for b in self.boxes for c in b.support}))

    def __len__(self):
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)

    def canonical(self) -> "Cover":
        return Cover(tuple(sorted(set(self.boxes))))

    def to_json(self) -> dict:
        return {"boxes": [b.to_json() for b in self.boxes]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Cover":
        return cls.of(Box.from_json(b) for b in obj["boxes"])


# ---------------------------------------------------------------------------
# integer encoding for the kernels


def common_denominator(values: Iterable[Fraction]) -> int:
    dens = {v.denominator for v in values}
    return math.lcm(*dens) if dens else 1


def _int_array(rows, width):
    flat = [v for row in rows for v in row]
    big = any(abs(v) >= _INT64_SAFE for v in flat)
    arr = np.array(flat, dtype=object if big else np.int64)
    return arr.reshape(len(rows), width)


def encode_points(points: Sequence[Point], coords: Sequence[int], denom: int):
    rows = [[int(v * denom) for v in p.dense(coords)] for p in points]
    return _int_array(rows, len(coords))


def encode_cover(cover: Cover, coords: Sequence[int], denom: int):
    lo_rows, hi_rows = [], []
    for b in cover.boxes:
        ivals = [b.interval(c) for c in coords]
        lo_rows.append([int(lo * denom) for lo, _ in ivals])
        hi_rows.append([int(hi * denom) for _, hi in ivals])
    return _int_array(lo_rows, len(coords)), _int_array(hi_rows, len(coords))


def membership_matrix(points: Sequence[Point], cover: Cover) -> np.ndarray:
    """Boolean matrix ``M[i, j]`` = point ``i`` lies in box ``j`` (exact)."""
    coords = cover.support
    values = [v for p in points for v in p.dense(coords)]
    values += [x for b in cover.boxes for c in coords for x in b.interval(c)]
    denom = common_denominator(values)
    pts = encode_points(points, coords, denom)
    lo, hi = encode_cover(cover, coords, denom)
    if pts.dtype == object or lo.dtype == object:
        pts, lo, hi = pts.astype(object), lo.astype(object), hi.astype(object)
    return _kernels.membership(pts, lo, hi)


# ---------------------------------------------------------------------------
# cover calculus


def is_nice(cover: Cover, sample: Sequence[Point]) -> bool:
    if not sample:
        raise BadParams("niceness needs a nonempty sample")
    m = membership_matrix(sample, cover)
    return bool(m.any(axis=0).all() and m.any(axis=1).all())


def star(cover: Cover, targets: Sequence[Point]) -> list:
    """Boxes of ``cover`` meeting at least one target point."""
    if not targets:
        return []
    hit = membership_matrix(targets, cover).any(axis=0)
    return [b for b, h in zip(cover.boxes, hit) if h]


def refines(u: Cover, v: Cover) -> bool:
    return all(any(a.subset_of(b) for b in v.boxes) for a in u.boxes)


def is_full_refinement(u: Cover, v: Cover) -> bool:
    """``u`` refines ``v`` and every box of ``v`` contains some box of ``u``."""
    return refines(u, v) and all(any(a.subset_of(b) for a in u.boxes) for b in v.boxes)


def box_star(cover: Cover, box: Box) -> list:
    """Boxes of ``cover`` whose trace on the cube meets ``box``."""
    return [w for w in cover.boxes if w.meets(box)]


def star_refines(u: Cover, v: Cover) -> bool:
    """Every star ``u_*(U)`` fits inside one box of ``v``.

    A union sits inside a box exactly when each member does, so the check
    reduces to pairwise interval containment.
    """
    for a in u.boxes:
        members = box_star(u, a)
        if not any(all(w.subset_of(b) for w in members) for b in v.boxes):
            return False
    return True


def common_refinement(u: Cover, v: Cover, sample: Sequence[Point]) -> Cover:
    candidates = []
    for a in u.boxes:
        for b in v.boxes:
            w = a.intersect(b)
            if w is not None:
                candidates.append(w)
    candidates = list(dict.fromkeys(candidates))
    if candidates:
        hit = membership_matrix(sample, Cover(tuple(candidates))).any(axis=0)
        candidates = [w for w, h in zip(candidates, hit) if h]
    if not candidates:
        raise EmptyResult("no pairwise intersection meets the sample")
    return Cover(tuple(candidates))


def _grid_centres(t: Fraction, mesh: Fraction, offset: Fraction) -> list:
    """Grid centres ``offset + j*mesh`` within distance < mesh of ``t``."""
    j0 = math.floor((t - offset) / mesh)
    out = []
    for j in (j0 - 1, j0, j0 + 1, j0 + 2):
        c = offset + j * mesh
        if abs(t - c) < mesh:
            out.append(c)
    return out


def grid_cover(sample: Sequence[Point], mesh, coords: Sequence[int] | None = None,
               offset=0) -> Cover:
    """Overlapping grid cover restricted to boxes that meet ``sample``.

    Boxes are products of intervals ``(c - mesh, c + mesh)`` with centres
    ``c`` on the lattice ``offset + mesh*Z``.  Any two sample points within
    max-distance < mesh share a box.  The mesh-h/2 grid is a full refinement
    of the mesh-h grid when centres are sample points.
    """
    mesh, offset = rational(mesh), rational(offset)
    if mesh <= 0:
        raise BadParams("mesh must be positive")
    if coords is None:
        coords = sorted({c for p in sample for c in p.support})
    coords = list(coords)
    boxes = set()
    for p in sample:
        per_coord = [_grid_centres(p[c], mesh, offset) for c in coords]
        for centres in itertools.product(*per_coord):
            boxes.add(Box.of({c: (x - mesh, x + mesh) for c, x in zip(coords, centres)}))
    if not boxes:
        raise EmptyResult("grid cover of an empty sample")
    return Cover(tuple(sorted(boxes)))


def isolating_cover(sample: Sequence[Point]) -> Cover:
    """One box per sample point, each containing no other sample point."""
    coords = sorted({c for p in sample for c in p.support})
    if len(sample) == 1:
        return Cover((Box(),))
    gap = min(max_distance(p, q) for p, q in itertools.combinations(sample, 2))
    if gap == 0:
        raise BadParams("sample points are not distinct")
    r = gap / 2
    return Cover(tuple(Box.of({c: (p[c] - r, p[c] + r) for c in coords}) for p in sample))


def star_refinement(u: Cover, sample: Sequence[Point], budget: int = 12) -> Cover:
    """Dyadic grid cover on ``u``'s support that star-refines ``u``.

    Depths 0..budget are tried in order (mesh 2^-depth); the first grid that
    passes ``star_refines`` is returned.
    """
    if budget < 0:
        raise BadParams("budget must be non-negative")
    coords = u.support
    for depth in range(budget + 1):
        v = grid_cover(sample, Fraction(1, 2**depth), coords)
        if star_refines(v, u):
            return v
    raise BudgetExhausted(f"no star refinement up to depth {budget}", budget=budget)
