"""Sampled dynamical systems: the zoo, products, factors and the shift generator.

A :class:`DiscreteSystem` is a finite sample of a compact system together
with a map table.  True images are snapped to the nearest sample point in
the max metric; ties go to the lexicographically smaller point, so every
system is reproducible bit for bit.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import BadParams, Incompatible, SizeCap
from .geometry import (ONE, ZERO, Point, common_denominator, encode_points, fmt,
                       max_distance, point_order_key, rational)

DEFAULT_SIZE_CAP = 20_000
SFT_DEPTH = 3
ONEPOINT_CONTRACTION = 7


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """``(X, f)`` at finite resolution.

    ``images[i]`` is the sample index of ``f(sample[i])``.  ``mesh`` bounds
    the gap between neighbouring sample points (0 for purely discrete
    systems) and doubles as the closure radius in trapping searches.
    """

    sample: tuple
    images: tuple
    mesh: Fraction = ZERO
    coords: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.sample)
        if n == 0:
            raise BadParams("empty sample")
        if len(self.images) != n:
            raise BadParams("map table length differs from sample size")
        if any(not 0 <= j < n for j in self.images):
            raise BadParams("map table points outside the sample")
        if len(set(self.sample)) != n:
            raise BadParams("sample points are not distinct")
        if not self.coords:
            object.__setattr__(self, "coords",
                               tuple(sorted({c for p in self.sample for c in p.support})))

    def __len__(self):
        return len(self.sample)

    @cached_property
    def image_array(self) -> np.ndarray:
        return np.asarray(self.images, dtype=np.int64)

    @cached_property
    def index(self) -> dict:
        return {p: i for i, p in enumerate(self.sample)}

    @cached_property
    def denominator(self) -> int:
        return common_denominator(v for p in self.sample for v in p.dense(self.coords))

    def encoded(self, extra: Sequence[Fraction] = ()) -> tuple:
        """Integer coordinates over a common denominator (covering ``extra`` too)."""
        denom = math.lcm(self.denominator, common_denominator(extra))
        return encode_points(self.sample, self.coords, denom), denom

    def f(self, i: int) -> int:
        return self.images[i]

    def describe(self) -> dict:
        return dict(self.meta)


@dataclass(frozen=True)
class FactorDescriptor:
    coords: tuple

    def __post_init__(self):
        if not self.coords:
            raise BadParams("a factor needs at least one coordinate")
        object.__setattr__(self, "coords", tuple(sorted(set(int(c) for c in self.coords))))


# ---------------------------------------------------------------------------
# snapping helpers


def _net_size(resolution) -> int:
    r = rational(resolution)
    if r <= 0 or r.numerator != 1:
        raise BadParams(f"resolution must be 1/n, got {r}")
    return r.denominator


def _snap_interval(y: Fraction, n: int) -> int:
    """Index of the net point j/n nearest to y in [0,1]; ties go down."""
    t = y * n
    lo = math.floor(t)
    if lo >= n:
        return n
    return lo if t - lo <= Fraction(1, 2) else lo + 1


def _snap_circle(y: Fraction, n: int) -> int:
    """Nearest point j/n of the circle net {0, .., (n-1)/n}; ties go down."""
    t = (y % 1) * n
    lo = math.floor(t)
    up = t - lo
    return min((up, lo % n), (1 - up, (lo + 1) % n))[1]


def interval_map_system(fn: Callable[[Fraction], Fraction], resolution, *,
                        circle: bool = False, meta: dict | None = None) -> DiscreteSystem:
    """Sample an exact rational map of [0,1] (or of the circle [0,1)) on the 1/n net."""
    n = _net_size(resolution)
    count = n if circle else n + 1
    sample = tuple(Point.of({0: Fraction(j, n)}) for j in range(count))
    snap = _snap_circle if circle else _snap_interval
    images = []
    for j in range(count):
        y = fn(Fraction(j, n))
        if not circle and not ZERO <= y <= ONE:
            raise BadParams(f"map leaves [0,1]: f({Fraction(j, n)}) = {y}")
        images.append(snap(y, n))
    return DiscreteSystem(sample, tuple(images), Fraction(1, n), (0,), dict(meta or {}))


def tent(x: Fraction) -> Fraction:
    return 1 - abs(2 * x - 1)


def _sft_system(params: dict) -> DiscreteSystem:
    try:
        matrix = [[int(v) for v in row] for row in params["matrix"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise BadParams("sft needs params.matrix, a square 0/1 matrix") from exc
    k = len(matrix)
    if k == 0 or any(len(row) != k for row in matrix):
        raise BadParams("sft adjacency matrix must be square and nonempty")
    if any(v not in (0, 1) for row in matrix for v in row):
        raise BadParams("sft adjacency matrix must be 0/1")
    for s, row in enumerate(matrix):
        if not any(row):
            raise BadParams(f"sft state {s} is dead (no outgoing transition)")
    depth = int(params.get("depth", SFT_DEPTH))
    if depth < 1:
        raise BadParams("sft depth must be >= 1")

    def admissible(word):
        return all(matrix[a][b] for a, b in zip(word, word[1:]))

    words = [w for w in itertools.product(range(k), repeat=depth) if admissible(w)]
    embed = [Fraction(s + 1, k + 1) for s in range(k)]
    sample = tuple(Point.of({i: embed[s] for i, s in enumerate(w)}) for w in words)
    where = {w: i for i, w in enumerate(words)}
    images = []
    for w in words:
        follower = min(b for b in range(k) if matrix[w[-1]][b])
        images.append(where[w[1:] + (follower,)])
    meta = {"kind": "sft", "matrix": matrix, "depth": depth,
            "embedding": "state s -> (s+1)/(k+1) on coordinate i of the word"}
    return DiscreteSystem(sample, tuple(images), ZERO, tuple(range(depth)), meta)


def _table_system(params: dict) -> DiscreteSystem:
    try:
        points = [Point.from_json(p) for p in params["points"]]
        images = tuple(int(j) for j in params["images"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BadParams("table needs params.points and params.images") from exc
    mesh = rational(params.get("mesh", "0"))
    if mesh < 0:
        raise BadParams("mesh must be non-negative")
    return DiscreteSystem(tuple(points), images, mesh, (), {"kind": "table"})


def make_zoo_system(kind: str, params: dict | None = None, resolution="1/16") -> DiscreteSystem:
    """Build a test-bed system.

    ``kind`` is one of tent, rotation, doubling, identity, sft, table.
    Rotation and doubling act on the circle net ``{0, 1/n, .., (n-1)/n}``;
    tent and identity on the closed net ``{0, 1/n, .., 1}``.
    """
    params = dict(params or {})
    res = rational(resolution)
    if kind == "tent":
        return interval_map_system(tent, res, meta={"kind": "tent", "resolution": fmt(res)})
    if kind == "identity":
        return interval_map_system(lambda x: x, res,
                                   meta={"kind": "identity", "resolution": fmt(res)})
    if kind == "rotation":
        angle = rational(params.get("angle", "0"))
        if not ZERO <= angle < ONE:
            raise BadParams(f"rotation angle {angle} outside [0,1)")
        return interval_map_system(lambda x: x + angle, res, circle=True,
                                   meta={"kind": "rotation", "angle": fmt(angle),
                                         "resolution": fmt(res)})
    if kind == "doubling":
        return interval_map_system(lambda x: 2 * x, res, circle=True,
                                   meta={"kind": "doubling", "resolution": fmt(res)})
    if kind == "sft":
        return _sft_system(params)
    if kind == "table":
        return _table_system(params)
    raise BadParams(f"unknown system kind {kind!r}")


# ---------------------------------------------------------------------------
# combinators


def product(a: DiscreteSystem, b: DiscreteSystem, size_cap: int = DEFAULT_SIZE_CAP) -> DiscreteSystem:
    """Componentwise product; ``b``'s coordinates are shifted past ``a``'s."""
    size = len(a) * len(b)
    if size > size_cap:
        raise SizeCap(f"product sample {size} exceeds cap {size_cap}", size=size, cap=size_cap)
    shift = (max(a.coords) + 1) if a.coords else 0
    bshift = [p.shift(shift) for p in b.sample]
    sample = tuple(p.merge(q) for p in a.sample for q in bshift)
    nb = len(b)
    images = tuple(a.images[i] * nb + b.images[j] for i in range(len(a)) for j in range(nb))
    coords = tuple(a.coords) + tuple(c + shift for c in b.coords)
    meta = {"kind": "product", "factors": [a.meta, b.meta], "shift": shift}
    return DiscreteSystem(sample, images, max(a.mesh, b.mesh), coords, meta)


def projection_factor(sys: DiscreteSystem, desc: FactorDescriptor) -> DiscreteSystem:
    """Induced system on the projection to ``desc.coords``.

    Raises :class:`Incompatible` with a witness pair when two points with the
    same projection have images with different projections.
    """
    keys = [p.project(desc.coords) for p in sys.sample]
    first: dict = {}
    for i, k in enumerate(keys):
        first.setdefault(k, i)
    for i, k in enumerate(keys):
        j = first[k]
        if keys[sys.images[i]] != keys[sys.images[j]]:
            raise Incompatible(
                f"points {j} and {i} agree on {list(desc.coords)} but their images do not",
                witness=[j, i])
    order = list(first)
    where = {k: n for n, k in enumerate(order)}
    images = tuple(where[keys[sys.images[first[k]]]] for k in order)
    meta = {"kind": "projection", "coords": list(desc.coords), "source": sys.meta}
    coords = tuple(c for c in sys.coords if c in desc.coords) or desc.coords
    return DiscreteSystem(tuple(order), images, sys.mesh, coords, meta)


def projection_map(sys: DiscreteSystem, factor: DiscreteSystem, desc: FactorDescriptor) -> list:
    """Sample index in ``factor`` of each projected point of ``sys``."""
    return [factor.index[p.project(desc.coords)] for p in sys.sample]


def circle_point(n: int) -> tuple:
    """Embedding of Z on a circle in [0,1]^2; both ends tend to (1, 1/2).

    This is ((1 + cos a)/2, (1 + sin a)/2) with a = pi + 2*atan(n), written
    with the rational half-angle identities so no rounding is needed.
    """
    n2 = Fraction(n * n)
    return n2 / (n2 + 1), Fraction((n - 1) ** 2) / (2 * (n2 + 1))


ONEPOINT_STAR = (ONE, Fraction(1, 2))


def onepoint_shift(y_sample: Sequence[Point], n_max: int, *,
                   contraction: int = ONEPOINT_CONTRACTION,
                   size_cap: int = DEFAULT_SIZE_CAP) -> DiscreteSystem:
    """Truncated shift on the one-point compactification of Z x Y.

    Point ``(n, y)`` sits at ``(circle_point(n), 2^-(contraction+|n|) * y)``
    with Y on coordinates 2, 3, ...; the star point is ``(1, 1/2, 0, ..)``.
    The map shifts ``n -> n+1``, sends ``(n_max, y)`` to the star and the star
    to ``(-n_max, y_0)``.  Every column ``{n} x Y`` has diameter below
    ``2^-contraction``, so grid covers coarser than that link the star to
    every row of the far tail.
    """
    ys = list(y_sample)
    if not ys:
        raise BadParams("y_sample must be nonempty")
    if n_max < 0:
        raise BadParams("n_max must be >= 0")
    size = (2 * n_max + 1) * len(ys) + 1
    if size > size_cap:
        raise SizeCap(f"onepoint_shift sample {size} exceeds cap {size_cap}", size=size, cap=size_cap)
    ycoords = sorted({c for y in ys for c in y.support})
    sample = []
    for n in range(-n_max, n_max + 1):
        a, b = circle_point(n)
        scale = Fraction(1, 2 ** (contraction + abs(n)))
        for y in ys:
            d = {0: a, 1: b}
            d.update({c + 2: scale * y[c] for c in ycoords})
            sample.append(Point.of(d))
    sample.append(Point.of({0: ONEPOINT_STAR[0], 1: ONEPOINT_STAR[1]}))
    m = len(ys)
    star_idx = len(sample) - 1
    images = []
    for n in range(-n_max, n_max + 1):
        for k in range(m):
            if n < n_max:
                images.append((n + n_max + 1) * m + k)
            else:
                images.append(star_idx)
    images.append(0)
    meta = {"kind": "onepoint_shift", "n_max": n_max, "y_size": m,
            "contraction": contraction,
            "surrogate": "star maps to (-n_max, y_0) instead of itself"}
    coords = (0, 1) + tuple(c + 2 for c in ycoords)
    return DiscreteSystem(tuple(sample), tuple(images), ZERO, coords, meta)


# ---------------------------------------------------------------------------
# orbits


def orbit_split(sys: DiscreteSystem, start: int, burn_in: int = 0) -> tuple:
    """``(transient, cycle)`` of the exact orbit; the transient is capped at ``burn_in``."""
    if burn_in < 0:
        raise BadParams("burn_in must be >= 0")
    seen: dict = {}
    orbit = []
    x = start
    while x not in seen:
        seen[x] = len(orbit)
        orbit.append(x)
        x = sys.images[x]
    mu = seen[x]
    return tuple(orbit[:mu][:burn_in]), tuple(orbit[mu:])


def omega_limit_approx(sys: DiscreteSystem, start: int, burn_in: int = 0) -> frozenset:
    """Sample indices on the eventual cycle of ``start``'s orbit."""
    return frozenset(orbit_split(sys, start, burn_in)[1])


# ---------------------------------------------------------------------------
# spec files


def system_from_spec(spec: dict, size_cap: int = DEFAULT_SIZE_CAP) -> DiscreteSystem:
    """Build a system from its JSON description (see README for the schema)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise BadParams("system spec must be an object with a 'kind'")
    kind = spec["kind"]
    params = spec.get("params", {}) or {}
    resolution = spec.get("resolution", "1/16")
    if kind == "product":
        factors = params.get("factors")
        if not isinstance(factors, list) or len(factors) < 2:
            raise BadParams("product needs params.factors with at least two specs")
        out = system_from_spec(factors[0], size_cap)
        for sub in factors[1:]:
            out = product(out, system_from_spec(sub, size_cap), size_cap)
        return out
    if kind == "onepoint_shift":
        try:
            ys = [Point.from_json(y) for y in params["y_points"]]
            n_max = int(params["n_max"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BadParams("onepoint_shift needs params.y_points and params.n_max") from exc
        contraction = int(params.get("contraction", ONEPOINT_CONTRACTION))
        return onepoint_shift(ys, n_max, contraction=contraction, size_cap=size_cap)
    sys = make_zoo_system(kind, params, resolution)
    if len(sys) > size_cap:
        raise SizeCap(f"sample {len(sys)} exceeds cap {size_cap}", size=len(sys), cap=size_cap)
    return sys


def load_system(path, size_cap: int = DEFAULT_SIZE_CAP) -> DiscreteSystem:
    try:
        spec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BadParams(f"cannot read system spec {path}: {exc}") from exc
    return system_from_spec(spec, size_cap)


def table_spec(sys: DiscreteSystem) -> dict:
    """Explicit table description of any system (round-trips through ``system_from_spec``)."""
    return {"kind": "table",
            "params": {"points": [p.to_json() for p in sys.sample],
                       "images": list(sys.images), "mesh": fmt(sys.mesh)}}


def nearest_index(sys: DiscreteSystem, y: Point) -> int:
    """Nearest sample point to ``y`` in the max metric, lexicographic tie-break."""
    return min(range(len(sys)),
               key=lambda i: (max_distance(sys.sample[i], y),
                              point_order_key(sys.sample[i], sys.coords)))
