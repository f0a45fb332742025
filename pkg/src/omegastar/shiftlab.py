"""Finite experiments with maps on the naturals.

Two constructions live here:

* the harmonic walk ``p(k)`` = distance from ``H_k = 1 + 1/2 + .. + 1/k`` to
  the nearest even integer, together with the piecewise-linear map through
  (0,0), (2/3,1), (1,1/2) that it cannot be lifted through;
* a greedy search, for a finite-to-one ``q``, for a set ``B`` with
  ``q(B+1)`` disjoint from ``q(B)-1``.
"""
from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Sequence

from .errors import BadParams, LengthMismatch, NotFiniteToOne, OutOfDomain, OutOfRange, PrefixExhausted

log = logging.getLogger(__name__)

EXACT_LIMIT = 10_000
PRECISION_BITS = 192
FIBER_CAP = 16

TWO_THIRDS = Fraction(2, 3)


def _dist_to_even(s: Fraction) -> Fraction:
    t = s % 2
    return min(t, 2 - t)


@dataclass(frozen=True)
class HarmonicWalk:
    """``values[k-1]`` approximates ``p(k)`` within ``error_bound``.

    Values with ``k <= exact_upto`` are exact (error 0).
    """

    values: tuple
    exact_upto: int
    error_bound: Fraction

    def __len__(self):
        return len(self.values)

    def p(self, k: int) -> Fraction:
        return self.values[k - 1]

    def error(self, k: int) -> Fraction:
        return Fraction(0) if k <= self.exact_upto else self.error_bound


@lru_cache(maxsize=4)
def harmonic_walk(n: int, exact_limit: int = EXACT_LIMIT,
                  precision_bits: int = PRECISION_BITS) -> HarmonicWalk:
    """Distances from the harmonic partial sums to the nearest even integer.

    Sums up to ``exact_limit`` are exact rationals.  Beyond it each ``1/k``
    is truncated to ``precision_bits`` binary digits; the accumulated
    truncation error is below ``(n - exact_limit) * 2^-precision_bits``, and
    distance-to-a-set is 1-Lipschitz, so the same bound holds for ``p``.
    """
    if n < 1:
        raise BadParams("n must be >= 1")
    values = []
    s = Fraction(0)
    upto = min(n, exact_limit)
    for k in range(1, upto + 1):
        s += Fraction(1, k)
        values.append(_dist_to_even(s))
    if n <= exact_limit:
        return HarmonicWalk(tuple(values), n, Fraction(0))
    scale = 1 << precision_bits
    acc = (s.numerator * scale) // s.denominator
    for k in range(upto + 1, n + 1):
        acc += scale // k
        values.append(_dist_to_even(Fraction(acc, scale)))
    bound = Fraction(n - upto + 1, scale)
    return HarmonicWalk(tuple(values), upto, bound)


def tent_like_pi(t) -> Fraction:
    """Piecewise-linear map through (0,0), (2/3,1), (1,1/2)."""
    t = Fraction(t)
    if not 0 <= t <= 1:
        raise OutOfDomain(f"{t} outside [0,1]")
    if t <= TWO_THIRDS:
        return 3 * t / 2
    return 2 - 3 * t / 2


def first_branch_preimage(v: Fraction) -> Fraction:
    return 2 * v / 3


def second_branch_preimage(v: Fraction) -> Fraction:
    """Preimage in [2/3, 1]; defined for v in [1/2, 1]."""
    if not Fraction(1, 2) <= v <= 1:
        raise OutOfDomain(f"{v} has no preimage on the second branch")
    return (4 - 2 * v) / 3


REQUIREMENTS = ("slowness", "matching", "escape")


def lifting_obstruction_check(p_y: Sequence[Fraction], m: int, delta, eps,
                              walk: HarmonicWalk | None = None) -> dict:
    """Test a candidate lift ``p_y`` (``p_y[k-1]`` is its value at ``k``) from ``k = m`` on.

    * slowness: ``sup |p_y(k+1) - p_y(k)| <= delta``
    * matching: ``sup |p(k) - pi(p_y(k))| <= delta`` against the harmonic walk
    * escape: some ``p_y(k) > 2/3 + eps`` (needed for surjectivity)

    Matching carries the walk's error bound; a verdict is only issued when
    the bound cannot change it, otherwise the requirement reads "undecided".
    """
    delta, eps = Fraction(delta), Fraction(eps)
    n = len(p_y)
    if m < 1 or n < m:
        raise LengthMismatch(f"need at least m={m} values, got {n}")
    walk = walk or harmonic_walk(n)
    if len(walk) < n:
        raise LengthMismatch("harmonic walk shorter than the candidate")
    tail = range(m, n + 1)
    slow = max((abs(p_y[k] - p_y[k - 1]) for k in range(m, n)), default=Fraction(0))
    match, match_err = Fraction(0), Fraction(0)
    for k in tail:
        gap = abs(walk.p(k) - tent_like_pi(p_y[k - 1]))
        if gap > match:
            match = gap
        match_err = max(match_err, walk.error(k))
    top = max(p_y[k - 1] for k in tail)
    escape = top > TWO_THIRDS + eps

    if match + match_err <= delta:
        matching = "pass"
    elif match - match_err > delta:
        matching = "fail"
    else:
        matching = "undecided"
    status = {"slowness": "pass" if slow <= delta else "fail",
              "matching": matching,
              "escape": "pass" if escape else "fail"}
    failed = [r for r in REQUIREMENTS if status[r] == "fail"]
    if failed == ["escape"]:
        verdict = f"obstructed: tail confined to [0, {TWO_THIRDS + eps}]"
    elif failed:
        verdict = "obstructed: " + ", ".join(failed) + " fails"
    else:
        verdict = "no obstruction detected at this resolution"
    return {"m": m, "n": n, "delta": delta, "eps": eps,
            "slowness": slow, "matching": match, "matching_error_bound": match_err,
            "max_tail_value": top, "status": status, "failed": failed, "verdict": verdict}


def canonical_candidates(walk: HarmonicWalk) -> dict:
    """The three stock lifts: first-branch inverse, a constant, branch alternation.

    The constant is 1, which escapes above 2/3 but maps to 1/2, so matching
    is the only requirement it breaks.  The alternating lift uses the
    second-branch preimage at odd ``k`` whenever ``p(k) >= 1/2``.
    """
    first = [first_branch_preimage(v) for v in walk.values]
    const = [Fraction(1)] * len(walk)
    alt = []
    for k, v in enumerate(walk.values, start=1):
        if k % 2 and v >= Fraction(1, 2):
            alt.append(second_branch_preimage(v))
        else:
            alt.append(first_branch_preimage(v))
    return {"first_branch": first, "constant": const, "alternating": alt}


PREDICTED = {"first_branch": ["escape"], "constant": ["matching"], "alternating": ["slowness"]}


# ---------------------------------------------------------------------------
# finite-to-one maps


@dataclass(frozen=True)
class PrefixMap:
    values: tuple

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def fiber_bound(self) -> int:
        return max(Counter(self.values).values(), default=0)

    def __call__(self, k: int) -> int:
        return self.values[k]

    @classmethod
    def of(cls, values) -> "PrefixMap":
        vals = tuple(int(v) for v in values)
        if any(v < 0 for v in vals):
            raise BadParams("prefix map values must be natural numbers")
        return cls(vals)


@dataclass(frozen=True)
class RefuterWitness:
    b: tuple
    left: tuple
    right: tuple
    dropped: tuple = field(default=())

    @property
    def intersection(self) -> tuple:
        return tuple(sorted(set(self.left) & set(self.right)))

    def to_json(self) -> dict:
        return {"B": list(self.b), "left": list(self.left), "right": list(self.right),
                "intersection": list(self.intersection), "dropped_zero_q": list(self.dropped)}


def induced_shift_gap(q: PrefixMap, b_set: Sequence[int]) -> tuple:
    """``(q(B+1), q(B)-1, intersection)`` as sorted tuples.

    Members ``b`` with ``q(b) = 0`` have no predecessor in the naturals and
    add nothing to ``q(B)-1``.
    """
    for b in b_set:
        if not 0 <= b < q.n - 1:
            raise OutOfRange(f"{b} (or {b}+1) outside the prefix of length {q.n}")
    left = sorted({q(b + 1) for b in b_set})
    right = sorted({q(b) - 1 for b in b_set if q(b) > 0})
    return tuple(left), tuple(right), tuple(sorted(set(left) & set(right)))


def refute_conjugacy(q: PrefixMap, k: int, fiber_cap: int = FIBER_CAP) -> RefuterWitness:
    """Greedy ``b_0 < b_1 < ..`` with ``q(B+1)`` and ``q(B)-1`` disjoint.

    The prefix is scanned upward; ``b`` is taken when ``q(b)-1`` avoids every
    chosen ``q(b_i+1)``, ``q(b+1)`` avoids every chosen ``q(b_i)-1``, and
    ``q(b)-1 != q(b+1)``.
    """
    if k < 1:
        raise BadParams("k must be >= 1")
    bound = q.fiber_bound
    if bound > fiber_cap:
        raise NotFiniteToOne(f"a fiber of size {bound} exceeds the cap {fiber_cap}",
                             fiber_bound=bound, cap=fiber_cap)
    chosen, left, right, dropped = [], set(), set(), []
    for b in range(q.n - 1):
        if len(chosen) == k:
            break
        qb, qnext = q(b), q(b + 1)
        pred = qb - 1 if qb > 0 else None
        if pred is not None and (pred in left or pred == qnext):
            continue
        if qnext in right:
            continue
        chosen.append(b)
        left.add(qnext)
        if pred is None:
            dropped.append(b)
            log.info("b=%d has q(b)=0; it contributes nothing to q(B)-1", b)
        else:
            right.add(pred)
    witness = RefuterWitness(tuple(chosen), tuple(sorted(left)), tuple(sorted(right)),
                             tuple(dropped))
    assert not witness.intersection
    if len(chosen) < k:
        raise PrefixExhausted(f"found {len(chosen)} of {k} elements in a prefix of {q.n}",
                              witness=witness, found=len(chosen), wanted=k)
    return witness


def read_prefix_map(path) -> PrefixMap:
    """CSV rows ``n,q(n)``; an optional non-numeric header row is skipped."""
    rows = {}
    try:
        with open(path, newline="") as fh:
            for line_no, row in enumerate(csv.reader(fh)):
                if not row:
                    continue
                try:
                    n, v = int(row[0]), int(row[1])
                except (ValueError, IndexError):
                    if line_no == 0:
                        continue
                    raise BadParams(f"bad row {line_no + 1} in {path}: {row}")
                rows[n] = v
    except OSError as exc:
        raise BadParams(f"cannot read prefix map {path}: {exc}") from exc
    if sorted(rows) != list(range(len(rows))):
        raise BadParams("prefix map rows must cover 0..n-1 exactly once")
    return PrefixMap.of(rows[i] for i in range(len(rows)))


def write_prefix_map(q: PrefixMap, path) -> None:
    Path(path).write_text("".join(f"{i},{v}\n" for i, v in enumerate(q.values)))
