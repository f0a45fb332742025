"""Compliant loops, eventual compliance and certificate construction.

A segment ``x_{m+1}, .., x_n`` is a *U-compliant x-loop* when

1. ``x_n`` is the base point ``x`` (compared on the cover's coordinates),
2. every point lies in the union of the cover,
3. every box of the cover is hit,
4. ``x_{m+1}`` lies in ``U*(f(U*(x)))``,
5. each step satisfies ``x_{i+1} in U*(f(U*(x_i) & X))``.

Here ``X`` is the sample and ``f`` the sample map.  Every condition reads
only the coordinates the cover constrains.

Membership of sequence points is computed once per cover; condition 5 then
becomes a bilinear test against the box-transition matrix
``G[k', k] = exists s in X with s in box k and f(s) in box k'``.
"""
from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _kernels
from .chaingraph import ChainGraph, _bfs_path, chain_graph, is_chain_transitive
from .errors import BadParams, LadderNotRefining, NotChainTransitive, NotNice
from .geometry import Cover, Point, common_refinement, fmt, is_full_refinement, membership_matrix, refines
from .systems import DiscreteSystem

CONDITIONS = ("1", "2", "3", "4", "5")
LOOPS_PER_STAGE = 2


class CoverContext:
    """Sample-side data for one (system, cover) pair."""

    def __init__(self, sys: DiscreteSystem, cover: Cover):
        self.sys = sys
        self.cover = cover
        self.support = cover.support
        self.member = membership_matrix(sys.sample, cover)
        if not (self.member.any(axis=0).all() and self.member.any(axis=1).all()):
            raise NotNice("cover is not nice for the sample")
        m = self.member.astype(np.float32)
        self.transition = np.ascontiguousarray((m[sys.image_array].T @ m) > 0)
        self._rows: dict = {}

    def rows(self, points: Sequence[Point]) -> np.ndarray:
        """Membership rows for arbitrary points, cached by their projection."""
        keys = [p.project(self.support) for p in points]
        missing = list(dict.fromkeys(k for k in keys if k not in self._rows))
        if missing:
            block = membership_matrix(missing, self.cover)
            for k, row in zip(missing, block):
                self._rows[k] = row
        if not keys:
            return np.zeros((0, len(self.cover)), dtype=np.bool_)
        return np.ascontiguousarray(np.stack([self._rows[k] for k in keys]))

    def same_base(self, p: Point, base: Point) -> bool:
        return p.project(self.support) == base.project(self.support)


# ---------------------------------------------------------------------------
# single loops


@dataclass(frozen=True, eq=False)
class LoopWitness:
    points: tuple
    base: Point
    cover: Cover
    diagnostics: dict

    @property
    def verified(self) -> bool:
        return all(self.diagnostics[c] for c in CONDITIONS)

    @property
    def failed(self) -> tuple:
        return tuple(c for c in CONDITIONS if not self.diagnostics[c])


def _loop_diagnostics(ctx: CoverContext, segment: Sequence[Point], base: Point) -> dict:
    if not segment:
        return {"1": False, "2": False, "3": False, "4": False, "5": False,
                "outside": [], "missed_boxes": list(range(len(ctx.cover))), "bad_steps": []}
    rows = ctx.rows(list(segment) + [base])
    seg, base_row = rows[:-1], rows[-1:]
    inside = seg.any(axis=1)
    hit = seg.any(axis=0)
    first_ok = bool(_kernels.step_checks(np.ascontiguousarray(np.vstack([base_row, seg[:1]])),
                                         ctx.transition)[0])
    steps = _kernels.step_checks(seg, ctx.transition)
    return {
        "1": ctx.same_base(segment[-1], base),
        "2": bool(inside.all()),
        "3": bool(hit.all()),
        "4": first_ok,
        "5": bool(steps.all()),
        "outside": [int(i) for i in np.flatnonzero(~inside)],
        "missed_boxes": [int(k) for k in np.flatnonzero(~hit)],
        "bad_steps": [int(i) for i in np.flatnonzero(~steps)],
    }


def is_compliant_loop(segment: Sequence[Point], cover: Cover, base: Point,
                      sys: DiscreteSystem, ctx: CoverContext | None = None) -> LoopWitness:
    """Evaluate the five loop conditions; diagnostics name every failure.

    ``bad_steps`` holds ``i`` for each failing step ``segment[i] -> segment[i+1]``.
    """
    ctx = ctx or CoverContext(sys, cover)
    return LoopWitness(tuple(segment), base, cover, _loop_diagnostics(ctx, segment, base))


# ---------------------------------------------------------------------------
# whole sequences


class SequenceScan:
    """Prefix sums that answer loop queries on ``seq[j+1..k]`` in O(boxes)."""

    def __init__(self, ctx: CoverContext, seq: Sequence[Point], base: Point):
        self.ctx = ctx
        self.seq = seq
        rows = ctx.rows(list(seq) + [base])
        self.rows, base_row = rows[:-1], rows[-1]
        n = len(seq)
        self.inside = self.rows.any(axis=1)
        self.steps = _kernels.step_checks(self.rows, ctx.transition)
        # first[i]: seq[i] may follow the base point (condition 4)
        reach = (ctx.transition.astype(np.float32) @ base_row.astype(np.float32)) > 0
        self.first = (self.rows & reach[None, :]).any(axis=1)
        self.is_base = np.array([ctx.same_base(p, base) for p in seq], dtype=np.bool_)
        self.cum_inside = np.concatenate([[0], np.cumsum(self.inside)])
        self.cum_steps = np.concatenate([[0], np.cumsum(self.steps)])
        self.cum_hits = np.vstack([np.zeros((1, self.rows.shape[1]), dtype=np.int64),
                                   np.cumsum(self.rows, axis=0, dtype=np.int64)])
        self.n = n

    def diagnostics(self, j: int, k: int) -> dict:
        """Conditions for the segment ``seq[j+1..k]``."""
        if not j < k:
            return {c: False for c in CONDITIONS}
        hits = self.cum_hits[k + 1] - self.cum_hits[j + 1]
        return {
            "1": bool(self.is_base[k]),
            "2": bool(self.cum_inside[k + 1] - self.cum_inside[j + 1] == k - j),
            "3": bool((hits > 0).all()),
            "4": bool(self.first[j + 1]),
            "5": bool(self.cum_steps[k] - self.cum_steps[j + 1] == k - j - 1),
        }

    def loop_ok(self, j: int, k: int) -> bool:
        return all(self.diagnostics(j, k).values())

    def tail_inside(self, m: int) -> bool:
        return bool(self.cum_inside[self.n] - self.cum_inside[m] == self.n - m)

    def tail_steps(self, m: int) -> list:
        """Indices n >= m whose step n -> n+1 violates compliance condition 3."""
        return [int(i) + m for i in np.flatnonzero(~self.steps[m:])]


def decompose(seq: Sequence[Point], cover: Cover, base: Point, sys: DiscreteSystem,
              ctx: CoverContext | None = None) -> tuple | None:
    """Earliest threshold whose suffix splits into verified loops.

    Returns ``(m, cuts)`` with ``cuts[0] == m`` and ``cuts[-1] == len(seq)-1``,
    cutting at the first base return that closes a verified loop and still
    leaves a decomposable remainder.  ``None`` when no nonempty suffix works.
    """
    if not seq:
        return None
    scan = SequenceScan(ctx or CoverContext(sys, cover), seq, base)
    last = len(seq) - 1
    if not scan.is_base[last]:
        return None
    positions = [int(i) for i in np.flatnonzero(scan.is_base)]
    nxt: dict = {last: None}
    good = {last}
    for j in reversed(positions[:-1]):
        for k in positions:
            if k <= j or k not in good:
                continue
            if scan.loop_ok(j, k):
                nxt[j] = k
                good.add(j)
                break
    starts = [j for j in positions if j in good and j != last]
    if not starts:
        return None
    m = starts[0]
    cuts = [m]
    while nxt[cuts[-1]] is not None:
        cuts.append(nxt[cuts[-1]])
    return m, tuple(cuts)


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True, eq=False)
class ComplianceCertificate:
    sequence: tuple
    base: Point
    ladder: tuple
    thresholds: tuple
    cuts: tuple
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "base": self.base.to_json(),
            "sequence": [p.to_json() for p in self.sequence],
            "ladder": [c.to_json() for c in self.ladder],
            "thresholds": list(self.thresholds),
            "cuts": [list(c) for c in self.cuts],
            "meta": self.meta,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, obj: dict) -> "ComplianceCertificate":
        try:
            return cls(
                sequence=tuple(Point.from_json(p) for p in obj["sequence"]),
                base=Point.from_json(obj["base"]),
                ladder=tuple(Cover.from_json(c) for c in obj["ladder"]),
                thresholds=tuple(int(t) for t in obj["thresholds"]),
                cuts=tuple(tuple(int(n) for n in c) for c in obj["cuts"]),
                meta=dict(obj.get("meta", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BadParams(f"malformed certificate: {exc}") from exc

    @classmethod
    def loads(cls, text: str) -> "ComplianceCertificate":
        try:
            return cls.from_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise BadParams(f"certificate is not JSON: {exc}") from exc

    def segments(self, i: int) -> list:
        cuts = self.cuts[i]
        return list(zip(cuts, cuts[1:]))


def _closed_walk(g: ChainGraph, base: int, target_of: list, n_targets: int) -> list:
    """Closed walk from ``base`` (excluded) back to ``base`` visiting every target."""
    hit = [False] * n_targets
    remaining = n_targets
    walk = []
    cur = base

    def fresh(v):
        return any(not hit[t] for t in target_of[v])

    while remaining:
        path = _bfs_path(g, g.edges[cur], fresh)
        if path is None:
            raise NotChainTransitive("some cover box is unreachable from the base")
        for v in path:
            for t in target_of[v]:
                if not hit[t]:
                    hit[t] = True
                    remaining -= 1
        walk.extend(path)
        cur = walk[-1]
    if cur != base or not walk:
        path = _bfs_path(g, g.edges[cur], lambda v: v == base)
        if path is None:
            raise NotChainTransitive("base is unreachable")
        walk.extend(path)
    return walk


def _targets(sys: DiscreteSystem, covers: Sequence[Cover]) -> tuple:
    """Per-vertex lists of target ids; one target per box of every cover."""
    target_of = [[] for _ in range(len(sys))]
    t = 0
    for cover in covers:
        member = membership_matrix(sys.sample, cover)
        for k in range(member.shape[1]):
            for v in np.flatnonzero(member[:, k]):
                target_of[int(v)].append(t)
            t += 1
    return target_of, t


def _run_stages(sys: DiscreteSystem, base: int, stages: Sequence[tuple], loops: int) -> tuple:
    """Append ``loops`` closed walks per stage; returns (indices, thresholds, cuts)."""
    if loops < 1:
        raise BadParams("need at least one loop per stage")
    seq = [base]
    thresholds, ends = [], []
    for graph, covers in stages:
        target_of, n_targets = _targets(sys, covers)
        thresholds.append(len(seq) - 1)
        stage_ends = []
        for _ in range(loops):
            seq.extend(_closed_walk(graph, base, target_of, n_targets))
            stage_ends.append(len(seq) - 1)
        ends.append(stage_ends)
    cuts = []
    for i, m in enumerate(thresholds):
        cuts.append(tuple([m] + [e for later in ends[i:] for e in later]))
    return seq, tuple(thresholds), tuple(cuts)


def bowen_sharkovsky(sys: DiscreteSystem, base: int, ladder: Sequence[Cover],
                     loops_per_stage: int = LOOPS_PER_STAGE) -> ComplianceCertificate:
    """Stage-by-stage closed walks through every box of a refining ladder.

    Stage ``m`` walks in ``chain_graph(sys, ladder[m])`` and visits every box
    of ``ladder[0..m]``, so later loops also verify against coarser covers.
    """
    ladder = list(ladder)
    if not ladder:
        raise BadParams("empty ladder")
    for i in range(1, len(ladder)):
        if not refines(ladder[i], ladder[i - 1]):
            raise LadderNotRefining(f"ladder cover {i} does not refine cover {i - 1}", index=i)
    stages = []
    for i, cover in enumerate(ladder):
        g = chain_graph(sys, cover)
        if not is_chain_transitive(g):
            raise NotChainTransitive(f"chain graph of ladder cover {i} is not strongly connected",
                                     cover_index=i)
        stages.append((g, ladder[:i + 1]))
    idx, thresholds, cuts = _run_stages(sys, base, stages, loops_per_stage)
    meta = {"builder": "bowen_sharkovsky", "loops_per_stage": loops_per_stage,
            "base_index": base, "system": sys.meta}
    return ComplianceCertificate(tuple(sys.sample[i] for i in idx), sys.sample[base],
                                 tuple(ladder), thresholds, cuts, meta)


def generic_builder(sys: DiscreteSystem, base: int, targets: Sequence[Cover],
                    loops_per_meeting: int = LOOPS_PER_STAGE) -> ComplianceCertificate:
    """Meet each target in turn by refining the working cover and appending loops.

    The working cover after meeting ``targets[m]`` is the common refinement of
    the previous working cover with it; the ladder lists the working covers.
    """
    targets = list(targets)
    if not targets:
        raise BadParams("no target covers")
    working, stages = [], []
    for m, target in enumerate(targets):
        cover = target if not working else common_refinement(working[-1], target, sys.sample)
        g = chain_graph(sys, cover)
        if not is_chain_transitive(g):
            raise NotChainTransitive(f"working cover for target {m} is not chain transitive",
                                     cover_index=m)
        working.append(cover)
        stages.append((g, working + targets[:m + 1]))
    idx, thresholds, cuts = _run_stages(sys, base, stages, loops_per_meeting)
    meta = {"builder": "generic", "loops_per_stage": loops_per_meeting, "base_index": base,
            "targets": [t.to_json() for t in targets], "system": sys.meta}
    return ComplianceCertificate(tuple(sys.sample[i] for i in idx), sys.sample[base],
                                 tuple(working), thresholds, cuts, meta)


# ---------------------------------------------------------------------------
# verification


SCOPE = ("certified relative to the ladder covers only: every tail beyond its threshold "
         "decomposes into compliant loops for that cover")


@dataclass
class VerificationReport:
    violations: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, **kw):
        self.violations.append(kw)

    def to_json(self) -> dict:
        return {"scope": SCOPE, "ok": self.ok, "violations": self.violations,
                "checks": self.checks}


def verify_certificate(cert: ComplianceCertificate, sys: DiscreteSystem) -> VerificationReport:
    """Re-check a certificate from its raw data; every violation is listed."""
    report = VerificationReport()
    seq, base = list(cert.sequence), cert.base
    n = len(seq)
    k = len(cert.ladder)
    if not (len(cert.thresholds) == len(cert.cuts) == k) or k == 0:
        report.add(kind="structure", detail="ladder, thresholds and cuts differ in length")
        return report
    contexts, scans = [], []
    for i, cover in enumerate(cert.ladder):
        try:
            ctx = CoverContext(sys, cover)
        except NotNice:
            report.add(kind="structure", cover=i, detail="ladder cover is not nice for the system")
            contexts.append(None)
            scans.append(None)
            continue
        contexts.append(ctx)
        scans.append(SequenceScan(ctx, seq, base))
    loops = blocks = 0
    for i, scan in enumerate(scans):
        if scan is None:
            continue
        cuts, m = cert.cuts[i], cert.thresholds[i]
        if (not cuts or cuts[0] != m or cuts[-1] != n - 1
                or any(a >= b for a, b in zip(cuts, cuts[1:])) or not 0 <= m < n):
            report.add(kind="structure", cover=i,
                       detail="cuts must rise from the threshold to the last index")
            continue
        for s, (a, b) in enumerate(zip(cuts, cuts[1:])):
            diag = scan.diagnostics(a, b)
            loops += 1
            blocks += int(diag["3"])
            bad = [c for c in CONDITIONS if not diag[c]]
            if bad:
                report.add(kind="loop", cover=i, segment=s, start=a + 1, end=b, conditions=bad)
        if not scan.tail_inside(m):
            report.add(kind="compliance", cover=i, condition="1",
                       detail="tail leaves the union of the cover")
        bad_steps = scan.tail_steps(m)
        if bad_steps:
            report.add(kind="compliance", cover=i, condition="3", steps=bad_steps[:20])
    transfers = skipped = 0
    for j in range(k):
        for i in range(j):
            if scans[i] is None or scans[j] is None:
                continue
            if not refines(cert.ladder[j], cert.ladder[i]):
                skipped += 1
                continue
            full = is_full_refinement(cert.ladder[j], cert.ladder[i])
            for s, (a, b) in enumerate(zip(cert.cuts[j], cert.cuts[j][1:])):
                if not scans[j].loop_ok(a, b):
                    continue
                diag = scans[i].diagnostics(a, b)
                wanted = CONDITIONS if full else ("2", "4", "5")
                bad = [c for c in wanted if not diag[c]]
                transfers += 1
                if bad:
                    report.add(kind="transfer", fine=j, coarse=i, segment=s, conditions=bad)
    report.checks = {"loops": loops, "blocks_hitting_every_box": blocks,
                     "transfer_checks": transfers, "transfer_pairs_skipped": skipped,
                     "sequence_length": n, "covers": k}
    return report


# ---------------------------------------------------------------------------
# coordinate locality


@dataclass
class PerturbationReport:
    trials: int
    unchanged: int
    flips: list
    control: bool

    @property
    def ok(self) -> bool:
        return self.control or not self.flips

    def to_json(self) -> dict:
        return {"trials": self.trials, "unchanged": self.unchanged,
                "flips": self.flips, "control": self.control}


def _random_value(rng: random.Random) -> Fraction:
    return Fraction(rng.randrange(0, 2**16 + 1), 2**16)


def perturb_invariance_check(witness: LoopWitness, sys: DiscreteSystem, trials: int = 100,
                             seed: int = 0, touch_support: bool = False,
                             ctx: CoverContext | None = None) -> PerturbationReport:
    """Rewrite off-support coordinates at random and re-evaluate the loop.

    Coordinates outside the cover's support are replaced (and two fresh
    coordinates added) with random rationals.  With ``touch_support`` one
    support coordinate of one point is also rewritten; that run is a
    negative control and changes are expected, not failures.
    """
    ctx = ctx or CoverContext(sys, witness.cover)
    rng = random.Random(seed)
    support = set(ctx.support)
    used = {c for p in witness.points for c in p.support} | set(sys.coords) | support
    fresh = [max(used, default=-1) + 1, max(used, default=-1) + 2]
    off = sorted((used - support) | set(fresh))
    reference = _strip(witness.diagnostics)
    flips, unchanged = [], 0
    for t in range(trials):
        new = []
        for p in witness.points:
            new.append(p.replace({c: _random_value(rng) for c in off}))
        if touch_support and support and new:
            i = rng.randrange(len(new))
            c = rng.choice(sorted(support))
            new[i] = new[i].replace({c: _random_value(rng)})
        again = is_compliant_loop(new, witness.cover, witness.base, sys, ctx)
        if _strip(again.diagnostics) == reference:
            unchanged += 1
        else:
            flips.append(t)
    return PerturbationReport(trials, unchanged, flips, touch_support)


def _strip(diag: dict) -> tuple:
    return tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in diag.items()))


def certificate_witnesses(cert: ComplianceCertificate, sys: DiscreteSystem) -> list:
    """Every cut segment of every ladder cover as a LoopWitness."""
    out = []
    for i, cover in enumerate(cert.ladder):
        ctx = CoverContext(sys, cover)
        for a, b in cert.segments(i):
            seg = cert.sequence[a + 1:b + 1]
            out.append(is_compliant_loop(seg, cover, cert.base, sys, ctx))
    return out


# ---------------------------------------------------------------------------
# export


def sequence_csv(seq: Sequence[Point]) -> str:
    coords = sorted({c for p in seq for c in p.support})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index"] + [f"x{c}" for c in coords])
    for i, p in enumerate(seq):
        w.writerow([i] + [fmt(v) for v in p.dense(coords)])
    return buf.getvalue()
