"""Chain transition graphs, strong connectivity and trapping-set search."""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np

from . import _kernels
from .errors import BadParams, NotNice, TooLarge
from .geometry import Cover, fmt, isolating_cover, max_distance, membership_matrix, rational
from .systems import DiscreteSystem

EXHAUSTIVE_CAP = 20
ORACLE_MAX = 12


@dataclass(frozen=True, eq=False)
class ChainGraph:
    """Directed graph on sample indices.

    ``tag`` is ``{"cover": Cover}`` for cover chains or
    ``{"epsilon": Fraction}`` for metric chains.
    """

    n: int
    edges: tuple
    tag: dict = field(default_factory=dict)

    @classmethod
    def from_matrix(cls, adj: np.ndarray, tag: dict) -> "ChainGraph":
        rows = tuple(tuple(int(j) for j in np.flatnonzero(adj[i])) for i in range(adj.shape[0]))
        return cls(adj.shape[0], rows, tag)

    @cached_property
    def matrix(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=np.bool_)
        for i, row in enumerate(self.edges):
            adj[i, list(row)] = True
        return adj

    @cached_property
    def reverse(self) -> tuple:
        rev = [[] for _ in range(self.n)]
        for i, row in enumerate(self.edges):
            for j in row:
                rev[j].append(i)
        return tuple(tuple(r) for r in rev)

    def has_edge(self, a: int, b: int) -> bool:
        return b in self.edges[a]

    def edge_set(self) -> set:
        return {(i, j) for i, row in enumerate(self.edges) for j in row}


def chain_graph(sys: DiscreteSystem, cover: Cover) -> ChainGraph:
    """Edge x -> y iff some box holds both f(x) and y."""
    member = membership_matrix(sys.sample, cover)
    if not (member.any(axis=0).all() and member.any(axis=1).all()):
        raise NotNice("cover is not nice for the sample")
    adj = _kernels.cover_edges(member, sys.image_array)
    return ChainGraph.from_matrix(adj, {"cover": cover})


def metric_chain_graph(sys: DiscreteSystem, epsilon) -> ChainGraph:
    """Edge x -> y iff the max-metric distance from f(x) to y is < epsilon."""
    eps = rational(epsilon)
    if eps <= 0:
        raise BadParams("epsilon must be positive")
    pts, denom = sys.encoded([eps])
    scaled = int(eps * denom)
    if pts.dtype == object:
        scaled = int(scaled)
    adj = _kernels.metric_edges(pts, sys.image_array, scaled)
    return ChainGraph.from_matrix(adj, {"epsilon": eps})


def _reach(adj_lists, start: int) -> list:
    seen = [False] * len(adj_lists)
    seen[start] = True
    stack = [start]
    while stack:
        v = stack.pop()
        for w in adj_lists[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return seen


def is_chain_transitive(g: ChainGraph) -> bool:
    if g.n == 0:
        return False
    return all(_reach(g.edges, 0)) and all(_reach(g.reverse, 0))


@dataclass(frozen=True)
class Components:
    """SCC partition.

    ``classes`` are sorted by smallest member and numbered in that order;
    ``order`` lists class numbers topologically (sources first, ties broken
    by number); ``dag`` holds condensation edges.
    """

    classes: tuple
    label: tuple
    order: tuple
    dag: tuple

    @property
    def terminal(self) -> tuple:
        outgoing = {a for a, _ in self.dag}
        return tuple(c for c in range(len(self.classes)) if c not in outgoing)


def _tarjan(edges) -> list:
    """Iterative Tarjan; returns raw component lists."""
    n = len(edges)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack, out = [], []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            succ = edges[v]
            descended = False
            while pos < len(succ):
                w = succ[pos]
                pos += 1
                if index[w] == -1:
                    work.append((v, pos))
                    work.append((w, 0))
                    descended = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if descended:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return out


def chain_components(g: ChainGraph) -> Components:
    raw = _tarjan(g.edges)
    classes = sorted((tuple(sorted(c)) for c in raw), key=lambda c: c[0])
    label = [0] * g.n
    for k, c in enumerate(classes):
        for v in c:
            label[v] = k
    dag = sorted({(label[i], label[j]) for i, row in enumerate(g.edges) for j in row
                  if label[i] != label[j]})
    indeg = [0] * len(classes)
    succ = [[] for _ in classes]
    for a, b in dag:
        indeg[b] += 1
        succ[a].append(b)
    ready = [c for c in range(len(classes)) if indeg[c] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        c = heapq.heappop(ready)
        order.append(c)
        for d in succ[c]:
            indeg[d] -= 1
            if indeg[d] == 0:
                heapq.heappush(ready, d)
    return Components(tuple(classes), tuple(label), tuple(order), tuple(dag))


def _bfs_path(g: ChainGraph, starts, accept) -> list | None:
    """Shortest path from any of ``starts`` (tried in order) to a vertex with ``accept``."""
    parent = {}
    queue = deque()
    for s in starts:
        if s not in parent:
            parent[s] = None
            queue.append(s)
    while queue:
        v = queue.popleft()
        if accept(v):
            path = [v]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        for w in g.edges[v]:
            if w not in parent:
                parent[w] = v
                queue.append(w)
    return None


def find_chain(g: ChainGraph, a: int, b: int) -> list | None:
    """Shortest a -> b path (BFS, neighbours in index order); ``[a]`` when a == b."""
    return _bfs_path(g, [a], lambda v: v == b)


def find_cycle(g: ChainGraph, a: int) -> list | None:
    """Shortest nonempty closed walk at ``a``, as the list of vertices after ``a``."""
    return path_to_any(g, a, (a,))


def path_to_any(g: ChainGraph, a: int, targets) -> list | None:
    """Shortest path of length >= 1 from ``a`` into ``targets`` (``a`` itself omitted)."""
    targets = set(targets)
    return _bfs_path(g, g.edges[a], targets.__contains__)


# ---------------------------------------------------------------------------
# trapping sets


@dataclass(frozen=True)
class Trapping:
    boxes: tuple
    points: tuple
    closure: tuple
    images: tuple

    def to_json(self) -> dict:
        return {"boxes": list(self.boxes), "points": list(self.points),
                "closure": list(self.closure), "images": list(self.images)}


@dataclass(frozen=True)
class TrappingReport:
    trapping: Trapping | None
    weakly_incompressible: bool | None
    mode: str
    closure_radius: Fraction

    @property
    def verdict(self) -> str:
        if self.trapping is not None:
            return "trapping union found"
        if self.mode == "heuristic":
            return "no trapping found (heuristic)"
        return "weakly incompressible"

    def to_json(self) -> dict:
        return {"trapping": None if self.trapping is None else self.trapping.to_json(),
                "weakly_incompressible": self.weakly_incompressible,
                "mode": self.mode, "verdict": self.verdict,
                "closure": f"points within {fmt(self.closure_radius)} (max metric) of W"}


def closure_indices(sys: DiscreteSystem, points) -> list:
    """Sample points within ``sys.mesh`` of ``points`` (exact, max metric)."""
    pts = [sys.sample[i] for i in points]
    return [i for i, x in enumerate(sys.sample)
            if any(max_distance(x, y) <= sys.mesh for y in pts)]


def describe_trapping(sys: DiscreteSystem, cover: Cover, boxes) -> Trapping | None:
    """Recompute a candidate from scratch with Fractions; ``None`` unless it traps."""
    chosen = [cover.boxes[k] for k in boxes]
    inside = [i for i, p in enumerate(sys.sample) if any(b.contains(p) for b in chosen)]
    if not inside or len(inside) == len(sys):
        return None
    closure = closure_indices(sys, inside)
    images = sorted({sys.images[i] for i in closure})
    if not all(any(b.contains(sys.sample[j]) for b in chosen) for j in images):
        return None
    return Trapping(tuple(boxes), tuple(inside), tuple(closure), tuple(images))


def _mask_boxes(mask: int, k: int) -> tuple:
    return tuple(j for j in range(k) if (mask >> j) & 1)


def find_trapping_set(sys: DiscreteSystem, cover: Cover, cap: int = EXHAUSTIVE_CAP) -> TrappingReport:
    """Search unions W of cover boxes with f(closure(W & S)) inside W.

    Up to ``cap`` boxes every union is tried in binary-counting order of
    its box bitmask.  Above the cap, candidates come from terminal classes of
    the chain-graph condensation and a negative answer is only heuristic.
    """
    member = membership_matrix(sys.sample, cover)
    if not (member.any(axis=0).all() and member.any(axis=1).all()):
        raise NotNice("cover is not nice for the sample")
    k = len(cover)
    pts, denom = sys.encoded([sys.mesh])
    close = _kernels.within(pts, int(sys.mesh * denom))
    mf = np.ascontiguousarray(member[sys.image_array])
    if k <= cap:
        mask = _kernels.trapping_scan(np.ascontiguousarray(member), mf, close)
        if mask < 0:
            return TrappingReport(None, True, "exhaustive", sys.mesh)
        found = describe_trapping(sys, cover, _mask_boxes(mask, k))
        assert found is not None, "kernel and exact re-check disagree"
        return TrappingReport(found, False, "exhaustive", sys.mesh)

    comps = chain_components(ChainGraph.from_matrix(_kernels.cover_edges(member, sys.image_array),
                                                    {"cover": cover}))
    for c in comps.terminal:
        cls = set(comps.classes[c])
        inner = tuple(j for j in range(k) if set(np.flatnonzero(member[:, j])) <= cls)
        touching = tuple(j for j in range(k) if cls & set(np.flatnonzero(member[:, j])))
        for boxes in (inner, touching):
            if boxes:
                found = describe_trapping(sys, cover, boxes)
                if found is not None:
                    return TrappingReport(found, False, "heuristic", sys.mesh)
    return TrappingReport(None, None, "heuristic", sys.mesh)


# ---------------------------------------------------------------------------
# purely discrete equivalence oracle


@dataclass(frozen=True)
class EquivalenceReport:
    chain_transitive: bool
    no_invariant_subset: bool
    invariant_witness: tuple | None

    @property
    def agree(self) -> bool:
        return self.chain_transitive == self.no_invariant_subset

    def to_json(self) -> dict:
        return {"chain_transitive": self.chain_transitive,
                "no_invariant_subset": self.no_invariant_subset,
                "agree": self.agree,
                "invariant_witness": None if self.invariant_witness is None
                else list(self.invariant_witness)}


@lru_cache(maxsize=256)
def _isolating(sample: tuple) -> Cover:
    return isolating_cover(sample)


def proper_invariant_subset(images) -> tuple | None:
    """Smallest-bitmask proper nonempty subset S with f(S) inside S, else None."""
    n = len(images)
    full = (1 << n) - 1
    img = [0] * (1 << n)
    for mask in range(1, full):
        low = mask & -mask
        img[mask] = img[mask ^ low] | (1 << images[low.bit_length() - 1])
        if img[mask] & ~mask == 0:
            return tuple(i for i in range(n) if (mask >> i) & 1)
    return None


def equivalence_oracle(sys: DiscreteSystem, max_size: int = ORACLE_MAX) -> EquivalenceReport:
    """Strong connectivity of the isolating-cover chain graph versus brute-force invariance."""
    if len(sys) > max_size:
        raise TooLarge(f"sample of {len(sys)} exceeds oracle limit {max_size}")
    if sys.mesh != 0:
        raise BadParams("equivalence oracle needs a purely discrete system (mesh 0)")
    g = chain_graph(sys, _isolating(tuple(sys.sample)))
    witness = proper_invariant_subset(sys.images)
    return EquivalenceReport(is_chain_transitive(g), witness is None, witness)


# ---------------------------------------------------------------------------
# export


def to_dot(g: ChainGraph, sys: DiscreteSystem, cluster: bool = False) -> str:
    """Graphviz text; vertices labelled "index: coordinates"."""
    lines = ["digraph chain {"]

    def node(i):
        coords = ", ".join(fmt(v) for v in sys.sample[i].dense(sys.coords))
        return f'  {i} [label="{i}: ({coords})"];'

    if cluster:
        comps = chain_components(g)
        for c, members in enumerate(comps.classes):
            lines.append(f"  subgraph cluster_{c} {{")
            lines.append(f'    label="class {c}";')
            lines.extend("  " + node(i) for i in members)
            lines.append("  }")
    else:
        lines.extend(node(i) for i in range(g.n))
    for i, row in enumerate(g.edges):
        for j in row:
            lines.append(f"  {i} -> {j};")
    lines.append("}")
    return "\n".join(lines) + "\n"
