"""Rooted neighbourhoods, empirical measures, degree paths, Skorohod modulus, truncation diagnostics."""
from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .builder import EvolvingGraph, snapshot
from .errors import ArgumentError, SizeCapError
from .points import PointCloud, cube_index, dense_cube_census

DEFAULT_CAP = 64
OVERFLOW = "overflow"


# ---------------------------------------------------------------- canonical form

class _Search:
    """Individualization-refinement search for a canonical vertex order."""

    def __init__(self, n: int, out_adj: List[set], in_adj: List[set], oriented: bool):
        self.n = n
        self.out = out_adj
        self.inn = in_adj
        self.und = [out_adj[v] | in_adj[v] for v in range(n)]
        self.oriented = oriented
        self.best = None
        self.best_order = None
        self.best_prefix: List[int] = []
        self.generators: List[List[int]] = []

    def refine(self, col: List[int]) -> List[int]:
        ncol = len(set(col))
        while True:
            if self.oriented:
                sig = [(col[v], tuple(sorted(col[u] for u in self.out[v])),
                        tuple(sorted(col[u] for u in self.inn[v]))) for v in range(self.n)]
            else:
                sig = [(col[v], tuple(sorted(col[u] for u in self.und[v]))) for v in range(self.n)]
            rank = {s: i for i, s in enumerate(sorted(set(sig)))}
            col = [rank[s] for s in sig]
            if len(rank) == ncol:
                return col
            ncol = len(rank)

    def encode(self, order: Sequence[int]) -> bytes:
        n = self.n
        pos = [0] * n
        for i, v in enumerate(order):
            pos[v] = i
        if self.oriented:
            bits = np.zeros((n, n), dtype=bool)
            for v in range(n):
                for u in self.out[v]:
                    bits[pos[v], pos[u]] = True
            flat = bits[~np.eye(n, dtype=bool)]
        else:
            bits = np.zeros((n, n), dtype=bool)
            for v in range(n):
                for u in self.und[v]:
                    bits[pos[v], pos[u]] = True
            flat = bits[np.triu_indices(n, 1)]
        head = (b"O" if self.oriented else b"U") + n.to_bytes(2, "big")
        return head + np.packbits(flat).tobytes()

    def twins(self, a: int, b: int) -> bool:
        if self.oriented:
            return (self.out[a] - {b} == self.out[b] - {a}
                    and self.inn[a] - {b} == self.inn[b] - {a}
                    and (b in self.out[a]) == (a in self.out[b]))
        return self.und[a] - {b} == self.und[b] - {a}

    def run(self, col: List[int], prefix: List[int]) -> int:
        """Search below this node; returns the depth to resume at (backjumping)."""
        col = self.refine(col)
        cells: Dict[int, List[int]] = {}
        for v, c in enumerate(col):
            cells.setdefault(c, []).append(v)
        target = next((c for c in sorted(cells) if len(cells[c]) > 1), None)
        if target is None:
            order = sorted(range(self.n), key=col.__getitem__)
            code = self.encode(order)
            if self.best is None or code < self.best:
                self.best, self.best_order, self.best_prefix = code, order, prefix
            elif code == self.best:
                g = [0] * self.n
                for a, b in zip(self.best_order, order):
                    g[a] = b
                self.generators.append(g)
                # the automorphism maps the best leaf's branch onto this one, so the
                # rest of this branch below the common ancestor is redundant
                common = 0
                while common < len(prefix) and prefix[common] == self.best_prefix[common]:
                    common += 1
                return common
            return len(prefix)
        cell = cells[target]
        # orbits of automorphisms fixing the prefix, seeded with twin swaps
        parent = {v: v for v in cell}

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

        for i, a in enumerate(cell):
            for b in cell[i + 1:]:
                if find(a) != find(b) and self.twins(a, b):
                    union(a, b)
        applied = 0
        done_roots = set()
        for v in cell:
            for g in self.generators[applied:]:
                if all(g[p] == p for p in prefix):
                    for w in cell:
                        union(w, g[w])
            applied = len(self.generators)
            if done_roots and find(v) in {find(u) for u in done_roots}:
                continue
            back = self.run([2 * c + (0 if u == v else 1) for u, c in enumerate(col)], prefix + [v])
            done_roots.add(v)
            if back < len(prefix):
                return back
        return len(prefix)


@dataclass(frozen=True)
class RootedGraph:
    """Finite rooted graph on vertices 0..n-1; edge (u, v) points from u to v."""

    n: int
    edges: Tuple[Tuple[int, int], ...]
    root: int = 0

    def relabel(self, perm: Sequence[int]) -> "RootedGraph":
        """Image under the vertex map i -> perm[i]."""
        return RootedGraph(self.n, tuple((perm[u], perm[v]) for u, v in self.edges), perm[self.root])


@dataclass(frozen=True)
class RootedNeighbourhood:
    encoding: bytes
    size: int
    depth: int

    @property
    def hex(self) -> str:
        return self.encoding.hex()


def canonical_form(g: RootedGraph, oriented: bool = False, cap: int = DEFAULT_CAP) -> bytes:
    """Encoding shared by exactly the rooted graphs isomorphic to ``g``; the root comes first."""
    if g.n > cap:
        raise SizeCapError(g.n, cap)
    if not 0 <= g.root < g.n:
        raise ArgumentError("root outside the vertex range")
    out_adj = [set() for _ in range(g.n)]
    in_adj = [set() for _ in range(g.n)]
    for u, v in g.edges:
        if u == v:
            raise ArgumentError("self-loops are not supported")
        out_adj[u].add(v)
        in_adj[v].add(u)
    s = _Search(g.n, out_adj, in_adj, oriented)
    s.run([0 if v == g.root else 1 for v in range(g.n)], [])
    return s.best


def canonical_equal(g1: RootedGraph, g2: RootedGraph, oriented: bool = False,
                    cap: int = DEFAULT_CAP) -> bool:
    if g1.n != g2.n or len(set(map(frozenset, g1.edges))) != len(set(map(frozenset, g2.edges))):
        return False
    return canonical_form(g1, oriented, cap) == canonical_form(g2, oriented, cap)


def decode(encoding: bytes) -> RootedGraph:
    """Rooted graph (root 0) represented by a canonical encoding."""
    oriented = encoding[:1] == b"O"
    n = int.from_bytes(encoding[1:3], "big")
    bits = np.unpackbits(np.frombuffer(encoding[3:], dtype=np.uint8))
    if oriented:
        ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    else:
        ii, jj = np.triu_indices(n, 1)
    sel = bits[:ii.size].astype(bool)
    return RootedGraph(n, tuple(zip(ii[sel].tolist(), jj[sel].tolist())), 0)


def root_indegree(encoding: bytes) -> int:
    """In-degree of the root in an oriented encoding (total degree for unoriented ones)."""
    g = decode(encoding)
    if encoding[:1] == b"O":
        return sum(1 for u, v in g.edges if v == 0)
    return sum(1 for u, v in g.edges if 0 in (u, v))


def _ball(indptr, indices, row: int, h: int, limit: int):
    """Vertices within h hops of ``row`` (BFS order) and their depths; None past ``limit``."""
    depth = {row: 0}
    order = [row]
    frontier = [row]
    for k in range(1, h + 1):
        nxt = []
        for v in frontier:
            for u in indices[indptr[v]:indptr[v + 1]].tolist():
                if u not in depth:
                    depth[u] = k
                    order.append(u)
                    nxt.append(u)
                    if len(order) > limit:
                        return None, None
        frontier = nxt
    return order, depth


def _ball_graph(graph: EvolvingGraph, order, depth, h: int) -> RootedGraph:
    """Edges of the h-ball: both ends inside and at least one end within h-1 hops."""
    local = {v: i for i, v in enumerate(order)}
    edges = []
    for v in order:
        lo, hi = np.searchsorted(graph.young, [v, v + 1])
        for u in graph.old[lo:hi].tolist():
            if u in local and min(depth[u], depth[v]) <= h - 1:
                edges.append((local[v], local[u]))
    return RootedGraph(len(order), tuple(edges), 0)


def _rooted_ball(graph: EvolvingGraph, row: int, h: int, cap: int) -> Optional[RootedGraph]:
    indptr, indices = graph.adjacency()
    order, depth = _ball(indptr, indices, row, h, cap)
    if order is None:
        return None
    return _ball_graph(graph, order, depth, h)


def h_neighbourhood(graph: EvolvingGraph, x: int, h: int, t: float = 1.0,
                    cap: int = DEFAULT_CAP, oriented: bool = False) -> RootedNeighbourhood:
    """Canonical h-ball around vertex id ``x`` in G(t)."""
    if h < 0:
        raise ArgumentError("depth must be >= 0")
    snap = snapshot(graph, t) if t < 1.0 else graph
    row = snap.row(x)
    rg = _rooted_ball(snap, row, h, cap)
    if rg is None:
        raise SizeCapError(cap + 1, cap)
    return RootedNeighbourhood(canonical_form(rg, oriented, cap), rg.n, h)


@dataclass
class EmpiricalMeasure:
    """Counts per key, normalized by the torus volume ``n``."""

    counts: Dict[object, int]
    n: float

    def weight(self, key) -> float:
        return self.counts.get(key, 0) / self.n

    @property
    def weights(self) -> Dict[object, float]:
        return {k: c / self.n for k, c in self.counts.items()}

    @property
    def mass(self) -> float:
        return sum(self.counts.values()) / self.n

    def pushforward(self, fn) -> "EmpiricalMeasure":
        out: Counter = Counter()
        for k, c in self.counts.items():
            out[fn(k)] += c
        return EmpiricalMeasure(dict(out), self.n)

    def merge(self, other: "EmpiricalMeasure") -> "EmpiricalMeasure":
        out = Counter(self.counts)
        out.update(other.counts)
        return EmpiricalMeasure(dict(out), self.n)

    def to_json(self) -> str:
        keys = {(k.hex() if isinstance(k, bytes) else str(k)): v for k, v in self.weights.items()}
        return json.dumps(dict(sorted(keys.items())), sort_keys=True)


def empirical_neighbourhood(graph: EvolvingGraph, t: float, h: int, cap: int = DEFAULT_CAP,
                            oriented: bool = False) -> EmpiricalMeasure:
    """Counting measure of canonical h-balls over the vertices of G(t); oversize balls go to OVERFLOW."""
    snap = snapshot(graph, t) if t < 1.0 else graph
    counts: Counter = Counter()
    cache: Dict[tuple, bytes] = {}
    for row in range(snap.count):
        rg = _rooted_ball(snap, row, h, cap)
        if rg is None:
            counts[OVERFLOW] += 1
            continue
        key = (rg.n, tuple(sorted(rg.edges)))
        code = cache.get(key)
        if code is None:
            code = cache[key] = canonical_form(rg, oriented, cap)
        counts[code] += 1
    return EmpiricalMeasure(dict(counts), graph.volume)


def empirical_indegree(graph: EvolvingGraph, t: float) -> EmpiricalMeasure:
    """Counting measure of in-degrees Z_x(t) over the vertices of G(t)."""
    snap = snapshot(graph, t) if t < 1.0 else graph
    z = snap.indegree()
    vals, cnt = np.unique(z, return_counts=True)
    return EmpiricalMeasure(dict(zip(vals.tolist(), cnt.tolist())), graph.volume)


@dataclass
class StepPath:
    """Right-continuous step path on [0,1]: ``initial`` before the first jump."""

    times: np.ndarray
    values: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.initial = np.asarray(self.initial, dtype=float).reshape(-1)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.times),
                                                                   self.initial.shape[0])
        if self.values.shape[1] != self.initial.shape[0]:
            raise ArgumentError("jump values and initial value differ in dimension")
        if np.any(np.diff(self.times) <= 0):
            raise ArgumentError("jump times must be strictly increasing")
        if self.times.size and (self.times[0] <= 0.0 or self.times[-1] > 1.0):
            raise ArgumentError("jump times must lie in (0, 1]")

    @property
    def dimension(self) -> int:
        return self.initial.shape[0]

    def steps(self) -> np.ndarray:
        """Value of each step: row 0 is the initial value, row k the value after jump k."""
        return np.vstack([self.initial[None, :], self.values])

    def __call__(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.times, t, side="right"))
        return self.steps()[k]

    def to_csv(self) -> str:
        rows = ["time," + ",".join(f"v{j}" for j in range(self.dimension))]
        for t, row in zip(np.concatenate([[0.0], self.times]), self.steps()):
            rows.append(",".join("%.17g" % v for v in (t, *row)))
        return "\n".join(rows) + "\n"


def degree_evolution(graph: EvolvingGraph, x: int) -> StepPath:
    """In-degree path of vertex id ``x``: unit jumps at its in-neighbours' births."""
    row = graph.row(x)
    times = np.sort(graph.birth[graph.in_neighbours(row)])
    return StepPath(times, np.arange(1, times.size + 1), [0.0])


def truncated_degree_path(graph: EvolvingGraph, k: int) -> StepPath:
    """Vector path whose coordinate j is (1/n) #{born x : Z_x(t) = j}, j = 0..k."""
    if k < 0:
        raise ArgumentError("truncation level must be >= 0")
    n = graph.volume
    # events sorted by time: births (+1 at degree 0) and edges (move one unit up)
    z = np.zeros(graph.count, dtype=np.int64)
    cur = np.zeros(k + 1)
    times, vals = [], []
    e = 0
    for row in range(graph.count):
        t = graph.birth[row]
        cur[0] += 1.0
        while e < graph.edge_count and graph.young[e] == row:
            x = graph.old[e]
            if z[x] <= k:
                cur[z[x]] -= 1.0
            z[x] += 1
            if z[x] <= k:
                cur[z[x]] += 1.0
            e += 1
        times.append(t)
        vals.append(cur / n)
    return StepPath(np.array(times), np.array(vals).reshape(-1, k + 1), np.zeros(k + 1))


def _osc_table(steps: np.ndarray) -> np.ndarray:
    """osc[a, b] = max-norm oscillation of steps a..b (a <= b)."""
    J = steps.shape[0]
    osc = np.zeros((J, J))
    for a in range(J):
        hi = np.maximum.accumulate(steps[a:], axis=0)
        lo = np.minimum.accumulate(steps[a:], axis=0)
        osc[a, a:] = np.max(hi - lo, axis=1)
    return osc


def skorohod_modulus(path: StepPath, eta: float) -> float:
    """w'_eta: inf over partitions with all gaps > eta of the largest in-block oscillation.

    Blocks are half-open [t_{i-1}, t_i).  A breakpoint either sits on a jump
    time (splitting the steps on either side) or inside the open gap between
    jumps (the step is shared); for each such type the DP keeps the earliest
    reachable position.
    """
    if not 0.0 < eta < 1.0:
        raise ArgumentError("eta must lie in (0, 1) for a valid partition to exist")
    tau = path.times
    J = tau.size
    steps = path.steps()
    osc = _osc_table(steps)
    # step index containing 1- (a jump exactly at 1 is never inside a block)
    last = J - 1 if (J and tau[-1] >= 1.0) else J
    bounds = np.concatenate([[0.0], tau, [1.0]])
    # states: ("gap", m) inside (tau_m, tau_{m+1}); ("jump", m) at tau_m
    states = []
    for m in range(0, J + 1):
        if m >= 1 and tau[m - 1] < 1.0:
            states.append(("jump", m))
        if bounds[m] < bounds[m + 1]:
            states.append(("gap", m))

    def feasible(w: float) -> bool:
        best = {}
        start = ("start", 0)
        best[start] = 0.0
        order = [start] + states
        for i, s in enumerate(order):
            if s not in best:
                continue
            p = best[s]
            ks = s[1]
            if 1.0 - p > eta and osc[ks, last] <= w:
                return True
            for kind, m in order[i + 1:]:
                if kind == "jump":
                    if m - 1 < ks or tau[m - 1] - p <= eta or osc[ks, m - 1] > w:
                        continue
                    pos = tau[m - 1]
                else:
                    if m < ks or osc[ks, m] > w:
                        continue
                    pos = max(bounds[m], p + eta)
                    if pos >= bounds[m + 1]:
                        continue
                key = (kind, m)
                if key not in best or pos < best[key]:
                    best[key] = pos
        return False

    cand = np.unique(np.concatenate([[0.0], osc[np.triu_indices(osc.shape[0])]]))
    lo, hi = 0, cand.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(cand[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(cand[lo])


def _ball_matches(graph: EvolvingGraph, row: int, h: int, target: RootedGraph,
                  code: bytes, oriented: bool) -> bool:
    indptr, indices = graph.adjacency()
    order, depth = _ball(indptr, indices, row, h, target.n)
    if order is None or len(order) != target.n:
        return False
    rg = _ball_graph(graph, order, depth, h)
    if len(rg.edges) != len(target.edges):
        return False
    return canonical_form(rg, oriented) == code


def bad_vertex_census(G: EvolvingGraph, G_truncated: EvolvingGraph, t: float, h: int,
                      g: RootedNeighbourhood, oriented: bool = False):
    """(bad count, overflow count) where a vertex is bad when exactly one of its h-balls matches g.

    Balls larger than g never match, so no canonicalization is needed for them
    and the overflow bucket stays empty unless g itself exceeds the cap.
    """
    if not np.array_equal(G.ids, G_truncated.ids):
        raise ArgumentError("graphs must share their vertex set")
    if g.size > DEFAULT_CAP:
        return 0, G.count
    target = decode(g.encoding)
    A = snapshot(G, t) if t < 1.0 else G
    B = snapshot(G_truncated, t) if t < 1.0 else G_truncated
    bad = 0
    for row in range(A.count):
        if _ball_matches(A, row, h, target, g.encoding, oriented) != \
                _ball_matches(B, row, h, target, g.encoding, oriented):
            bad += 1
    return bad, 0


def bad_vertex_count(G: EvolvingGraph, G_truncated: EvolvingGraph, t: float, h: int,
                     g: RootedNeighbourhood, oriented: bool = False) -> int:
    return bad_vertex_census(G, G_truncated, t, h, g, oriented)[0]


def long_edge_count(graph: EvolvingGraph, r: float, m: Optional[float] = None,
                    cloud: Optional[PointCloud] = None) -> int:
    """Edges longer than r whose older endpoint lies in an m-sparse unit cube (m=None: all sparse).

    Cube counts come from ``cloud`` (default: the graph's own vertices).
    """
    cl = graph.cloud
    if graph.edge_count == 0:
        return 0
    dx = np.abs(cl.positions[graph.young] - cl.positions[graph.old])
    dx = np.minimum(dx, cl.box.side - dx)
    long_ = np.sqrt(np.sum(dx * dx, axis=1)) > r
    if m is None or math.isinf(m):
        return int(np.count_nonzero(long_))
    counts, _ = dense_cube_census(cloud if cloud is not None else cl, 1)
    dense_of = counts[tuple(cube_index(cl).T)] >= m
    return int(np.count_nonzero(long_ & ~dense_of[graph.old]))
