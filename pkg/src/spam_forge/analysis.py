"""Components, distances, goodness, layers, 2-connections and tail estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .builder import CoupledFamily, EvolvingGraph
from .errors import ArgumentError, RegimeError, SamplingError
from .model import (ModelParams, ProfileFunction, RegimeReport, ball_volume, default_functions,
                    distance_prefactor)
from .points import RED, stream_rng

UNREACHABLE = -1


@dataclass
class ComponentIndex:
    labels: np.ndarray
    sizes: Dict[int, int]
    oldest_label: Optional[int]

    @property
    def count(self) -> int:
        return len(self.sizes)

    def oldest_size(self) -> int:
        return self.sizes.get(self.oldest_label, 0) if self.oldest_label is not None else 0

    def largest_size(self) -> int:
        return max(self.sizes.values(), default=0)

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def components(graph: EvolvingGraph) -> ComponentIndex:
    """Connected components of the undirected skeleton, labelled by their smallest row."""
    m = graph.count
    if m == 0:
        return ComponentIndex(np.zeros(0, dtype=np.int64), {}, None)
    adj = csr_matrix((np.ones(graph.edge_count, dtype=np.int8), (graph.young, graph.old)),
                     shape=(m, m))
    _, raw = connected_components(adj, directed=True, connection="weak")
    first = np.full(raw.max() + 1, m, dtype=np.int64)
    np.minimum.at(first, raw, np.arange(m))
    labels = first[raw]
    uniq, cnt = np.unique(labels, return_counts=True)
    return ComponentIndex(labels, dict(zip(uniq.tolist(), cnt.tolist())), int(labels[0]))


def bfs(graph: EvolvingGraph, row: int, max_depth: int = -1) -> np.ndarray:
    indptr, indices = graph.adjacency()
    return kernels.bfs_distances(indptr, indices, int(row), int(max_depth))


def graph_distance(graph: EvolvingGraph, u: int, v: int) -> int:
    """Hop distance between vertex ids u and v, or UNREACHABLE."""
    ru, rv = graph.row(u), graph.row(v)
    if ru == rv:
        return 0
    return int(bfs(graph, ru)[rv])


@dataclass
class DistanceSample:
    distances: np.ndarray
    median: float
    mean: float
    histogram: Dict[int, int]
    budget: float


def distance_budget_for(graph: EvolvingGraph, eps: float = 1.0,
                        params: Optional[ModelParams] = None) -> float:
    params = params or graph.cloud.params
    n = graph.volume
    if params is None or n <= math.e:
        return float("nan")
    return (4.0 + eps) * distance_prefactor(params.gamma, params.delta) * math.log(math.log(n))


def typical_distance_sample(graph: EvolvingGraph, pairs: int, stream_label: str = "pairs",
                            eps: float = 1.0) -> DistanceSample:
    """Distances between uniform pairs of distinct vertices of the oldest vertex's component."""
    comp = components(graph)
    giant = comp.members(comp.oldest_label) if comp.oldest_label is not None else np.zeros(0)
    if giant.size < 2:
        raise SamplingError("component of the oldest vertex has fewer than 2 vertices")
    seed = graph.cloud.params.seed if graph.cloud.params is not None else 0
    rng = stream_rng(seed, stream_label)
    u = rng.choice(giant, size=pairs)
    v = rng.choice(giant, size=pairs)
    same = u == v
    while np.any(same):
        v[same] = rng.choice(giant, size=int(same.sum()))
        same = u == v
    out = np.empty(pairs, dtype=np.int64)
    for src in np.unique(u):
        dist = bfs(graph, src)
        sel = u == src
        out[sel] = dist[v[sel]]
    hist = dict(zip(*[a.tolist() for a in np.unique(out, return_counts=True)]))
    try:
        budget = distance_budget_for(graph, eps)
    except RegimeError:
        budget = float("nan")
    return DistanceSample(out, float(np.median(out)), float(out.mean()), hist, budget)


@dataclass(frozen=True)
class GoodnessConfig:
    """Slack function g(x) = (1 + ln(1 + x))^c."""

    c: float = 2.0

    def g(self, x):
        return (1.0 + np.log1p(x)) ** self.c

    def threshold(self, s, gamma: float):
        s = np.asarray(s, dtype=float)
        return s ** (-gamma) / self.g(1.0 / s)


def _red_young_counts(graph: EvolvingGraph, local: bool) -> np.ndarray:
    """Per vertex: red in-neighbours born before 1/2 (inside the local cube if asked)."""
    cl = graph.cloud
    y, x = graph.young, graph.old
    keep = (cl.colour[y] == RED) & (cl.birth[y] < 0.5)
    if local:
        half = cl.birth[x] ** (-1.0 / cl.dimension)
        dx = np.abs(cl.positions[y] - cl.positions[x])
        dx = np.minimum(dx, cl.box.side - dx)
        keep &= np.all(dx <= half[:, None], axis=1)
    return np.bincount(x[keep], minlength=graph.count)


def good_mask(family, g_config: GoodnessConfig = GoodnessConfig(), local: bool = False) -> np.ndarray:
    """Rows of the full graph that are (locally) good."""
    graph = family.full if isinstance(family, CoupledFamily) else family
    cl = graph.cloud
    if cl.params is None:
        raise ArgumentError("goodness needs model parameters on the cloud")
    s = cl.birth
    need = g_config.threshold(np.maximum(s, 1e-300), cl.params.gamma)
    return (s < 0.5) & (_red_young_counts(graph, local) >= need)


def is_good(family, vertex: int, g_config: GoodnessConfig = GoodnessConfig()) -> bool:
    graph = family.full if isinstance(family, CoupledFamily) else family
    return bool(good_mask(graph, g_config)[graph.row(vertex)])


def is_locally_good(family, vertex: int, g_config: GoodnessConfig = GoodnessConfig()) -> bool:
    graph = family.full if isinstance(family, CoupledFamily) else family
    return bool(good_mask(graph, g_config, local=True)[graph.row(vertex)])


@dataclass
class LayerHierarchy:
    regime: RegimeReport
    layer_sets: List[np.ndarray]
    g_config: GoodnessConfig
    empty_flag: bool = False
    thresholds: List[float] = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.layer_sets)

    def final(self) -> np.ndarray:
        return self.layer_sets[-1] if self.layer_sets else np.zeros(0, dtype=np.int64)


def build_layers(family, regime: RegimeReport,
                 g_config: GoodnessConfig = GoodnessConfig()) -> LayerHierarchy:
    """L_k = red good vertices born by n^(-alpha^-k), k = 1..K (global ids)."""
    if not regime.robust:
        raise RegimeError("layers are only defined in the robust regime")
    if regime.K < 1:
        return LayerHierarchy(regime, [], g_config, True, [])
    graph = family.full if isinstance(family, CoupledFamily) else family
    cl = graph.cloud
    base = good_mask(graph, g_config) & (cl.colour == RED)
    sets, ths = [], []
    for k in range(1, regime.K + 1):
        th = regime.layer_threshold(k, cl.volume)
        ths.append(th)
        sets.append(cl.ids[base & (cl.birth <= th)])
    return LayerHierarchy(regime, sets, g_config, False, ths)


def layer_diameter(graph: EvolvingGraph, layer, cap: int) -> int:
    """Largest hop distance inside ``layer`` (ids), or cap + 1 when it exceeds cap."""
    layer = np.asarray(layer, dtype=np.int64)
    if layer.size == 0:
        raise ArgumentError("layer is empty")
    rows = graph.cloud.local_index(layer)
    worst = 0
    for r in rows:
        dist = bfs(graph, r, cap)[rows]
        if np.any(dist < 0):
            return cap + 1
        worst = max(worst, int(dist.max()))
    return worst


def two_connection_q(zx: int, zy: int, dist: float, params: ModelParams,
                     lam: Optional[float] = None, phi: Optional[ProfileFunction] = None,
                     f=None):
    """(Q, 1 - exp(-lambda Q)) for preset in-degrees at time 1/2 and separation ``dist``."""
    p0, f0 = default_functions(params)
    phi, f = phi or p0, f or f0
    lam = params.intensity if lam is None else lam
    d = params.dimension

    def k(za, zb):
        fa = float(f(za))
        return fa * float(phi((fa ** (1.0 / d) + dist) ** d / float(f(zb))))

    q = float(phi(1.0)) * ball_volume(d) / 2.0 * max(k(zx, zy), k(zy, zx))
    return q, 1.0 - math.exp(-lam * q)


def two_connection_bound(family, x: int, y: int, lam: Optional[float] = None):
    graph = family.full if isinstance(family, CoupledFamily) else family
    rx, ry = graph.row(x), graph.row(y)
    if graph.birth[rx] >= 0.5 or graph.birth[ry] >= 0.5:
        raise ArgumentError("both vertices must be born before 1/2")
    z = graph.indegree(0.5)
    cl = graph.cloud
    dist = cl.box.distance(cl.positions[rx], cl.positions[ry])
    return two_connection_q(int(z[rx]), int(z[ry]), dist, cl.params, lam)


def is_two_connected(graph: EvolvingGraph, x: int, y: int) -> bool:
    """Some vertex born in [1/2, 1] has edges to both x and y."""
    a = graph.in_neighbours(graph.row(x))
    b = graph.in_neighbours(graph.row(y))
    common = np.intersect1d(a, b)
    return bool(np.any(graph.birth[common] >= 0.5))


def simulate_two_connection(params: ModelParams, zx: int, zy: int, dist: float,
                            resamples: int, stream_label: str = "two-connection") -> float:
    """Frequency of a 2-connection when only late vertices (births in [1/2,1]) are resampled.

    x sits at the origin and y at distance ``dist`` along the first axis, with
    in-degrees zx, zy at time 1/2; late vertices arrive as a Poisson process
    and follow the usual attachment dynamics towards x and y.
    """
    rng = stream_rng(params.seed, stream_label)
    phi, f = default_functions(params)
    d, side = params.dimension, params.side
    counts = rng.poisson(params.intensity * params.volume * 0.5, size=resamples)
    top = int(counts.max()) if resamples else 0
    times = np.sort(0.5 + 0.5 * rng.random((resamples, top)), axis=1)
    # pad past the per-resample count with t = inf so those arrivals never connect
    times[np.arange(top)[None, :] >= counts[:, None]] = np.inf
    pos = rng.uniform(-side / 2, side / 2, size=(resamples, top, d))
    y_at = np.zeros(d)
    y_at[0] = dist
    rx = np.sqrt(np.sum(np.minimum(np.abs(pos), side - np.abs(pos)) ** 2, axis=2))
    dy = np.abs(pos - y_at)
    ry = np.sqrt(np.sum(np.minimum(dy, side - dy) ** 2, axis=2))
    ux = rng.random((resamples, top))
    uy = rng.random((resamples, top))
    Zx = np.full(resamples, zx, dtype=np.int64)
    Zy = np.full(resamples, zy, dtype=np.int64)
    hit = np.zeros(resamples, dtype=bool)
    for j in range(top):
        t = times[:, j]
        live = np.isfinite(t)
        tt = np.where(live, t, 1.0)
        cx = live & (ux[:, j] <= phi(tt * rx[:, j] ** d / f(Zx)))
        cy = live & (uy[:, j] <= phi(tt * ry[:, j] ** d / f(Zy)))
        hit |= cx & cy
        Zx += cx
        Zy += cy
    return float(hit.mean()) if resamples else 0.0


def reachable_old_vertex(graph: EvolvingGraph, start: int, D: int, s: float) -> Optional[int]:
    """Oldest vertex born before s within D hops of ``start`` (id), or None."""
    row = graph.row(start)
    if D < 0:
        return None
    dist = bfs(graph, row, D)
    reached = np.flatnonzero((dist >= 0) & (graph.birth < s))
    if reached.size == 0:
        return None
    return int(graph.cloud.ids[reached[np.argmin(graph.birth[reached])]])


def high_degree_density_probe(family, x: int, regime: RegimeReport,
                              g_config: GoodnessConfig = GoodnessConfig()) -> bool:
    """Is there a locally good red vertex within s^(-beta/d) of x born by s^alpha?"""
    graph = family.full if isinstance(family, CoupledFamily) else family
    cl = graph.cloud
    row = graph.row(x)
    s = float(cl.birth[row])
    lo = cl.volume ** (-1.0 / regime.beta)
    if not lo < s <= 0.25:
        raise ArgumentError(f"birth {s} outside ({lo:.4g}, 1/4]")
    radius = s ** (-regime.beta / cl.dimension)
    dx = np.abs(cl.positions - cl.positions[row])
    dx = np.minimum(dx, cl.box.side - dx)
    near = np.sqrt(np.sum(dx * dx, axis=1)) <= radius
    cand = near & (cl.colour == RED) & (cl.birth <= s ** regime.alpha)
    if not np.any(cand):
        return False
    return bool(np.any(good_mask(graph, g_config, local=True) & cand))


@dataclass
class HillEstimate:
    index: float
    se: float
    k: int
    threshold: float

    def ci(self, level: float = 0.95):
        from scipy.stats import norm
        z = norm.ppf(0.5 + level / 2)
        return self.index - z * self.se, self.index + z * self.se


def hill_estimate(values, top_fraction: float = 0.01) -> HillEstimate:
    """Hill tail-index estimate from the top ``top_fraction`` order statistics."""
    v = np.sort(np.asarray(values, dtype=float))[::-1]
    v = v[v > 0]
    k = int(math.floor(top_fraction * np.asarray(values).size))
    if k < 2 or k >= v.size:
        raise SamplingError("not enough positive observations for the Hill estimator")
    logs = np.log(v[:k]) - math.log(v[k])
    gamma_hat = float(logs.mean())
    index = 1.0 / gamma_hat
    return HillEstimate(index, index / math.sqrt(k), k, float(v[k]))
