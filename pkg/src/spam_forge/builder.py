"""Exact and accelerated S-PAM construction, coupled variants, snapshots and graph files."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from . import kernels
from ._fallback import BORDERLINE
from .errors import ArgumentError, ContractError
from .model import (AttachmentRule, ModelParams, ProfileFunction, TorusBox, default_functions,
                    wrapped_distances)
from .points import (BLACK, COLOUR_CODES, COLOUR_NAMES, RED, UNCOLOURED, MarkOracle,
                     PointCloud, marks_from_keys, stream_rng, younger_keys)


@dataclass
class BuildLog:
    evaluations: int = 0
    scanned: int = 0
    wall_time: float = 0.0
    backend: str = ""

    @property
    def acceptance_rate(self) -> float:
        """Fraction of scanned candidates that reached the exact probability test."""
        return self.evaluations / self.scanned if self.scanned else 0.0


@dataclass(eq=False)
class EvolvingGraph:
    """Vertices of ``cloud`` plus young-to-old edges in local row indices.

    Edges are sorted by younger endpoint, then older endpoint; since rows are
    birth-ordered, the edge time of row ``k`` is ``cloud.birth[young[k]]``.
    """

    cloud: PointCloud
    young: np.ndarray
    old: np.ndarray
    descriptor: dict = field(default_factory=dict)
    log: Optional[BuildLog] = None

    def __post_init__(self):
        self.young = np.asarray(self.young, dtype=np.int64)
        self.old = np.asarray(self.old, dtype=np.int64)
        self._cache = {}

    @property
    def count(self) -> int:
        return self.cloud.count

    @property
    def edge_count(self) -> int:
        return int(self.young.shape[0])

    @property
    def birth(self) -> np.ndarray:
        return self.cloud.birth

    @property
    def ids(self) -> np.ndarray:
        return self.cloud.ids

    @property
    def volume(self) -> float:
        return self.cloud.volume

    def edge_times(self) -> np.ndarray:
        return self.cloud.birth[self.young]

    def edges_global(self) -> np.ndarray:
        """(E, 2) array of (younger id, older id)."""
        return np.stack([self.cloud.ids[self.young], self.cloud.ids[self.old]], axis=1)

    def edge_keys(self) -> np.ndarray:
        """Sorted integer keys younger*2^32 + older for set comparisons."""
        e = self.edges_global()
        return np.sort(e[:, 0] * (1 << 32) + e[:, 1])

    def indegree(self, t: Optional[float] = None) -> np.ndarray:
        if t is None or t >= 1.0:
            key = "indeg"
            if key not in self._cache:
                self._cache[key] = np.bincount(self.old, minlength=self.count).astype(np.int64)
            return self._cache[key]
        k = int(np.searchsorted(self.birth[self.young], t, side="right"))
        return np.bincount(self.old[:k], minlength=self.count).astype(np.int64)

    def outdegree(self) -> np.ndarray:
        return np.bincount(self.young, minlength=self.count).astype(np.int64)

    def degree(self) -> np.ndarray:
        return self.indegree() + self.outdegree()

    def adjacency(self):
        """Undirected CSR skeleton as (indptr, indices); neighbours sorted by row."""
        if "csr" not in self._cache:
            m = self.count
            src = np.concatenate([self.young, self.old])
            dst = np.concatenate([self.old, self.young])
            order = np.lexsort((dst, src))
            indptr = np.zeros(m + 1, dtype=np.int64)
            np.cumsum(np.bincount(src, minlength=m), out=indptr[1:])
            self._cache["csr"] = (indptr, np.ascontiguousarray(dst[order]))
        return self._cache["csr"]

    def in_csr(self):
        """CSR of in-neighbours (younger rows) per vertex, ascending by birth."""
        if "in_csr" not in self._cache:
            m = self.count
            order = np.lexsort((self.young, self.old))
            indptr = np.zeros(m + 1, dtype=np.int64)
            np.cumsum(np.bincount(self.old, minlength=m), out=indptr[1:])
            self._cache["in_csr"] = (indptr, np.ascontiguousarray(self.young[order]))
        return self._cache["in_csr"]

    def neighbours(self, row: int) -> np.ndarray:
        indptr, indices = self.adjacency()
        return indices[indptr[row]:indptr[row + 1]]

    def in_neighbours(self, row: int) -> np.ndarray:
        indptr, indices = self.in_csr()
        return indices[indptr[row]:indptr[row + 1]]

    def out_neighbours(self, row: int) -> np.ndarray:
        lo, hi = np.searchsorted(self.young, [row, row + 1])
        return self.old[lo:hi]

    def row(self, gid: int) -> int:
        return int(self.cloud.local_index([gid])[0])

    def induced(self, keep) -> "EvolvingGraph":
        """Subgraph on the rows where ``keep`` is true, relabelled."""
        keep = np.asarray(keep, dtype=bool)
        newrow = np.cumsum(keep) - 1
        e = keep[self.young] & keep[self.old]
        return EvolvingGraph(self.cloud.subset(keep), newrow[self.young[e]], newrow[self.old[e]],
                             dict(self.descriptor))


def snapshot(graph: EvolvingGraph, t: float) -> EvolvingGraph:
    """G(t): vertices born by t and edges created by t (closed at t)."""
    if not 0.0 <= t <= 1.0:
        raise ArgumentError(f"snapshot time must lie in [0,1], got {t}")
    k = int(np.searchsorted(graph.birth, t, side="right"))
    e = int(np.searchsorted(graph.young, k))
    desc = dict(graph.descriptor, time=t)
    return EvolvingGraph(graph.cloud.prefix(k), graph.young[:e], graph.old[:e], desc)


def _prepare(cloud, phi, f, vertex_filter):
    if cloud.params is None and (phi is None or f is None):
        raise ContractError("cloud carries no model parameters; pass phi and f")
    if phi is None or f is None:
        p0, f0 = default_functions(cloud.params)
        phi = phi or p0
        f = f or f0
    if not cloud.is_birth_ordered():
        raise ContractError("cloud must be sorted by birth time with increasing ids")
    name = "all"
    if vertex_filter is not None:
        if isinstance(vertex_filter, str):
            name = vertex_filter
            vertex_filter = colour_filter(vertex_filter)
        else:
            name = getattr(vertex_filter, "__name__", "custom")
        cloud = cloud.subset(np.asarray(vertex_filter(cloud), dtype=bool))
    return cloud, phi, f, name


def colour_filter(name: str) -> Callable[[PointCloud], np.ndarray]:
    code = COLOUR_CODES.get(name)
    if code is None or code == UNCOLOURED:
        raise ArgumentError(f"unknown colour filter {name!r}")

    def keep(cloud: PointCloud):
        if np.any(cloud.colour == UNCOLOURED):
            raise ContractError("colour filter applied to an uncoloured cloud")
        return cloud.colour == code

    keep.__name__ = name
    return keep


def _descriptor(cloud, model, cutoff, filt, phi, f):
    fp = cloud.params.fingerprint() if cloud.params is not None else ""
    return {"model": model, "range_cutoff": cutoff, "vertex_filter": filt,
            "params": fp, "profile": phi.kind, "attachment": f.kind, "time": 1.0}


def build_exact(cloud: PointCloud, oracle: MarkOracle, phi: Optional[ProfileFunction] = None,
                f: Optional[AttachmentRule] = None, range_cutoff: float = math.inf,
                vertex_filter=None) -> EvolvingGraph:
    """All-pairs reference construction in birth order."""
    t0 = time.perf_counter()
    sub, phi, f, fname = _prepare(cloud, phi, f, vertex_filter)
    m, d, side = sub.count, sub.dimension, sub.box.side
    keys = younger_keys(oracle.seed_key, sub.ids)
    z = np.zeros(m, dtype=np.int64)
    power = phi.kind == "power" and f.kind == "affine"
    ys, xs = [], []
    evaluations = 0
    for j in range(1, m):
        t = sub.birth[j]
        dist = wrapped_distances(sub.positions[:j], sub.positions[j], side)
        cand = np.flatnonzero(dist <= range_cutoff)
        evaluations += j
        if cand.size == 0:
            continue
        r = dist[cand]
        mk = marks_from_keys(np.full(cand.size, keys[j]), sub.ids[cand])
        rd = r.copy()
        for _ in range(1, d):
            rd = rd * r
        fz = f(z[cand])
        with np.errstate(divide="ignore"):
            p = np.asarray(phi((t * rd) / fz), dtype=float)
        ok = mk <= p
        if power:
            for i in np.flatnonzero(np.abs(mk - p) <= BORDERLINE * p):
                x = (t * float(rd[i])) / float(fz[i])
                pi = phi.kappa * math.pow(x, -phi.delta) if x > 0.0 else math.inf
                ok[i] = mk[i] <= min(pi, 1.0)
        acc = cand[ok]
        if acc.size:
            z[acc] += 1
            ys.append(np.full(acc.size, j, dtype=np.int64))
            xs.append(acc)
    young = np.concatenate(ys) if ys else np.zeros(0, dtype=np.int64)
    old = np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)
    log = BuildLog(evaluations, evaluations, time.perf_counter() - t0, "exact")
    return EvolvingGraph(sub, young, old, _descriptor(sub, "spam", range_cutoff, fname, phi, f), log)


def build_accelerated(cloud: PointCloud, oracle: MarkOracle,
                      phi: Optional[ProfileFunction] = None, f: Optional[AttachmentRule] = None,
                      range_cutoff: float = math.inf, vertex_filter=None,
                      backend: Optional[str] = None) -> EvolvingGraph:
    """Cell-list construction with a far-field envelope; same edge set as ``build_exact``.

    Only the power profile with affine attachment has a kernel; other
    function kinds go through the exact path.
    """
    if not (range_cutoff >= 0):
        raise ArgumentError(f"range cutoff must be >= 0, got {range_cutoff}")
    sub, phi2, f2, fname = _prepare(cloud, phi, f, vertex_filter)
    if not (phi2.kind == "power" and f2.kind == "affine"):
        return build_exact(cloud, oracle, phi2, f2, range_cutoff, vertex_filter)
    t0 = time.perf_counter()
    impl = kernels.backend(backend)
    young, old, scanned, passes = impl.build_power_affine(
        np.ascontiguousarray(sub.positions, dtype=np.float64),
        np.ascontiguousarray(sub.birth, dtype=np.float64),
        np.ascontiguousarray(sub.ids, dtype=np.uint64),
        float(sub.box.side), f2.gamma, f2.gamma_prime, phi2.delta, phi2.kappa,
        float(range_cutoff), np.uint64(oracle.seed_key))
    name = "compiled" if impl is not kernels._fallback else "python"
    log = BuildLog(int(passes), int(scanned), time.perf_counter() - t0, name)
    return EvolvingGraph(sub, young, old,
                         _descriptor(sub, "spam", range_cutoff, fname, phi2, f2), log)


@dataclass(eq=False)
class CoupledFamily:
    full: EvolvingGraph
    black: Optional[EvolvingGraph] = None
    red: Optional[EvolvingGraph] = None
    truncated: Dict[float, EvolvingGraph] = field(default_factory=dict)
    red_probability: Optional[float] = None

    @property
    def cloud(self) -> PointCloud:
        return self.full.cloud


def build_coupled_family(cloud: PointCloud, oracle: MarkOracle,
                         phi: Optional[ProfileFunction] = None,
                         f: Optional[AttachmentRule] = None, r: Optional[float] = None,
                         range_cutoffs: Sequence[float] = (), builder=None) -> CoupledFamily:
    """G, the black and red graphs and truncated graphs, all on the same marks.

    ``r`` records the red probability used to colour ``cloud``; pass ``None``
    to skip the colour graphs.
    """
    build = builder or build_accelerated
    if r is not None:
        if not 0.0 <= r <= 1.0:
            raise ArgumentError(f"red probability must lie in [0,1], got {r}")
        if cloud.count and np.any(cloud.colour == UNCOLOURED):
            raise ContractError("colour graphs requested for an uncoloured cloud")
    fam = CoupledFamily(build(cloud, oracle, phi, f), red_probability=r)
    if r is not None:
        fam.black = build(cloud, oracle, phi, f, vertex_filter="black")
        fam.red = build(cloud, oracle, phi, f, vertex_filter="red")
    for c in range_cutoffs:
        fam.truncated[float(c)] = build(cloud, oracle, phi, f, range_cutoff=float(c))
    return fam


def site_percolate_post(graph: EvolvingGraph, b: float, stream_label: str = "site",
                        retain=None) -> EvolvingGraph:
    """Keep each vertex with probability b (or the rows flagged in ``retain``)."""
    if not 0.0 <= b <= 1.0:
        raise ArgumentError(f"retention probability must lie in [0,1], got {b}")
    if retain is None:
        seed = graph.cloud.params.seed if graph.cloud.params is not None else 0
        retain = stream_rng(seed, stream_label).random(graph.count) < b
    out = graph.induced(retain)
    out.descriptor["site_percolation"] = b
    return out


def build_rcm(cloud: PointCloud, oracle: MarkOracle,
              connection_fn: Callable[[np.ndarray], np.ndarray],
              vertex_filter=None) -> EvolvingGraph:
    """Static random connection model on the same marks (younger -> older storage)."""
    t0 = time.perf_counter()
    if vertex_filter is not None:
        cloud = cloud.subset(np.asarray(
            (colour_filter(vertex_filter) if isinstance(vertex_filter, str) else vertex_filter)(cloud),
            dtype=bool))
    m, side = cloud.count, cloud.box.side
    keys = younger_keys(oracle.seed_key, cloud.ids)
    ys, xs = [], []
    for j in range(1, m):
        dist = wrapped_distances(cloud.positions[:j], cloud.positions[j], side)
        mk = marks_from_keys(np.full(j, keys[j]), cloud.ids[:j])
        acc = np.flatnonzero(mk <= np.asarray(connection_fn(dist), dtype=float))
        if acc.size:
            ys.append(np.full(acc.size, j, dtype=np.int64))
            xs.append(acc)
    young = np.concatenate(ys) if ys else np.zeros(0, dtype=np.int64)
    old = np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)
    desc = {"model": "rcm", "range_cutoff": math.inf, "vertex_filter": "all", "time": 1.0,
            "params": cloud.params.fingerprint() if cloud.params is not None else ""}
    log = BuildLog(m * (m - 1) // 2, m * (m - 1) // 2, time.perf_counter() - t0, "exact")
    return EvolvingGraph(cloud, young, old, desc, log)


def rcm_profile(phi: ProfileFunction, f: AttachmentRule, d: int, sigma: float, ell: int):
    """phi_*(rho) = phi(sigma rho^d / f(ell)), the comparison profile for times >= sigma."""
    scale = sigma / float(f(ell))
    return lambda r: phi(scale * np.asarray(r, dtype=float) ** d)


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_graph(graph_or_cloud, path) -> None:
    """Text format: header, one V line per vertex, one E line per edge (global ids)."""
    if isinstance(graph_or_cloud, PointCloud):
        cloud, edges = graph_or_cloud, np.zeros((0, 2), dtype=np.int64)
    else:
        cloud, edges = graph_or_cloud.cloud, graph_or_cloud.edges_global()
    d = cloud.dimension
    vol = cloud.params.volume if cloud.params is not None else cloud.volume
    lines = [f"spamgraph v1 d={d} n={_fmt(vol)} count={cloud.count}"]
    for i in range(cloud.count):
        coords = " ".join(_fmt(v) for v in cloud.positions[i])
        lines.append(f"V {cloud.ids[i]} {_fmt(cloud.birth[i])} {coords} "
                     f"{COLOUR_NAMES[int(cloud.colour[i])]}")
    lines.extend(f"E {y} {x}" for y, x in edges)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_graph(path, params: Optional[ModelParams] = None) -> EvolvingGraph:
    """Inverse of ``write_graph``; edge-free files give an edgeless graph."""
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["spamgraph", "v1"]:
            raise ContractError(f"{path}: not a spamgraph v1 file")
        kv = dict(tok.split("=", 1) for tok in header[2:])
        d, n, count = int(kv["d"]), float(kv["n"]), int(kv["count"])
        ids, pos, birth, colour, edges = [], [], [], [], []
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "V":
                ids.append(int(tok[1]))
                birth.append(float(tok[2]))
                pos.append([float(v) for v in tok[3:3 + d]])
                colour.append(COLOUR_CODES[tok[3 + d]])
            elif tok[0] == "E":
                edges.append((int(tok[1]), int(tok[2])))
            else:
                raise ContractError(f"{path}: unknown record {tok[0]!r}")
    if len(ids) != count:
        raise ContractError(f"{path}: header count {count} but {len(ids)} vertices")
    if params is not None and (params.dimension != d or not math.isclose(params.volume, n, rel_tol=1e-12)):
        raise ContractError("parameters disagree with the file header")
    cloud = PointCloud(np.array(ids, dtype=np.int64),
                       np.array(pos, dtype=np.float64).reshape(-1, d),
                       np.array(birth, dtype=np.float64), np.array(colour, dtype=np.int8),
                       TorusBox(d, n ** (1.0 / d)), params)
    e = np.array(edges, dtype=np.int64).reshape(-1, 2)
    young = cloud.local_index(e[:, 0]) if e.size else np.zeros(0, dtype=np.int64)
    old = cloud.local_index(e[:, 1]) if e.size else np.zeros(0, dtype=np.int64)
    order = np.lexsort((old, young))
    return EvolvingGraph(cloud, young[order], old[order], {"model": "file", "time": 1.0})
