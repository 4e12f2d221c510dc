"""Experiment configuration, validation and seeded execution with CSV/JSON outputs."""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__, kernels
from .analysis import (components, hill_estimate, layer_diameter, build_layers,
                       simulate_two_connection, two_connection_q, typical_distance_sample)
from .builder import build_accelerated, build_coupled_family, site_percolate_post, write_graph
from .errors import SpamForgeError, ValidationError
from .local import (RootedGraph, RootedNeighbourhood, bad_vertex_count, canonical_form,
                    degree_evolution, long_edge_count, skorohod_modulus, truncated_degree_path)
from .model import ModelParams, regime_report
from .points import (MarkOracle, colour_points, dense_cube_census, early_vertex_count,
                     sample_points)

KINDS = ("build", "degrees", "distances", "percolation", "layers", "truncation", "census",
         "modulus", "two-connection")

CSV_HEADER = ("experiment_id", "seed", "fingerprint", "metric", "value", "aux")


def _float(v):
    return float(v)


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


def _floats(v):
    return [float(x) for x in str(v).split(",") if x.strip()]


def _ints(v):
    return [_int(x) for x in str(v).split(",") if x.strip()]


# key -> (parser, default)
SCHEMA = {
    "model.gamma": (_float, None),
    "model.gamma_prime": (_float, 1.0),
    "model.delta": (_float, None),
    "model.d": (_int, 1),
    "model.n": (_float, None),
    "model.lambda": (_float, 1.0),
    "model.seed": (_int, 0),
    "experiment.kind": (str, None),
    "experiment.id": (str, ""),
    "experiment.seeds": (_int, 1),
    "experiment.r_colour": (_float, 0.5),
    "experiment.b": (_float, 0.7),
    "experiment.cutoffs": (_floats, [1.0, 2.0, 4.0, 8.0]),
    "experiment.cutoff": (_float, math.inf),
    "experiment.h": (_int, 1),
    "experiment.k": (_int, 3),
    "experiment.eta": (_float, 0.1),
    "experiment.sigma": (_float, 0.05),
    "experiment.m": (_int, 5),
    "experiment.pairs": (_int, 200),
    "experiment.eps": (_float, 1.0),
    "experiment.top_fraction": (_float, 0.01),
    "experiment.goodness_c": (_float, 2.0),
    "experiment.z_values": (_ints, [2, 10, 30]),
    "experiment.distances": (_floats, [1.0, 5.0, 20.0]),
    "experiment.resamples": (_int, 500),
    "experiment.write_graph": (_int, 1),
    "output.dir": (str, "results"),
    "output.formats": (str, "csv,json"),
}


def parse_config_text(text: str) -> Dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError([f"line {lineno}: expected key=value, got {line!r}"])
        k, v = line.split("=", 1)
        raw[k.strip()] = v.strip()
    return raw


@dataclass
class ExperimentConfig:
    values: Dict[str, object]
    grid: Dict[str, List[str]] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def kind(self) -> str:
        return str(self.values["experiment.kind"])

    def params(self, seed: Optional[int] = None) -> ModelParams:
        v = self.values
        return ModelParams(v["model.gamma"], v["model.gamma_prime"], v["model.delta"],
                           v["model.d"], v["model.n"], v["model.lambda"],
                           v["model.seed"] if seed is None else seed)

    def seeds(self) -> List[int]:
        base = self.values["model.seed"]
        return [base + i for i in range(self.values["experiment.seeds"])]

    def fingerprint(self) -> str:
        items = sorted((k, repr(v)) for k, v in self.values.items()
                       if k.startswith(("model.", "experiment.")) and k != "model.seed")
        return hashlib.sha256(repr(items).encode()).hexdigest()[:16]

    def echo(self) -> Dict[str, object]:
        out = {}
        for k, v in sorted(self.values.items()):
            out[k] = v if not isinstance(v, float) or math.isfinite(v) else str(v)
        return out


def validate(raw: Dict[str, str]) -> ExperimentConfig:
    """Parse and check every field; raises ValidationError listing all problems."""
    problems, values, grid = [], {}, {}
    for key, text in raw.items():
        if key.startswith("grid."):
            target = key[5:]
            if target not in SCHEMA:
                problems.append(f"{key}: unknown grid field {target!r}")
            else:
                grid[target] = [x.strip() for x in text.split(",") if x.strip()]
            continue
        if key not in SCHEMA:
            problems.append(f"{key}: unknown field")
    for key, (parse, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parse(raw[key])
            except (TypeError, ValueError) as exc:
                problems.append(f"{key}: {exc}")
        elif default is None:
            problems.append(f"{key}: required")
        else:
            values[key] = default
    if len(values) == len(SCHEMA):
        problems.extend(_check(values))
    base = set(problems)
    for key, options in grid.items():
        for opt in options:
            trial = dict(raw, **{key: opt})
            trial = {k: v for k, v in trial.items() if not k.startswith("grid.")}
            try:
                validate(trial)
            except ValidationError as exc:
                problems.extend(f"grid {key}={opt}: {p}" for p in exc.problems if p not in base)
    if problems:
        raise ValidationError(problems)
    return ExperimentConfig(values, grid)


def _check(v) -> List[str]:
    problems = []
    try:
        ModelParams(v["model.gamma"], v["model.gamma_prime"], v["model.delta"], v["model.d"],
                    v["model.n"], v["model.lambda"], v["model.seed"])
    except SpamForgeError as exc:
        problems.extend(f"model: {p.strip()}" for p in str(exc).split(";"))
    if v["experiment.kind"] not in KINDS:
        problems.append(f"experiment.kind: {v['experiment.kind']!r} not in {KINDS}")
    checks = [
        ("experiment.seeds", v["experiment.seeds"] >= 0, "must be >= 0"),
        ("experiment.r_colour", 0.0 <= v["experiment.r_colour"] <= 1.0, "must lie in [0,1]"),
        ("experiment.b", 0.0 <= v["experiment.b"] <= 1.0, "must lie in [0,1]"),
        ("experiment.cutoffs", all(c >= 0 for c in v["experiment.cutoffs"]), "must be >= 0"),
        ("experiment.cutoff", v["experiment.cutoff"] >= 0, "must be >= 0"),
        ("experiment.h", v["experiment.h"] >= 0, "must be >= 0"),
        ("experiment.k", v["experiment.k"] >= 0, "must be >= 0"),
        ("experiment.eta", 0.0 < v["experiment.eta"] < 1.0, "must lie in (0,1)"),
        ("experiment.sigma", 0.0 <= v["experiment.sigma"] <= 1.0, "must lie in [0,1]"),
        ("experiment.m", v["experiment.m"] >= 1, "must be >= 1"),
        ("experiment.pairs", v["experiment.pairs"] >= 1, "must be >= 1"),
        ("experiment.eps", v["experiment.eps"] > 0, "must be > 0"),
        ("experiment.top_fraction", 0.0 < v["experiment.top_fraction"] < 1.0, "must lie in (0,1)"),
        ("experiment.z_values", all(z >= 0 for z in v["experiment.z_values"]), "must be >= 0"),
        ("experiment.distances", all(x >= 0 for x in v["experiment.distances"]), "must be >= 0"),
        ("experiment.resamples", v["experiment.resamples"] >= 1, "must be >= 1"),
    ]
    problems.extend(f"{k}: {msg}" for k, ok, msg in checks if not ok)
    fmts = set(str(v["output.formats"]).split(","))
    if not fmts <= {"csv", "json"}:
        problems.append("output.formats: only csv and json are supported")
    if v.get("experiment.kind") == "layers" or v.get("experiment.kind") == "distances":
        g, d = v["model.gamma"], v["model.delta"]
        if not g > d / (1 + d):
            problems.append("model: this experiment needs the robust regime gamma > delta/(1+delta)")
    return problems


def load_config(path: Optional[str], overrides: Sequence[str] = (),
                grid: Sequence[str] = ()) -> ExperimentConfig:
    raw = {}
    if path is not None:
        try:
            raw = parse_config_text(Path(path).read_text())
        except OSError as exc:
            raise ValidationError([f"config: {exc}"])
    for item in overrides:
        if "=" not in item:
            raise ValidationError([f"--set {item!r}: expected key=value"])
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    for item in grid:
        if "=" not in item:
            raise ValidationError([f"--grid {item!r}: expected key=v1,v2"])
        k, v = item.split("=", 1)
        raw["grid." + k.strip()] = v.strip()
    return validate(raw)


def _g(x: float) -> str:
    return "%.17g" % x


def _a(x: float) -> str:
    # shortest round-trip form for labels
    return repr(float(x))


Row = Tuple[str, int, str, str, str, str]


def _row(cfg: ExperimentConfig, seed, metric, value, aux="") -> Row:
    exp = cfg.values["experiment.id"] or cfg.kind
    val = _g(value) if isinstance(value, (float, np.floating)) else str(value)
    return (exp, seed, cfg.fingerprint(), metric, val, aux)


def _one_edge_root() -> RootedNeighbourhood:
    return RootedNeighbourhood(canonical_form(RootedGraph(2, ((1, 0),), 0)), 2, 1)


def run_seed(cfg: ExperimentConfig, seed: int, outdir: Optional[str]) -> Tuple[List[Row], dict]:
    """All rows for one seed of one grid cell, plus side outputs (measures, files)."""
    kind = cfg.kind
    v = cfg.values
    P = cfg.params(seed)
    oracle = MarkOracle(seed)
    rows: List[Row] = []
    extra: dict = {}

    def add(metric, value, aux=""):
        rows.append(_row(cfg, seed, metric, value, aux))

    if kind == "census":
        cloud = sample_points(P)
        add("vertex_count", cloud.count)
        add("early_vertex_count", early_vertex_count(cloud, v["experiment.sigma"]),
            f"sigma={_a(v['experiment.sigma'])}")
        counts, dense = dense_cube_census(cloud, v["experiment.m"])
        add("dense_cubes", int(dense.size), f"m={v['experiment.m']}")
        add("dense_mass", int(counts.ravel()[dense].sum()), f"m={v['experiment.m']}")
        return rows, extra
    if kind == "two-connection":
        for zx, zy in itertools.product(v["experiment.z_values"], repeat=2):
            for dist in v["experiment.distances"]:
                q, bound = two_connection_q(zx, zy, dist, P)
                freq = simulate_two_connection(P, zx, zy, dist, v["experiment.resamples"],
                                               f"two-connection/{zx}/{zy}/{dist!r}")
                aux = f"zx={zx};zy={zy};dist={_a(dist)}"
                add("bound", bound, aux)
                add("frequency", freq, aux)
        return rows, extra

    cloud = sample_points(P)
    if kind == "build":
        G = build_accelerated(cloud, oracle, range_cutoff=v["experiment.cutoff"])
        add("vertex_count", G.count)
        add("edge_count", G.edge_count)
        add("evaluations", G.log.evaluations)
        add("scanned", G.log.scanned)
        add("acceptance_rate", G.log.acceptance_rate)
        extra["wall_time"] = G.log.wall_time
        if outdir is not None and v["experiment.write_graph"]:
            name = f"graph_{cfg.fingerprint()}_seed{seed}.txt"
            write_graph(G, os.path.join(outdir, name))
            add("graph_file", name)
        return rows, extra
    if kind == "degrees":
        G = build_accelerated(cloud, oracle)
        z = G.indegree()
        try:
            est = hill_estimate(z, v["experiment.top_fraction"])
            add("hill_index", est.index, f"k={est.k}")
            add("hill_se", est.se, f"k={est.k}")
        except SpamForgeError:
            add("hill_index", float("nan"), "insufficient tail")
        add("max_indegree", int(z.max()) if z.size else 0)
        extra["indegrees"] = z
        return rows, extra
    if kind == "distances":
        G = build_accelerated(cloud, oracle)
        comp = components(G)
        add("giant_fraction", comp.oldest_size() / max(G.count, 1))
        ds = typical_distance_sample(G, v["experiment.pairs"], "pairs", v["experiment.eps"])
        add("median_distance", ds.median)
        add("mean_distance", ds.mean)
        add("budget", ds.budget, f"eps={_a(v['experiment.eps'])}")
        for hop, c in sorted(ds.histogram.items()):
            add("distance_count", c, f"hops={hop}")
        return rows, extra
    if kind == "percolation":
        b = v["experiment.b"]
        cc = colour_points(cloud, 1.0 - b)
        fam = build_coupled_family(cc, oracle, r=1.0 - b)
        full = components(fam.full)
        blk = components(fam.black)
        add("giant_fraction", full.oldest_size() / max(fam.full.count, 1))
        add("black_count", fam.black.count)
        add("black_largest_fraction", blk.largest_size() / max(fam.black.count, 1))
        add("black_oldest_fraction", blk.oldest_size() / max(fam.black.count, 1))
        perc = site_percolate_post(fam.full, b, retain=cc.colour == 1)
        add("site_percolated_largest_fraction",
            components(perc).largest_size() / max(perc.count, 1))
        return rows, extra
    if kind == "layers":
        from .analysis import GoodnessConfig
        reg = regime_report(P)
        add("rho", reg.rho)
        add("alpha", reg.alpha)
        add("beta", reg.beta)
        add("nu", reg.nu)
        add("K", reg.K)
        add("K_empty", int(reg.K_empty))
        if reg.K >= 1:
            cc = colour_points(cloud, v["experiment.r_colour"])
            G = build_accelerated(cc, oracle)
            lay = build_layers(G, reg, GoodnessConfig(v["experiment.goodness_c"]))
            for k, s in enumerate(lay.layer_sets, 1):
                add("layer_size", int(s.size), f"k={k}")
            cap = 4 * reg.K + 1
            if lay.final().size:
                add("final_layer_diameter", layer_diameter(G, lay.final(), cap), f"cap={cap}")
        return rows, extra
    if kind == "truncation":
        G = build_accelerated(cloud, oracle)
        g = _one_edge_root()
        for c in v["experiment.cutoffs"]:
            Gr = build_accelerated(cloud, oracle, range_cutoff=c)
            aux = f"r={_a(c)}"
            add("truncated_edges", Gr.edge_count, aux)
            add("bad_vertex_count", bad_vertex_count(G, Gr, 1.0, v["experiment.h"], g), aux)
            add("long_edge_count", long_edge_count(G, c, v["experiment.m"]), aux + f";m={v['experiment.m']}")
        return rows, extra
    if kind == "modulus":
        G = build_accelerated(cloud, oracle)
        path = truncated_degree_path(G, v["experiment.k"])
        add("truncated_path_modulus", skorohod_modulus(path, v["experiment.eta"]),
            f"k={v['experiment.k']};eta={_a(v['experiment.eta'])}")
        if G.count:
            oldest = degree_evolution(G, int(G.ids[0]))
            add("oldest_degree_modulus", skorohod_modulus(oldest, v["experiment.eta"]),
                f"eta={_a(v['experiment.eta'])}")
        return rows, extra
    raise ValidationError([f"experiment.kind: {kind!r} not handled"])


def _task(args):
    cfg, seed, outdir = args
    t0 = time.perf_counter()
    try:
        rows, extra = run_seed(cfg, seed, outdir)
        return seed, rows, extra, time.perf_counter() - t0, None
    except Exception as exc:  # surfaced as a partial result in the manifest
        return seed, [], {}, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}"


def expand_grid(cfg: ExperimentConfig) -> List[ExperimentConfig]:
    """One config per cartesian grid cell (just ``cfg`` when there is no grid)."""
    if not cfg.grid:
        return [cfg]
    keys = sorted(cfg.grid)
    out = []
    for combo in itertools.product(*(cfg.grid[k] for k in keys)):
        vals = dict(cfg.values)
        for k, raw in zip(keys, combo):
            vals[k] = SCHEMA[k][0](raw)
        out.append(ExperimentConfig(vals))
    return out


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SPAM_FORGE_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass
class RunResult:
    rows: List[Row]
    manifest: dict
    files: List[str]

    @property
    def failed(self) -> bool:
        return bool(self.manifest.get("partial"))


def run(cfg: ExperimentConfig, outdir: Optional[str] = None,
        workers: Optional[int] = None) -> RunResult:
    """Run every (grid cell, seed); rows are ordered by cell, then seed."""
    return sweep(cfg, outdir, workers)


def sweep(cfg: ExperimentConfig, outdir: Optional[str] = None,
          workers: Optional[int] = None) -> RunResult:
    cells = expand_grid(cfg)
    if cfg.grid and any(len(vs) == 0 for vs in cfg.grid.values()):
        cells = []
    workers = workers or default_workers()
    if outdir is not None and cells:
        os.makedirs(outdir, exist_ok=True)
    tasks = [(cell, seed, outdir) for cell in cells for seed in cell.seeds()]
    t0 = time.perf_counter()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    rows: List[Row] = []
    failures, timings = [], []
    pooled: Dict[str, list] = {}
    for (cell, seed, _), (_, r, extra, wall, err) in zip(tasks, results):
        rows.extend(r)
        timings.append({"fingerprint": cell.fingerprint(), "seed": seed, "wall_time": wall})
        if err:
            failures.append({"fingerprint": cell.fingerprint(), "seed": seed, "error": err})
        if "indegrees" in extra:
            pooled.setdefault(cell.fingerprint(), []).append(extra["indegrees"])
    for cell in cells:
        zs = pooled.get(cell.fingerprint())
        if not zs:
            continue
        z = np.concatenate(zs)
        try:
            est = hill_estimate(z, cell.values["experiment.top_fraction"])
            rows.append(_row(cell, "pooled", "hill_index", est.index, f"k={est.k}"))
            rows.append(_row(cell, "pooled", "hill_se", est.se, f"k={est.k}"))
        except SpamForgeError:
            pass
        vals, cnt = np.unique(z, return_counts=True)
        tail = np.cumsum(cnt[::-1])[::-1]
        for k, c in zip(vals.tolist(), tail.tolist()):
            rows.append(_row(cell, "pooled", "tail_count", c, f"degree>={k}"))
    manifest = {
        "software": "spam-forge",
        "version": __version__,
        "backend": kernels.BACKEND,
        "python": platform.python_version(),
        "config": cfg.echo(),
        "grid": cfg.grid,
        "cells": [c.fingerprint() for c in cells],
        "wall_times": timings,
        "total_wall_time": time.perf_counter() - t0,
        "partial": bool(failures),
        "failures": failures,
    }
    files = []
    if outdir is not None and cells:
        fmts = set(str(cfg.values["output.formats"]).split(","))
        if "csv" in fmts:
            path = os.path.join(outdir, "results.csv")
            with open(path, "w", newline="") as fh:
                fh.write(rows_to_csv(rows))
            files.append(path)
        if "json" in fmts:
            path = os.path.join(outdir, "results.json")
            with open(path, "w") as fh:
                json.dump([dict(zip(CSV_HEADER, r)) for r in rows], fh, indent=1)
            files.append(path)
        path = os.path.join(outdir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
        files.append(path)
    return RunResult(rows, manifest, files)


def rows_to_csv(rows: Sequence[Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    return buf.getvalue()
