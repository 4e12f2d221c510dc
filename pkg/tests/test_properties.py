import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from oracles import brute_canonical, modulus_oracle
from spam_forge.builder import build_accelerated, build_exact, snapshot
from spam_forge.local import RootedGraph, StepPath, canonical_form, skorohod_modulus
from spam_forge.model import (AttachmentRule, ModelParams, ProfileFunction, TorusBox,
                              connection_probability, torus_distance)
from spam_forge.points import MarkOracle, sample_points

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

coords = st.floats(-50, 50, allow_nan=False)


@FAST
@given(st.integers(1, 3), st.floats(0.5, 30), st.data())
def test_torus_metric(d, side, data):
    box = TorusBox(d, side)
    pts = [box.wrap(np.array(data.draw(st.lists(coords, min_size=d, max_size=d)))) for _ in range(3)]
    a, b, c = pts
    assert torus_distance(a, b, box) == torus_distance(b, a, box)
    assert torus_distance(a, a, box) == 0
    assert torus_distance(a, c, box) <= torus_distance(a, b, box) + torus_distance(b, c, box) + 1e-9
    assert torus_distance(a, b, box) <= math.sqrt(d) * side / 2 + 1e-9


@FAST
@given(st.floats(1.01, 10), st.floats(0, 1e6), st.floats(0, 1e6))
def test_profile_monotone_bounded(delta, x, y):
    phi = ProfileFunction.power(delta)
    lo, hi = sorted((x, y))
    assert 0 <= phi(hi) <= phi(lo) <= 1


@FAST
@given(st.floats(0.05, 0.95), st.floats(0.05, 5), st.floats(1.05, 5),
       st.integers(0, 500), st.floats(0, 100), st.floats(0.001, 1))
def test_connection_probability_range(g, gp, delta, z, r, t):
    P = ModelParams(g, gp, delta, 1, 100.0)
    p = connection_probability(z, r, t, P)
    assert 0 <= p <= 1
    assert connection_probability(z + 1, r, t, P) >= p


@FAST
@given(st.floats(0.05, 0.95), st.floats(0.1, 3))
def test_attachment_affine(g, gp):
    f = AttachmentRule.affine(g, gp)
    z = np.arange(50)
    assert np.allclose(f(z), g * z + gp)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 3), st.sampled_from([1.0, 3.0, math.inf]),
       st.floats(0.3, 0.9), st.floats(1.2, 4.0))
def test_accelerated_equals_exact(seed, d, cutoff, gamma, delta):
    cl = sample_points(ModelParams(gamma, 1.0, delta, d, 250.0, 1.0, seed))
    a = build_accelerated(cl, MarkOracle(seed), range_cutoff=cutoff)
    b = build_exact(cl, MarkOracle(seed), range_cutoff=cutoff)
    assert np.array_equal(a.edge_keys(), b.edge_keys())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0, 1))
def test_snapshot_consistent(seed, t):
    G = build_accelerated(sample_points(ModelParams(0.7, 1.0, 2.0, 1, 300.0, 1.0, seed)), MarkOracle(seed))
    S = snapshot(G, t)
    assert np.all(S.birth <= t)
    assert S.count == int(np.count_nonzero(G.birth <= t))
    assert np.all(S.birth[S.young] <= t)
    assert np.array_equal(S.indegree(), G.indegree(t)[:S.count])


@st.composite
def rooted_graphs(draw, max_n=7):
    n = draw(st.integers(1, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    flips = draw(st.lists(st.booleans(), min_size=len(chosen), max_size=len(chosen)))
    edges = tuple((j, i) if f else (i, j) for (i, j), f in zip(chosen, flips))
    return RootedGraph(n, edges, draw(st.integers(0, n - 1)))


@settings(max_examples=150, deadline=None)
@given(rooted_graphs(), rooted_graphs(), st.booleans())
def test_canonical_vs_brute(g, h, oriented):
    if g.n != h.n:
        h = RootedGraph(g.n, tuple(e for e in g.edges[:len(h.edges)]), min(h.root, g.n - 1))
    same = brute_canonical(g.n, g.edges, g.root, oriented) == brute_canonical(h.n, h.edges, h.root, oriented)
    assert same == (canonical_form(g, oriented) == canonical_form(h, oriented))


@settings(max_examples=150, deadline=None)
@given(rooted_graphs(max_n=10), st.booleans(), st.randoms(use_true_random=False))
def test_canonical_invariant(g, oriented, rnd):
    perm = list(range(g.n))
    rnd.shuffle(perm)
    assert canonical_form(g, oriented) == canonical_form(g.relabel(perm), oriented)


@st.composite
def step_paths(draw):
    times = sorted(set(draw(st.lists(st.floats(0.001, 1.0), max_size=6))))
    dim = draw(st.integers(1, 2))
    vals = draw(st.lists(st.lists(st.integers(-4, 4), min_size=dim, max_size=dim),
                         min_size=len(times), max_size=len(times)))
    init = draw(st.lists(st.integers(-4, 4), min_size=dim, max_size=dim))
    return StepPath(times, np.array(vals, dtype=float).reshape(len(times), dim), init)


@settings(max_examples=60, deadline=None)
@given(step_paths(), st.floats(0.15, 0.7))
def test_modulus_vs_oracle(path, eta):
    w = skorohod_modulus(path, eta)
    assert w == modulus_oracle(path.times, path.steps(), eta)
    assert 0 <= w <= np.max(path.steps().max(0) - path.steps().min(0))


@settings(max_examples=40, deadline=None)
@given(step_paths(), st.floats(0.05, 0.4), st.floats(0.0, 0.3))
def test_modulus_monotone_in_eta(path, eta, extra):
    eta2 = min(eta + extra, 0.95)
    assert skorohod_modulus(path, eta) <= skorohod_modulus(path, eta2)
