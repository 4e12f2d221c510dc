import math

import numpy as np
import pytest

from conftest import toy_graph
from spam_forge.analysis import (UNREACHABLE, GoodnessConfig, build_layers, components,
                                 good_mask, graph_distance, high_degree_density_probe,
                                 hill_estimate, is_good, is_locally_good, is_two_connected,
                                 layer_diameter, reachable_old_vertex, simulate_two_connection,
                                 two_connection_bound, two_connection_q, typical_distance_sample)
from spam_forge.builder import build_accelerated
from spam_forge.errors import ArgumentError, RegimeError, SamplingError
from spam_forge.model import ModelParams, regime_report
from spam_forge.points import BLACK, RED, MarkOracle, colour_points, sample_points


@pytest.fixture(scope="module")
def big_coloured():
    P = ModelParams(0.8, 1.0, 1.2, 1, 1e5, 1.0, 0)
    cl = colour_points(sample_points(P), 0.5)
    return build_accelerated(cl, MarkOracle(0))


def test_components_examples(path3):
    assert components(path3.induced(np.zeros(3, dtype=bool))).count == 0
    c = components(path3)
    assert c.count == 1 and c.oldest_size() == 3


def test_components_match_bfs():
    G = build_accelerated(sample_points(ModelParams(0.5, 1.0, 3.0, 2, 3000.0, 1.0, 1)), MarkOracle(1))
    c = components(G)
    from spam_forge.analysis import bfs
    reach = bfs(G, 0) >= 0
    assert np.array_equal(reach, c.labels == c.labels[0])
    assert sum(c.sizes.values()) == G.count


def test_giant_fraction_stable():
    fr = []
    for seed in range(3):
        G = build_accelerated(sample_points(ModelParams(0.8, 1.0, 1.2, 1, 2e4, 1.0, seed)),
                              MarkOracle(seed))
        fr.append(components(G).oldest_size() / G.count)
    assert all(0 < f < 1 for f in fr)
    assert max(fr) - min(fr) <= 0.05


def test_graph_distance_examples(path3):
    assert graph_distance(path3, 1, 1) == 0
    assert graph_distance(path3, 0, 2) == 2
    G = toy_graph([0.1, 0.5, 0.9], [(1, 0)])
    assert graph_distance(G, 0, 2) == UNREACHABLE


def test_distance_sample_complete_graph():
    G = toy_graph([0.1, 0.2, 0.3, 0.4, 0.5], [(j, i) for j in range(5) for i in range(j)])
    ds = typical_distance_sample(G, 50)
    assert ds.distances.max() <= 1 and ds.distances.min() == 1
    with pytest.raises(SamplingError):
        typical_distance_sample(toy_graph([0.1, 0.2], []), 5)


def test_distance_sample_deterministic():
    G = build_accelerated(sample_points(ModelParams(0.8, 1.0, 1.2, 1, 5000.0, 1.0, 2)), MarkOracle(2))
    a, b = typical_distance_sample(G, 100), typical_distance_sample(G, 100)
    assert np.array_equal(a.distances, b.distances)
    assert sum(a.histogram.values()) == 100
    assert a.budget == pytest.approx(5 * 0.83058 * math.log(math.log(5000.0)), rel=1e-4)


def test_goodness_examples():
    P = ModelParams(0.8, 1.0, 1.2, 1, 1000.0)
    G = toy_graph([0.01, 0.2, 0.6], [(1, 0), (2, 0)], colours=[RED, BLACK, RED], params=P, side=1000.0)
    assert not is_good(G, 2)
    # s=0.01 needs ceil(39.8 / 31.5) = 2 red young neighbours born before 1/2; it has none
    assert GoodnessConfig().threshold(0.01, 0.8) > 1
    assert not is_good(G, 0)


def test_locally_good_constructed():
    P = ModelParams(0.8, 1.0, 1.2, 1, 1000.0)
    pos = [[0.0], [300.0], [-300.0]]
    G = toy_graph([0.01, 0.2, 0.3], [(1, 0), (2, 0)], positions=pos,
                  colours=[BLACK, RED, RED], params=P, side=1000.0)
    assert is_good(G, 0)
    assert not is_locally_good(G, 0)
    near = toy_graph([0.01, 0.2, 0.3], [(1, 0), (2, 0)], positions=[[0.0], [30.0], [-30.0]],
                     colours=[BLACK, RED, RED], params=P, side=1000.0)
    assert is_locally_good(near, 0)


def test_locally_good_implies_good():
    for seed in range(20):
        P = ModelParams(0.8, 1.0, 1.2, 1, 400.0, 1.0, seed)
        G = build_accelerated(colour_points(sample_points(P), 0.5), MarkOracle(seed))
        assert np.all(~good_mask(G, local=True) | good_mask(G))


def test_good_fraction_old_vertices(big_coloured):
    s = big_coloured.birth
    sel = (s > 1e-3) & (s < 1e-2)
    assert good_mask(big_coloured)[sel].mean() > 0.5


def test_locally_good_bounded_away_from_zero(big_coloured):
    s = big_coloured.birth
    lg = good_mask(big_coloured, local=True)
    for lo in (-3.0, -2.5, -2.0, -1.5):
        sel = (s > 10 ** lo) & (s < 10 ** (lo + 0.5))
        assert lg[sel].mean() >= 0.05


def test_layers_empty_flag():
    P = ModelParams(0.8, 1.0, 1.2, 1, 2000.0, 1.0, 0)
    G = build_accelerated(colour_points(sample_points(P), 0.5), MarkOracle(0))
    lay = build_layers(G, regime_report(P))
    assert lay.K == 0 and lay.empty_flag and lay.layer_sets == []
    with pytest.raises(RegimeError):
        build_layers(G, regime_report(ModelParams(0.5, 1.0, 1.5, 1, 2000.0)))


def test_layers_nested():
    P = ModelParams(0.95, 1.0, 1.2, 1, 1e4, 1.0, 3)
    reg = regime_report(P, alpha_choice=1.2)
    assert reg.K >= 2
    G = build_accelerated(colour_points(sample_points(P), 0.5), MarkOracle(3))
    lay = build_layers(G, reg)
    assert len(lay.layer_sets) == reg.K
    for a, b in zip(lay.layer_sets, lay.layer_sets[1:]):
        assert set(a.tolist()) <= set(b.tolist())
    assert np.all(np.diff(lay.thresholds) > 0)


def test_layer_diameter_examples():
    star = toy_graph([0.1, 0.2, 0.3, 0.4], [(1, 0), (2, 0), (3, 0)])
    assert layer_diameter(star, [2], 5) == 0
    assert layer_diameter(star, [1, 2, 3], 5) == 2
    assert layer_diameter(star, [1, 2, 3], 1) == 2
    pair = toy_graph([0.1, 0.2], [])
    assert layer_diameter(pair, [0, 1], 3) == 4
    with pytest.raises(ArgumentError):
        layer_diameter(star, [], 3)


def test_two_connection_q_example():
    P = ModelParams(0.8, 1.0, 2.0, 1, 1000.0)
    q, bound = two_connection_q(10, 10, 5.0, P, 1.0)
    assert q == pytest.approx(0.014534, rel=1e-3)
    assert bound == pytest.approx(0.014429, rel=1e-3)
    assert bound == pytest.approx(1 - math.exp(-q), rel=1e-12)
    q0, b0 = two_connection_q(0, 0, 1e9, P, 1.0)
    assert q0 < 1e-15 and b0 < 1e-15


def test_two_connection_bound_symmetric():
    P = ModelParams(0.8, 1.0, 2.0, 1, 100.0)
    G = toy_graph([0.1, 0.2, 0.3, 0.7], [(2, 0), (3, 1)], positions=[[0], [4], [1], [2]], params=P,
                  side=100.0)
    assert two_connection_bound(G, 0, 1) == two_connection_bound(G, 1, 0)
    with pytest.raises(ArgumentError):
        two_connection_bound(G, 0, 3)


def test_is_two_connected_examples():
    G = toy_graph([0.1, 0.2, 0.7], [(2, 0), (2, 1)])
    assert is_two_connected(G, 0, 1)
    H = toy_graph([0.1, 0.2, 0.4], [(2, 0), (2, 1)])
    assert not is_two_connected(H, 0, 1)


def test_simulated_frequency_dominates_bound():
    P = ModelParams(0.8, 1.0, 2.0, 1, 500.0, 1.0, 0)
    for z, dist in ((2, 1.0), (10, 5.0)):
        freq = simulate_two_connection(P, z, z, dist, 300)
        _, b = two_connection_q(z, z, dist, P)
        assert freq >= b - 3 * math.sqrt(b * (1 - b) / 300)


def test_reachable_old_vertex_examples():
    chain = toy_graph([0.05, 0.3, 0.5, 0.8], [(1, 0), (2, 1), (3, 2)])
    assert reachable_old_vertex(chain, 1, 0, 0.4) == 1
    assert reachable_old_vertex(chain, 3, 0, 0.1) is None
    assert reachable_old_vertex(chain, 3, 2, 0.1) is None
    assert reachable_old_vertex(chain, 3, 3, 0.1) == 0


def test_density_probe_constructed():
    P = ModelParams(0.8, 1.0, 1.2, 2, 25.0)
    births = [0.04, 0.25, 0.3]
    pos = [[0, 0], [1, 1], [0.5, 0]]
    G = toy_graph(births, [(2, 0)], positions=pos, colours=[RED, BLACK, RED], params=P, side=5.0)
    reg = regime_report(P)
    assert high_degree_density_probe(G, 1, reg)
    H = toy_graph(births, [(2, 0)], positions=pos, colours=[BLACK] * 3, params=P, side=5.0)
    assert not high_degree_density_probe(H, 1, reg)


def test_density_probe_trend(big_coloured):
    G = big_coloured
    reg = regime_report(G.cloud.params, alpha_choice=1.5)
    freq = []
    for e in (-1.5, -2.0, -2.5):
        rows = np.flatnonzero((G.birth > 10 ** (e - 0.1)) & (G.birth < 10 ** (e + 0.1)))[:120]
        freq.append(np.mean([high_degree_density_probe(G, int(G.cloud.ids[r]), reg) for r in rows]))
    assert freq[0] <= freq[1] <= freq[2]
    assert freq[2] > 0.9


def test_hill_pareto():
    rng = np.random.default_rng(0)
    x = rng.pareto(2.0, 10 ** 6) + 1
    est = hill_estimate(x, 0.01)
    lo, hi = est.ci()
    assert lo <= 2.0 <= hi
    assert est.k == 10 ** 4
    with pytest.raises(SamplingError):
        hill_estimate([1.0, 2.0], 0.01)
