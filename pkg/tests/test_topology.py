import math
import random

import numpy as np
import pytest
from scipy import optimize, stats

from aggsim.core import ConfigError
from aggsim.topology import (
    Topology,
    edge_probability,
    generate_erdos_renyi,
    induced_subgraph,
    largest_connected_component,
    read_topology,
    sample_neighbor,
    write_topology,
)


def test_edge_probability_default_setting():
    assert edge_probability(1000, 5) == pytest.approx(5 / 999)
    assert edge_probability(1000, 5) == pytest.approx(0.0050050, abs=1e-7)


def test_mean_edge_count_over_seeds():
    n, deg, seeds = 1000, 5.0, 100
    p = edge_probability(n, deg)
    pairs = n * (n - 1) // 2
    expected = pairs * p
    assert expected == pytest.approx(2500)
    counts = [generate_erdos_renyi(n, deg, np.random.default_rng(s)).edge_count for s in range(seeds)]
    sd_of_mean = math.sqrt(pairs * p * (1 - p)) / math.sqrt(seeds)
    assert abs(np.mean(counts) - expected) < 3 * sd_of_mean


def test_two_nodes_degree_one_is_an_edge():
    t = generate_erdos_renyi(2, 1.0, np.random.default_rng(0))
    assert t.adjacency == ((1,), (0,))


def test_same_seed_same_graph():
    a = generate_erdos_renyi(1000, 5, np.random.default_rng(42))
    b = generate_erdos_renyi(1000, 5, np.random.default_rng(42))
    assert a.adjacency == b.adjacency


@pytest.mark.parametrize("seed", range(10))
def test_generated_graphs_are_simple_and_symmetric(seed):
    t = generate_erdos_renyi(300, 4, np.random.default_rng(seed))
    t.validate()
    for u, nbrs in enumerate(t.adjacency):
        assert u not in nbrs
        assert all(u in t.adjacency[v] for v in nbrs)


@pytest.mark.parametrize("n,deg", [(1, 0.5), (10, 0), (10, 10), (10, -1)])
def test_bad_parameters(n, deg):
    with pytest.raises(ConfigError):
        generate_erdos_renyi(n, deg, np.random.default_rng(0))


def test_lcc_small_cases():
    assert largest_connected_component(Topology.from_edges(3, [(0, 1), (1, 2)])) == {0, 1, 2}
    assert largest_connected_component(Topology.from_edges(3, [(0, 1)])) == {0, 1}


def test_lcc_supercritical_er():
    # giant-component fraction S solves S = 1 - exp(-c S)
    c = 5.0
    frac = optimize.brentq(lambda s: s - 1 + math.exp(-c * s), 0.5, 1.0)
    sizes = [
        len(largest_connected_component(generate_erdos_renyi(1000, c, np.random.default_rng(s))))
        for s in range(100)
    ]
    assert np.mean(sizes) / 1000 == pytest.approx(frac, abs=0.002)
    assert sum(sz > 990 for sz in sizes) >= 70


def test_induced_subgraph_relabels_in_order():
    t = Topology.from_edges(5, [(1, 3), (3, 4), (0, 2)])
    sub, order = induced_subgraph(t, {1, 3, 4})
    assert order == [1, 3, 4]
    assert sub.adjacency == ((1,), (0, 2), (1,))
    sub.validate()


def test_sample_single_neighbor():
    t = Topology.from_edges(4, [(0, 3)])
    rng = random.Random(0)
    assert all(sample_neighbor(t, 0, rng) == 3 for _ in range(20))


def test_sample_neighbor_uniform_chi_square():
    t = Topology.from_edges(5, [(0, 1), (0, 2), (0, 4)])
    rng = random.Random(7)
    draws = [sample_neighbor(t, 0, rng) for _ in range(100_000)]
    counts = [draws.count(v) for v in (1, 2, 4)]
    assert stats.chisquare(counts).pvalue > 0.001


def test_sample_neighbor_empty_filter():
    t = Topology.from_edges(3, [(0, 1), (0, 2)])
    assert sample_neighbor(t, 0, random.Random(0), filter=lambda v: v > 5) is None
    assert sample_neighbor(Topology.from_edges(2, []), 0, random.Random(0)) is None


def test_topology_dump_roundtrip(tmp_path):
    t = generate_erdos_renyi(50, 3, np.random.default_rng(3))
    path = tmp_path / "topo.txt"
    write_topology(t, path, seed=3)
    lines = path.read_text().splitlines()
    assert lines[0] == "# n=50 seed=3"
    assert len(lines) == 1 + t.edge_count
    assert read_topology(path).adjacency == t.adjacency
