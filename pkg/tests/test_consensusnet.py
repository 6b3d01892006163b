import numpy as np
import pytest

from coslat.consensusnet import (
    CommGraph,
    ConsensusConfig,
    TopologyViolationError,
    consensus_round,
    edge_weights,
    exact_average,
    mailbox_exchange,
    run_consensus,
)


def random_connected_graph(n, rng):
    # random spanning tree plus extra edges
    order = rng.permutation(n)
    edges = [(int(order[i]), int(order[i + 1])) for i in range(n - 1)]
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.3:
                edges.append((i, j))
    return CommGraph.from_edges(range(n), edges)


def test_identical_values_fixed_point():
    g = CommGraph.from_edges([0, 1, 2], [(0, 1), (1, 2)])
    values = {k: np.array([3.0, -1.0]) for k in g.nodes}
    out = consensus_round(g, values, edge_weights(g))
    for k in g.nodes:
        assert np.allclose(out[k], values[k])


def test_two_node_metropolis_averages_in_one_round():
    g = CommGraph.from_edges([0, 1], [(0, 1)])
    w = edge_weights(g)
    assert w[frozenset((0, 1))] == pytest.approx(0.5)
    out = consensus_round(g, {0: np.array([0.0]), 1: np.array([4.0])}, w)
    assert out[0][0] == pytest.approx(2.0)
    assert out[1][0] == pytest.approx(2.0)


def test_converges_to_direct_mean():
    rng = np.random.default_rng(0)
    g = random_connected_graph(7, rng)
    values = {k: rng.normal(size=3) for k in g.nodes}
    truth = np.mean([values[k] for k in g.nodes], axis=0)
    out = run_consensus(g, values, ConsensusConfig(iterations=200))
    for k in g.nodes:
        assert np.max(np.abs(out[k] - truth)) < 1e-9


def test_sum_preserved_each_round():
    rng = np.random.default_rng(1)
    g = random_connected_graph(6, rng)
    values = {k: rng.normal(size=4) for k in g.nodes}
    w = edge_weights(g)
    total = np.sum([values[k] for k in g.nodes], axis=0)
    for _ in range(20):
        values = consensus_round(g, values, w)
        assert np.allclose(np.sum([values[k] for k in g.nodes], axis=0), total, atol=1e-12)


def test_max_deviation_nonincreasing():
    rng = np.random.default_rng(2)
    g = random_connected_graph(8, rng)
    values = {k: rng.normal(size=1) for k in g.nodes}
    mean = np.mean([values[k] for k in g.nodes])
    w = edge_weights(g)
    prev = max(abs(float(values[k][0]) - mean) for k in g.nodes)
    for _ in range(30):
        values = consensus_round(g, values, w)
        cur = max(abs(float(values[k][0]) - mean) for k in g.nodes)
        assert cur <= prev + 1e-12
        prev = cur


def test_zero_iterations_returns_input():
    g = CommGraph.from_edges([0, 1], [(0, 1)])
    values = {0: np.array([1.0]), 1: np.array([5.0])}
    out = run_consensus(g, values, ConsensusConfig(iterations=0))
    assert out[0][0] == 1.0 and out[1][0] == 5.0


def test_max_degree_rule():
    g = CommGraph.from_edges([0, 1, 2], [(0, 1), (1, 2)])
    w = edge_weights(g, "max-degree")
    assert all(v == pytest.approx(1.0 / 3.0) for v in w.values())


def test_exact_average_matches_long_consensus():
    rng = np.random.default_rng(3)
    g = random_connected_graph(5, rng)
    values = {k: rng.normal(size=2) for k in g.nodes}
    exact = exact_average(values)
    long_run = run_consensus(g, values, ConsensusConfig(iterations=400))
    for k in g.nodes:
        assert np.allclose(long_run[k], exact[k], atol=1e-10)


def test_mailbox_empty_payloads():
    g = CommGraph.from_edges([0, 1, 2], [(0, 1), (1, 2)])
    inbox = mailbox_exchange(g, {k: {} for k in g.nodes})
    assert all(inbox[k] == {} for k in g.nodes)


def test_mailbox_rejects_non_neighbor():
    g = CommGraph.from_edges(["a", "b", "c"], [("a", "b"), ("b", "c")])
    with pytest.raises(TopologyViolationError):
        mailbox_exchange(g, {"a": {"c": 1}})


def test_mailbox_full_exchange_delivers_edge_count():
    rng = np.random.default_rng(4)
    g = random_connected_graph(7, rng)
    outgoing = {k: {l: (k, l) for l in g.neighbors(k)} for k in g.nodes}
    inbox = mailbox_exchange(g, outgoing)
    delivered = sum(len(v) for v in inbox.values())
    assert delivered == 2 * len(g.edges)
    for k in g.nodes:
        for sender, payload in inbox[k].items():
            assert payload == (sender, k)


def test_graph_helpers():
    g = CommGraph.from_positions({1: (0.0, 0.0), 2: (56.0, 0.0), 3: (200.0, 0.0)}, 56.0)
    assert g.has_edge(1, 2)  # boundary inclusive
    assert not g.has_edge(1, 3)
    assert not g.is_connected()
    with pytest.raises(ValueError):
        CommGraph.from_edges([1], [(1, 1)])
    with pytest.raises(ValueError):
        ConsensusConfig(iterations=-1)
