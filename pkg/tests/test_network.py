from __future__ import annotations

import numpy as np
import pytest

from cvmtrack.errors import ConfigurationError
from cvmtrack.model import ExtentState, KinematicState, coefficient_matrix
from cvmtrack.network import (GroundTruthStep, MeasurementBatch, NodeMeasurementSlice, SensorNetwork,
                              SensorNode, Topology, detecting_nodes, generate_measurements,
                              generate_scan, in_fov, measurement_rng, naive_nodes,
                              sample_multiplicative_noise)


def truth_at(pos, vel=(3.0, 1.0), lengths=(35.0, 30.0), beta=0.2):
    return GroundTruthStep(KinematicState(pos, vel), ExtentState(lengths, beta))


def line_network(positions, rng_=200.0, edges=None):
    n = len(positions)
    edges = edges if edges is not None else [(i, i + 1) for i in range(n - 1)]
    nodes = [SensorNode(i, p, rng_, np.diag([40.0, 20.0])) for i, p in enumerate(positions)]
    return SensorNetwork(tuple(nodes), Topology.from_edges(n, edges))


def test_fov_closed_ball():
    node = SensorNode(0, [100, 100], 200.0, np.eye(2))
    assert in_fov(node, [250, 100])
    assert not in_fov(node, [400, 100])
    assert in_fov(node, [300, 100])


def test_sensing_range_must_be_positive():
    with pytest.raises(ConfigurationError):
        SensorNode(0, [0, 0], 0.0, np.eye(2))


def test_topology_validation():
    with pytest.raises(ConfigurationError):
        Topology(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ConfigurationError):
        Topology(np.eye(2))
    with pytest.raises(ConfigurationError):
        Topology.from_edges(3, [(0, 1)])
    with pytest.raises(ConfigurationError):
        Topology.from_edges(3, [(0, 3)])
    t = Topology.from_edges(3, [(0, 1)], require_connected=False)
    assert not t.is_connected


def test_topology_properties():
    t = Topology.from_edges(6, [(i, (i + 1) % 6) for i in range(6)])
    assert t.max_degree == 2 and t.diameter == 3 and t.is_connected
    assert t.edges() == [(0, 1), (0, 5), (1, 2), (2, 3), (3, 4), (4, 5)]
    assert list(t.neighbors(0)) == [1, 5]
    assert Topology(np.zeros((1, 1))).diameter == 0


def test_detecting_nodes_examples():
    net = line_network([[0, 0], [500, 0], [1000, 0]], rng_=200.0)
    assert detecting_nodes(truth_at([100, 0]), net) == {0}
    assert detecting_nodes(truth_at([0, 5000]), net) == set()
    assert detecting_nodes(truth_at([500, 0]), net) == {1}


def test_naive_nodes():
    net = line_network([[0, 0], [500, 0], [1000, 0], [1500, 0]], rng_=200.0)
    assert naive_nodes(truth_at([50, 0]), net) == {2, 3}
    assert naive_nodes(truth_at([0, 5000]), net) == {0, 1, 2, 3}


def test_out_of_fov_gives_no_measurements():
    node = SensorNode(0, [0, 0], 10.0, np.eye(2))
    y = generate_measurements(truth_at([100, 0]), node, "ellipse", 10.0, np.random.default_rng(0))
    assert y.shape == (0, 2)


def test_measurement_count_at_least_one():
    node = SensorNode(0, [0, 0], 1e4, np.eye(2))
    rng = np.random.default_rng(0)
    counts = [len(generate_measurements(truth_at([0, 0]), node, "ellipse", 0.01, rng)) for _ in range(200)]
    assert min(counts) == 1


@pytest.mark.parametrize("shape,cov", [("rectangle", 1 / 3), ("ellipse", 1 / 4)])
def test_multiplicative_noise_moments(shape, cov):
    h = sample_multiplicative_noise(shape, 1_000_000, np.random.default_rng(1))
    assert np.allclose(np.cov(h.T), cov * np.eye(2), atol=0.01 * cov)
    assert np.allclose(h.mean(0), 0, atol=3e-3)


def test_unknown_shape():
    with pytest.raises(ConfigurationError):
        sample_multiplicative_noise("triangle", 3, np.random.default_rng(0))


def test_noise_free_ellipse_sources_lie_inside():
    t = truth_at([10, -5])
    node = SensorNode(0, [0, 0], 1e4, np.eye(2) * 1e-300)
    y = np.vstack([generate_measurements(t, node, "ellipse", 50.0, np.random.default_rng(i)) for i in range(50)])
    s = coefficient_matrix(t.kin.velocity, t.ext)
    d = y - t.kin.position
    q = np.einsum("ni,ij,nj->n", d, np.linalg.inv(s @ s.T), d)
    assert np.all(q <= 1 + 1e-9)


def test_measurement_moments_match_model():
    t = truth_at([10, -5], lengths=(5.0, 2.0))
    cv = np.array([[2.0, 0.3], [0.3, 1.0]])
    node = SensorNode(0, [0, 0], 1e4, cv)
    rng = np.random.default_rng(9)
    y = np.vstack([generate_measurements(t, node, "rectangle", 100.0, rng) for _ in range(1200)])
    assert len(y) > 100_000
    s = coefficient_matrix(t.kin.velocity, t.ext)
    ref = s @ np.eye(2) / 3 @ s.T + cv
    assert np.allclose(y.mean(0), t.kin.position, atol=0.03)
    assert np.abs(np.cov(y.T) - ref).max() <= 0.03 * np.abs(ref).max()


def test_generation_is_replayable():
    net = line_network([[0, 0], [300, 0]], rng_=400.0)
    a = generate_scan(truth_at([100, 0]), net, "ellipse", 10.0, run_seed=5, step=3)
    b = generate_scan(truth_at([100, 0]), net, "ellipse", 10.0, run_seed=5, step=3)
    c = generate_scan(truth_at([100, 0]), net, "ellipse", 10.0, run_seed=5, step=4)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.present, b.present)
    assert not (a.y.shape == c.y.shape and np.array_equal(a.y, c.y))
    r1 = measurement_rng(1, 2, 3).standard_normal(4)
    r2 = measurement_rng(1, 2, 4).standard_normal(4)
    assert not np.array_equal(r1, r2)


def test_batch_alignment_pads_with_absence():
    per_node = [np.ones((3, 2)), np.zeros((0, 2)), 2 * np.ones((1, 2))]
    b = MeasurementBatch.from_node_lists(per_node)
    assert b.n_indices == 3
    assert b.present.tolist() == [[True, False, True], [True, False, False], [True, False, False]]
    assert np.array_equal(b.node_measurements(2), [[2, 2]])
    slices = list(b.slices())
    assert len(slices) == 3 and slices[1].present.tolist() == [True, False, False]
    sl = NodeMeasurementSlice.from_optional([None, [1.0, 2.0]])
    assert sl.present.tolist() == [False, True] and np.array_equal(sl.measurements[1], [1, 2])
    assert not NodeMeasurementSlice.empty(4).present.any()
    assert MeasurementBatch.from_node_lists([np.zeros((0, 2))] * 2).n_indices == 0


def test_ground_truth_orientation():
    t = truth_at([0, 0], vel=(0.0, 2.0), beta=np.pi / 4)
    assert t.orientation == pytest.approx(np.pi / 4)
