"""Sensor network: nodes, communication topology, fields of view and
synthetic measurement generation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import ConfigurationError
from .model import ExtentState, H, KinematicState, coefficient_matrix

SHAPES = ("rectangle", "ellipse")


@dataclass(frozen=True)
class SensorNode:
    id: int
    position: np.ndarray
    sensing_range: float
    meas_cov: np.ndarray

    def __post_init__(self):
        if not self.sensing_range > 0:
            raise ConfigurationError(f"node {self.id}: sensing range must be positive")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(2))
        object.__setattr__(self, "meas_cov", np.asarray(self.meas_cov, dtype=float).reshape(2, 2))


class Topology:
    """Undirected communication graph given by a boolean adjacency matrix."""

    def __init__(self, adjacency, require_connected: bool = True):
        adj = np.asarray(adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ConfigurationError("adjacency must be a square matrix")
        adj = adj.astype(bool)
        if not np.array_equal(adj, adj.T):
            raise ConfigurationError("adjacency must be symmetric")
        if np.any(np.diag(adj)):
            raise ConfigurationError("adjacency must have a zero diagonal")
        adj.setflags(write=False)
        self.adjacency = adj
        if self.size <= 1:
            self._connected = True
        else:
            self._connected = connected_components(adj, directed=False)[0] == 1
        if require_connected and not self._connected:
            raise ConfigurationError("topology is disconnected; average consensus cannot reach the global mean")

    @classmethod
    def from_edges(cls, n: int, edges: Sequence[Sequence[int]], **kw) -> "Topology":
        adj = np.zeros((n, n), dtype=bool)
        for a, b in edges:
            if a == b or not (0 <= a < n and 0 <= b < n):
                raise ConfigurationError(f"invalid edge ({a}, {b})")
            adj[a, b] = adj[b, a] = True
        return cls(adj, **kw)

    @property
    def size(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.size else 0

    @property
    def is_connected(self) -> bool:
        return self._connected

    @property
    def diameter(self) -> int:
        if self.size <= 1:
            return 0
        return int(np.max(self.hop_distances()))

    def hop_distances(self) -> np.ndarray:
        """Matrix of shortest-path hop counts (inf between components)."""
        return shortest_path(self.adjacency.astype(float), directed=False, unweighted=True)

    def neighbors(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[s])

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency))
        return [(int(a), int(b)) for a, b in zip(i, j)]


@dataclass(frozen=True)
class SensorNetwork:
    nodes: tuple
    topology: Topology

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if len(self.nodes) != self.topology.size:
            raise ConfigurationError("node count does not match topology size")

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes])

    @property
    def meas_covs(self) -> np.ndarray:
        return np.array([n.meas_cov for n in self.nodes])


@dataclass(frozen=True)
class GroundTruthStep:
    kin: KinematicState
    ext: ExtentState

    @property
    def orientation(self) -> float:
        v = self.kin.velocity
        return float(np.arctan2(v[1], v[0]) - self.ext.sideslip)


def in_fov(node: SensorNode, position) -> bool:
    """Closed-ball field of view test."""
    d = np.asarray(position, dtype=float) - node.position
    return bool(np.hypot(d[0], d[1]) <= node.sensing_range)


def detecting_nodes(truth: GroundTruthStep, network: SensorNetwork) -> set[int]:
    return {n.id for n in network.nodes if in_fov(n, truth.kin.position)}


def naive_nodes(truth: GroundTruthStep, network: SensorNetwork) -> set[int]:
    """Nodes that neither observe the object nor have an observing neighbour."""
    seen = detecting_nodes(truth, network)
    out = set()
    for node in network.nodes:
        nbrs = set(network.topology.neighbors(node.id).tolist())
        if node.id not in seen and not (nbrs & seen):
            out.add(node.id)
    return out


def sample_multiplicative_noise(shape: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw scattering-source coordinates: uniform on [-1, 1]^2 or on the unit disk."""
    if shape == "rectangle":
        return rng.uniform(-1.0, 1.0, size=(n, 2))
    if shape == "ellipse":
        r = np.sqrt(rng.uniform(0.0, 1.0, size=n))
        phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    raise ConfigurationError(f"unknown shape {shape!r}; expected one of {SHAPES}")


def multiplicative_noise_cov(shape: str) -> np.ndarray:
    return {"rectangle": np.eye(2) / 3.0, "ellipse": np.eye(2) / 4.0}[shape]


def generate_measurements(truth: GroundTruthStep, node: SensorNode, shape: str,
                          rate: float, rng: np.random.Generator) -> np.ndarray:
    """Measurements of one node for one scan, shape ``(n, 2)``.

    Empty when the object centroid is outside the node's field of view;
    otherwise ``n = max(1, Poisson(rate))``.
    """
    if not in_fov(node, truth.kin.position):
        return np.zeros((0, 2))
    n = max(1, int(rng.poisson(rate)))
    h = sample_multiplicative_noise(shape, n, rng)
    s = coefficient_matrix(truth.kin.velocity, truth.ext)
    noise = rng.multivariate_normal(np.zeros(2), node.meas_cov, size=n)
    return (H @ truth.kin.vector)[None, :] + h @ s.T + noise


@dataclass(frozen=True)
class NodeMeasurementSlice:
    """One sequential index of a scan: a measurement per node or absence."""

    measurements: np.ndarray  # (N, 2); rows of absent nodes are zero
    present: np.ndarray  # (N,) bool

    @classmethod
    def from_optional(cls, items: Sequence) -> "NodeMeasurementSlice":
        y = np.zeros((len(items), 2))
        present = np.zeros(len(items), dtype=bool)
        for s, item in enumerate(items):
            if item is not None:
                y[s] = item
                present[s] = True
        return cls(y, present)

    @classmethod
    def empty(cls, n_nodes: int) -> "NodeMeasurementSlice":
        return cls(np.zeros((n_nodes, 2)), np.zeros(n_nodes, dtype=bool))


@dataclass(frozen=True)
class MeasurementBatch:
    """All measurements of one scan aligned by sequential index.

    ``y[i, s]`` is the ``i``-th measurement of node ``s`` when
    ``present[i, s]``; nodes with fewer measurements are padded with absence.
    """

    y: np.ndarray  # (n_k, N, 2)
    present: np.ndarray  # (n_k, N)

    @classmethod
    def from_node_lists(cls, per_node: Sequence[np.ndarray]) -> "MeasurementBatch":
        n_nodes = len(per_node)
        n_k = max((len(m) for m in per_node), default=0)
        y = np.zeros((n_k, n_nodes, 2))
        present = np.zeros((n_k, n_nodes), dtype=bool)
        for s, m in enumerate(per_node):
            k = len(m)
            y[:k, s] = m
            present[:k, s] = True
        return cls(y, present)

    @property
    def n_indices(self) -> int:
        return self.y.shape[0]

    def slices(self) -> Iterator[NodeMeasurementSlice]:
        for i in range(self.n_indices):
            yield NodeMeasurementSlice(self.y[i], self.present[i])

    def node_measurements(self, s: int) -> np.ndarray:
        return self.y[self.present[:, s], s]


def measurement_rng(run_seed: int, step: int, node_id: int) -> np.random.Generator:
    """Independent, replayable stream for one (run, scan, node) triple."""
    return np.random.default_rng([int(run_seed), int(step), int(node_id)])


def generate_scan(truth: GroundTruthStep, network: SensorNetwork, shape: str, rate: float,
                  run_seed: int, step: int) -> MeasurementBatch:
    per_node = [generate_measurements(truth, node, shape, rate,
                                      measurement_rng(run_seed, step, node.id))
                for node in network.nodes]
    return MeasurementBatch.from_node_lists(per_node)
