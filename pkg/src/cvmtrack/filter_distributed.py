"""Distributed WLS filter (DWLSF) over a sensor network with naive nodes.

Every node forms information-form quantities from its own prior and (if it
has one) its own measurement, the network runs average consensus on them,
and each node recovers its estimate from the consensus result. With enough
consensus iterations and converged priors the node estimates coincide with
the centralized filter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import kernels
from ._linalg import batched_spd_inverse, symmetrize
from .errors import ConfigurationError
from .filter_central import (
    CentralFilterState, TrackingModels, batched_node_terms, time_update)
from .model import InfoEstimate, wrap_angle
from .network import MeasurementBatch, NodeMeasurementSlice, Topology

CONVERGED = "converged"
UNCORRELATED = "uncorrelated"


@dataclass(frozen=True)
class ConsensusConfig:
    rate: float
    iterations: int
    weight_policy: str = "count"
    prior_case: str = CONVERGED

    def validate(self, topology: Topology) -> None:
        if self.iterations < 1:
            raise ConfigurationError("consensus iterations must be >= 1")
        if topology.max_degree > 0 and not 0.0 < self.rate < 1.0 / topology.max_degree:
            raise ConfigurationError(
                f"consensus rate {self.rate} outside (0, 1/{topology.max_degree})")
        if self.weight_policy != "count":
            raise ConfigurationError(f"unsupported weight policy {self.weight_policy!r}")
        if self.prior_case not in (CONVERGED, UNCORRELATED):
            raise ConfigurationError(f"unknown prior case {self.prior_case!r}")
        if not topology.is_connected:
            raise ConfigurationError("topology is disconnected")


@dataclass
class NodeFilterState:
    node: int
    kin: InfoEstimate
    ext: InfoEstimate


class ConsensusQuantities(NamedTuple):
    kin_info: np.ndarray  # (N, 4, 4)
    kin_vec: np.ndarray  # (N, 4)
    ext_info: np.ndarray  # (N, 3, 3)
    ext_vec: np.ndarray  # (N, 3)

    def pack(self) -> np.ndarray:
        n = self.kin_info.shape[0]
        return np.hstack([self.kin_info.reshape(n, -1), self.kin_vec,
                          self.ext_info.reshape(n, -1), self.ext_vec])

    @classmethod
    def unpack(cls, flat: np.ndarray) -> "ConsensusQuantities":
        n = flat.shape[0]
        return cls(flat[:, :16].reshape(n, 4, 4), flat[:, 16:20],
                   flat[:, 20:29].reshape(n, 3, 3), flat[:, 29:32])


def prior_weight(info: np.ndarray, case: str, network_size: int) -> np.ndarray:
    """Share of a node's prior information entering the network sum.

    Converged priors carry the same (redundant) information on every node, so
    each contributes ``info / |N|``; uncorrelated priors contribute fully.
    """
    if network_size < 1:
        raise ConfigurationError("network size must be >= 1")
    if case == CONVERGED:
        return np.asarray(info, dtype=float) / network_size
    if case == UNCORRELATED:
        return np.asarray(info, dtype=float)
    raise ConfigurationError(f"unknown prior case {case!r}")


def local_consensus_quantities(states: Sequence[NodeFilterState], slice_: NodeMeasurementSlice,
                               models: TrackingModels, case: str) -> ConsensusQuantities:
    """Initial consensus values of all nodes for one sequential index."""
    n = len(states)
    kin_means = np.array([s.kin.mean for s in states])
    ext_means = np.array([s.ext.mean for s in states])
    kin_f = np.array([prior_weight(s.kin.info, case, n) for s in states])
    ext_f = np.array([prior_weight(s.ext.info, case, n) for s in states])
    if np.any(slice_.present):
        terms = batched_node_terms(
            kin_means, np.array([s.kin.covariance() for s in states]),
            ext_means, np.array([s.ext.covariance() for s in states]),
            slice_, models.noise)
    else:
        terms = (np.zeros((n, 4, 4)), np.zeros((n, 4)), np.zeros((n, 3, 3)), np.zeros((n, 3)))
    return ConsensusQuantities(
        kin_f + terms[0],
        np.einsum("nij,nj->ni", kin_f, kin_means) + terms[1],
        ext_f + terms[2],
        np.einsum("nij,nj->ni", ext_f, ext_means) + terms[3],
    )


def average_consensus(values: np.ndarray, topology: Topology, rate: float,
                      iterations: int) -> np.ndarray:
    """``iterations`` rounds of ``a_s <- a_s + rate * sum_j (a_j - a_s)`` over neighbours.

    ``values`` has the node index first; trailing dimensions are averaged
    elementwise.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] != topology.size:
        raise ConfigurationError("one value per node is required")
    if not topology.is_connected:
        raise ConfigurationError("topology is disconnected")
    if topology.max_degree > 0 and not 0.0 < rate < 1.0 / topology.max_degree:
        raise ConfigurationError(f"consensus rate {rate} outside (0, 1/{topology.max_degree})")
    if iterations < 0:
        raise ConfigurationError("iterations must be non-negative")
    flat = values.reshape(values.shape[0], -1)
    out = kernels.average_consensus(flat, topology.adjacency, rate, iterations)
    return out.reshape(values.shape)


def recover_estimates(quantities: ConsensusQuantities, network_size: int,
                      weight: float | None = None) -> list[NodeFilterState]:
    """Node estimates from consensus output: mean = dOmega^-1 dx, info = w * dOmega."""
    w = float(network_size if weight is None else weight)
    k_info = symmetrize(quantities.kin_info)
    e_info = symmetrize(quantities.ext_info)
    k_inv = batched_spd_inverse(k_info)
    e_inv = batched_spd_inverse(e_info)
    k_mean = np.einsum("nij,nj->ni", k_inv, quantities.kin_vec)
    e_mean = np.einsum("nij,nj->ni", e_inv, quantities.ext_vec)
    e_mean[:, 2] = wrap_angle(e_mean[:, 2])
    return [NodeFilterState(s, InfoEstimate(k_mean[s], w * k_info[s], k_inv[s] / w),
                            InfoEstimate(e_mean[s], w * e_info[s], e_inv[s] / w))
            for s in range(k_info.shape[0])]


class DistributedFilter:
    """Per-node DWLSF state machine over one network."""

    def __init__(self, priors: Sequence[tuple[InfoEstimate, InfoEstimate]], topology: Topology,
                 config: ConsensusConfig, models: TrackingModels):
        if len(priors) != topology.size:
            raise ConfigurationError("one prior per node is required")
        if models.noise.n_nodes != topology.size:
            raise ConfigurationError("one measurement covariance per node is required")
        config.validate(topology)
        self.topology = topology
        self.config = config
        self.models = models
        self.states = [NodeFilterState(s, k.copy(), e.copy()) for s, (k, e) in enumerate(priors)]
        # priors stay uncorrelated until the first consensus round mixes them
        self._fused = config.prior_case == CONVERGED

    @property
    def size(self) -> int:
        return self.topology.size

    def current_case(self) -> str:
        return CONVERGED if self._fused else UNCORRELATED

    def step(self, slice_: NodeMeasurementSlice) -> None:
        q = local_consensus_quantities(self.states, slice_, self.models, self.current_case())
        mixed = average_consensus(q.pack(), self.topology, self.config.rate,
                                  self.config.iterations)
        self.states = recover_estimates(ConsensusQuantities.unpack(mixed), self.size)
        self._fused = True

    def scan(self, batch: MeasurementBatch) -> None:
        for slice_ in batch.slices():
            self.step(slice_)

    def time_update(self) -> None:
        out = []
        for s in self.states:
            st = time_update(CentralFilterState(s.kin, s.ext), self.models.dynamics)
            out.append(NodeFilterState(s.node, st.kin, st.ext))
        self.states = out


class NodeTracks(NamedTuple):
    kin_mean: np.ndarray  # (K, N, 4)
    kin_info: np.ndarray  # (K, N, 4, 4)
    ext_mean: np.ndarray  # (K, N, 3)
    ext_info: np.ndarray  # (K, N, 3, 3)


def run_dwlsf(priors: Sequence[tuple[InfoEstimate, InfoEstimate]], topology: Topology,
              scans: Iterable[MeasurementBatch], config: ConsensusConfig,
              models: TrackingModels) -> NodeTracks:
    """Run the distributed filter; returns every node's posterior at every scan."""
    filt = DistributedFilter(priors, topology, config, models)
    out = ([], [], [], [])
    for k, batch in enumerate(scans):
        if k > 0:
            filt.time_update()
        filt.scan(batch)
        out[0].append([s.kin.mean for s in filt.states])
        out[1].append([s.kin.info for s in filt.states])
        out[2].append([s.ext.mean for s in filt.states])
        out[3].append([s.ext.info for s in filt.states])
    return NodeTracks(*(np.array(a) for a in out))
