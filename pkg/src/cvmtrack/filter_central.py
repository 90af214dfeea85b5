"""Centralized WLS filter (CWLSF).

At every sequential index the fusion centre adds the information of one
measurement from each node. The kinematic update uses the pseudo-linear
position model, the extent update the quadratic pseudo-measurement model;
both are linearized at the estimates of the previous index.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple

import numpy as np

from . import kernels
from ._linalg import spd_inv, spd_solve, symmetrize
from .errors import ConditioningError, DegenerateInputError
from .model import DynamicsModel, InfoEstimate, NoiseModel, wrap_angle
from .network import MeasurementBatch, NodeMeasurementSlice


@dataclass(frozen=True)
class TrackingModels:
    dynamics: DynamicsModel
    noise: NoiseModel


@dataclass
class CentralFilterState:
    kin: InfoEstimate
    ext: InfoEstimate
    seq_index: int = 0


class NodeTerms(NamedTuple):
    """Per-node information contributions ``U`` (matrices) and ``u`` (vectors)."""

    kin_mat: np.ndarray  # (N, 4, 4)
    kin_vec: np.ndarray  # (N, 4)
    ext_mat: np.ndarray  # (N, 3, 3)
    ext_vec: np.ndarray  # (N, 3)


def check_status(status: int) -> None:
    if status == kernels.STATUS_OK:
        return
    if status == kernels.STATUS_DEGENERATE:
        raise DegenerateInputError("velocity estimate too close to zero to linearize the model")
    if status == kernels.STATUS_INDEFINITE:
        raise ConditioningError("pseudo-measurement noise covariance is indefinite")
    raise ConditioningError("equivalent kinematic noise covariance is not positive definite")


def batched_node_terms(kin_means, kin_covs, ext_means, ext_covs,
                       slice_: NodeMeasurementSlice, noise: NoiseModel) -> NodeTerms:
    """Contributions of every node, each linearized at its own prior."""
    *terms, status = kernels.node_terms(kin_means, kin_covs, ext_means, ext_covs,
                                        noise.mult_cov, noise.meas_cov,
                                        slice_.measurements, slice_.present)
    check_status(status)
    return NodeTerms(*terms)


def node_contributions(state: CentralFilterState, slice_: NodeMeasurementSlice,
                       models: TrackingModels) -> NodeTerms:
    n = models.noise.n_nodes
    return batched_node_terms(
        np.tile(state.kin.mean, (n, 1)), np.tile(state.kin.covariance(), (n, 1, 1)),
        np.tile(state.ext.mean, (n, 1)), np.tile(state.ext.covariance(), (n, 1, 1)),
        slice_, models.noise)


def _wls(prior: InfoEstimate, mat: np.ndarray, vec: np.ndarray) -> InfoEstimate:
    info = symmetrize(prior.info + mat)
    mean = spd_solve(info, prior.info @ prior.mean + vec)
    return InfoEstimate(mean, info)


def update_kinematics(state: CentralFilterState, slice_: NodeMeasurementSlice,
                      models: TrackingModels, terms: NodeTerms | None = None) -> CentralFilterState:
    if not np.any(slice_.present):
        return state
    if terms is None:
        terms = node_contributions(state, slice_, models)
    kin = _wls(state.kin, terms.kin_mat.sum(axis=0), terms.kin_vec.sum(axis=0))
    return replace(state, kin=kin)


def update_extent(state: CentralFilterState, slice_: NodeMeasurementSlice,
                  models: TrackingModels, terms: NodeTerms | None = None) -> CentralFilterState:
    if not np.any(slice_.present):
        return state
    if terms is None:
        terms = node_contributions(state, slice_, models)
    ext = _wls(state.ext, terms.ext_mat.sum(axis=0), terms.ext_vec.sum(axis=0))
    ext.mean[2] = wrap_angle(ext.mean[2])
    return replace(state, ext=ext)


def sequential_step(state: CentralFilterState, slice_: NodeMeasurementSlice,
                    models: TrackingModels) -> CentralFilterState:
    """Process one sequential index; both updates linearize at the index-1 estimates."""
    if np.any(slice_.present):
        terms = node_contributions(state, slice_, models)
        kin = update_kinematics(state, slice_, models, terms).kin
        ext = update_extent(state, slice_, models, terms).ext
        state = CentralFilterState(kin, ext, state.seq_index)
    return replace(state, seq_index=state.seq_index + 1)


def sequential_scan(state: CentralFilterState, slices: Iterable[NodeMeasurementSlice],
                    models: TrackingModels) -> CentralFilterState:
    if isinstance(slices, MeasurementBatch):
        slices = slices.slices()
    for slice_ in slices:
        state = sequential_step(state, slice_, models)
    return state


def predict(est: InfoEstimate, transition: np.ndarray, proc_cov: np.ndarray) -> InfoEstimate:
    """Information-form prediction through a linear transition."""
    cov = symmetrize(transition @ est.covariance() @ transition.T + proc_cov)
    return InfoEstimate(transition @ est.mean, spd_inv(cov), cov)


def time_update(state: CentralFilterState, dynamics: DynamicsModel) -> CentralFilterState:
    kin = predict(state.kin, dynamics.kin_transition, dynamics.kin_proc_cov)
    ext = predict(state.ext, dynamics.ext_transition, dynamics.ext_proc_cov)
    ext.mean[2] = wrap_angle(ext.mean[2])
    return CentralFilterState(kin, ext, 0)


class Track(NamedTuple):
    """Posterior (after the measurement update) estimates at every scan."""

    kin_mean: np.ndarray  # (K, 4)
    kin_info: np.ndarray  # (K, 4, 4)
    ext_mean: np.ndarray  # (K, 3)
    ext_info: np.ndarray  # (K, 3, 3)


def run_cwlsf(prior_kin: InfoEstimate, prior_ext: InfoEstimate,
              scans: Iterable[MeasurementBatch], models: TrackingModels) -> Track:
    """Run the centralized filter over a sequence of scans."""
    state = CentralFilterState(prior_kin.copy(), prior_ext.copy())
    out = ([], [], [], [])
    for k, batch in enumerate(scans):
        if k > 0:
            state = time_update(state, models.dynamics)
        state = sequential_scan(state, batch, models)
        out[0].append(state.kin.mean)
        out[1].append(state.kin.info)
        out[2].append(state.ext.mean)
        out[3].append(state.ext.info)
    return Track(*(np.array(a) for a in out))
