from __future__ import annotations

import numpy as np
import pytest

from cvmtrack.campaign import simulate_run
from cvmtrack.filter_central import (CentralFilterState, TrackingModels, node_contributions, predict,
                                     run_cwlsf, sequential_scan, sequential_step, time_update,
                                     update_extent, update_kinematics)
from cvmtrack.model import (H, DynamicsModel, ExtentState, InfoEstimate, KinematicState, NoiseModel,
                            kinematic_noise_moments, measurement_residual_cov, pseudo_measurement,
                            pseudo_measurement_matrix, pseudo_noise_moments)
from cvmtrack.network import (GroundTruthStep, MeasurementBatch, NodeMeasurementSlice, SensorNode,
                              generate_measurements)
from cvmtrack.scenarios import get_scenario

from conftest import random_priors, random_spd


def make_models(n_nodes=1, kin_q=None, ext_q=None, cv=None, ch=None, T=1.0):
    dyn = DynamicsModel.nearly_constant_velocity(
        T, np.zeros((4, 4)) if kin_q is None else kin_q, np.zeros((3, 3)) if ext_q is None else ext_q)
    cv = np.array([np.diag([0.5, 0.3])] * n_nodes) if cv is None else cv
    return TrackingModels(dyn, NoiseModel(np.eye(2) / 4 if ch is None else ch, cv))


def stacked_wls(prior: InfoEstimate, rows, targets, weights):
    """Dense whitened least squares of [I; A_s] z = [prior; b_s]."""
    def whiten(w):
        return np.linalg.cholesky(w).T
    a = [whiten(prior.info)]
    b = [whiten(prior.info) @ prior.mean]
    for m, t, w in zip(rows, targets, weights):
        a.append(whiten(w) @ m)
        b.append(whiten(w) @ t)
    a = np.vstack(a)
    b = np.concatenate(b)
    z, *_ = np.linalg.lstsq(a, b, rcond=None)
    return z, a.T @ a


def test_no_detection_leaves_state_unchanged(rng):
    kin, ext = random_priors(rng)
    st = CentralFilterState(kin, ext)
    sl = NodeMeasurementSlice.empty(3)
    models = make_models(3)
    assert update_kinematics(st, sl, models) is st
    assert update_extent(st, sl, models) is st
    out = sequential_scan(st, MeasurementBatch(np.zeros((0, 3, 2)), np.zeros((0, 3), bool)), models)
    assert out is st


@pytest.mark.parametrize("n_nodes", [1, 3])
def test_update_equals_dense_wls_solution(n_nodes, rng):
    for _ in range(10):
        kin, ext = random_priors(rng)
        cv = np.array([random_spd(rng, 2, 1.0) for _ in range(n_nodes)])
        models = make_models(n_nodes, cv=cv)
        y = kin.mean[:2] + rng.normal(0, 3, (n_nodes, 2))
        present = np.ones(n_nodes, bool)
        if n_nodes > 1:
            present[1] = False
        sl = NodeMeasurementSlice(y, present)
        st = sequential_step(CentralFilterState(kin, ext), sl, models)

        rows_x, tx, wx, rows_p, tp, wp = [], [], [], [], [], []
        for s in np.flatnonzero(present):
            noise = NoiseModel(models.noise.mult_cov, cv[s])
            rx = kinematic_noise_moments(kin, ext, noise)
            rows_x.append(H)
            tx.append(y[s])
            wx.append(np.linalg.inv(rx))
            cy = measurement_residual_cov(kin, rx)
            m = pseudo_measurement_matrix(kin, ext, noise)
            mean, rp = pseudo_noise_moments(m, ext, cy)
            rows_p.append(m)
            tp.append(pseudo_measurement(y[s], kin.mean) - mean)
            wp.append(np.linalg.inv(rp))
        xz, xinfo = stacked_wls(kin, rows_x, tx, wx)
        pz, pinfo = stacked_wls(ext, rows_p, tp, wp)
        assert np.allclose(st.kin.mean, xz, rtol=1e-9, atol=1e-9 * np.abs(xz).max())
        assert np.allclose(st.kin.info, xinfo, rtol=1e-9, atol=1e-9 * np.abs(xinfo).max())
        pz[2] = (pz[2] + np.pi) % (2 * np.pi) - np.pi
        assert np.allclose(st.ext.mean, pz, rtol=1e-9, atol=1e-9 * np.abs(pz).max())
        assert np.allclose(st.ext.info, pinfo, rtol=1e-9, atol=1e-9 * np.abs(pinfo).max())
        assert st.seq_index == 1


def test_kinematic_update_is_precision_weighted_average():
    # a single node with zero extent uncertainty: the position update is the
    # scalar-precision average of prior and measurement
    kin = InfoEstimate.from_covariance(np.array([0, 0, 1.0, 0]), np.diag([4.0, 4.0, 1e-12, 1e-12]))
    ext = InfoEstimate.from_covariance(np.array([1e-3, 1e-3, 0]), np.eye(3) * 1e-12)
    models = make_models(1, cv=np.array([np.eye(2)]), ch=np.eye(2) * 1e-12)
    st = update_kinematics(CentralFilterState(kin, ext), NodeMeasurementSlice(np.array([[5.0, -5.0]]), np.array([True])), models)
    assert np.allclose(st.kin.mean[:2], np.array([5.0, -5.0]) * 4 / 5, atol=1e-6)


def test_information_never_decreases(rng):
    for _ in range(20):
        kin, ext = random_priors(rng)
        models = make_models(2)
        sl = NodeMeasurementSlice(kin.mean[:2] + rng.normal(0, 5, (2, 2)), np.array([True, True]))
        st = sequential_step(CentralFilterState(kin, ext), sl, models)
        assert np.linalg.eigvalsh(st.kin.info - kin.info)[0] >= -1e-9 * np.abs(kin.info).max()
        assert np.linalg.eigvalsh(st.ext.info - ext.info)[0] >= -1e-9 * np.abs(ext.info).max()


def test_extent_update_uses_previous_kinematic_estimate(rng):
    kin, ext = random_priors(rng)
    models = make_models(1)
    st0 = CentralFilterState(kin, ext)
    sl = NodeMeasurementSlice(kin.mean[None, :2] + 3.0, np.array([True]))
    both = sequential_step(st0, sl, models)
    ext_only = update_extent(st0, sl, models)
    after_kin = update_kinematics(st0, sl, models)
    chained = update_extent(after_kin, sl, models)
    assert np.array_equal(both.ext.mean, ext_only.ext.mean)
    assert np.array_equal(both.kin.mean, after_kin.kin.mean)
    assert not np.array_equal(both.ext.mean, chained.ext.mean)


def test_time_update_examples():
    est = InfoEstimate(np.array([1.0, 2.0, 3.0, 4.0]), np.eye(4))
    ext = InfoEstimate(np.array([1.0, 2.0, 0.1]), np.eye(3))
    still = DynamicsModel(np.eye(4), np.eye(3), np.zeros((4, 4)), np.zeros((3, 3)), 1.0)
    out = time_update(CentralFilterState(est, ext, 5), still)
    assert np.allclose(out.kin.mean, est.mean) and np.allclose(out.kin.info, est.info)
    assert out.seq_index == 0
    noisy = DynamicsModel(np.eye(4), np.eye(3), np.eye(4), np.eye(3), 1.0)
    assert np.allclose(time_update(CentralFilterState(est, ext), noisy).kin.info, 0.5 * np.eye(4))
    ncv = DynamicsModel.nearly_constant_velocity(3.0, np.eye(4), np.eye(3))
    assert np.allclose(predict(est, ncv.kin_transition, ncv.kin_proc_cov).mean, [10, 14, 3, 4])


def test_naive_scan_then_time_update_is_pure_prediction(rng):
    kin, ext = random_priors(rng)
    models = make_models(2, kin_q=np.eye(4), ext_q=np.eye(3) * 1e-3)
    st = CentralFilterState(kin, ext)
    batch = MeasurementBatch(np.zeros((4, 2, 2)), np.zeros((4, 2), bool))
    a = time_update(sequential_scan(st, batch, models), models.dynamics)
    b = time_update(st, models.dynamics)
    assert np.allclose(a.kin.mean, b.kin.mean) and np.allclose(a.kin.info, b.kin.info)
    assert np.allclose(a.ext.mean, b.ext.mean) and np.allclose(a.ext.info, b.ext.info)


def test_measurement_order_matters_but_both_are_sensible():
    truth = GroundTruthStep(KinematicState([0, 0], [2.0, 0.5]), ExtentState([3.0, 2.0], 0.1))
    node = SensorNode(0, [0, 0], 1e4, np.diag([0.5, 0.5]))
    y = generate_measurements(truth, node, "ellipse", 30.0, np.random.default_rng(4))
    kin = InfoEstimate.from_covariance(truth.kin.vector + [1, -1, 0.1, 0.1], np.diag([4, 4, 0.5, 0.5]))
    ext = InfoEstimate.from_covariance(np.array([2.5, 2.5, 0.0]), np.diag([0.5, 0.5, 0.05]))
    models = make_models(1, cv=np.array([node.meas_cov]))
    fwd = sequential_scan(CentralFilterState(kin, ext), MeasurementBatch.from_node_lists([y]), models)
    rev = sequential_scan(CentralFilterState(kin, ext), MeasurementBatch.from_node_lists([y[::-1]]), models)
    assert not np.allclose(fwd.kin.mean, rev.kin.mean)
    for st in (fwd, rev):
        assert np.linalg.norm(st.kin.mean[:2]) < np.linalg.norm(kin.mean[:2] - truth.kin.position)
        assert st.seq_index == len(y)


def test_semi_lengths_converge_on_long_static_run():
    truth = GroundTruthStep(KinematicState([0, 0], [1.5, 0.0]), ExtentState([3.0, 2.0], 0.0))
    node = SensorNode(0, [0, 0], 1e4, np.diag([0.1, 0.1]))
    models = make_models(1, kin_q=np.diag([1e-4, 1e-4, 1e-6, 1e-6]), ext_q=np.diag([1e-4, 1e-4, 1e-5]),
                         cv=np.array([node.meas_cov]), ch=np.eye(2) / 4)
    rng = np.random.default_rng(0)
    kin = InfoEstimate.from_covariance(truth.kin.vector, np.diag([0.01, 0.01, 1e-4, 1e-4]))
    ext = InfoEstimate.from_covariance(np.array([2.0, 3.0, 0.05]), np.diag([1.0, 1.0, 0.01]))
    # the object is held at the origin, so the kinematic state is not propagated
    still = TrackingModels(DynamicsModel(np.eye(4), np.eye(3), models.dynamics.kin_proc_cov,
                                         models.dynamics.ext_proc_cov, 1.0), models.noise)
    scans = [MeasurementBatch.from_node_lists([generate_measurements(truth, node, "ellipse", 5.0, rng)])
             for _ in range(500)]
    track = run_cwlsf(kin, ext, scans, still)
    before = np.abs(ext.mean[:2] - truth.ext.semi_lengths).sum()
    after = np.abs(track.ext_mean[-1, :2] - truth.ext.semi_lengths).sum()
    assert after < before
    assert after < 0.3


def test_node_contributions_zero_for_absent_nodes(rng):
    kin, ext = random_priors(rng)
    models = make_models(3)
    sl = NodeMeasurementSlice(np.ones((3, 2)), np.array([False, True, False]))
    terms = node_contributions(CentralFilterState(kin, ext), sl, models)
    assert not terms.kin_mat[0].any() and not terms.ext_vec[2].any()
    assert terms.kin_mat[1].any()


def test_s1_campaign_is_bounded():
    cfg = get_scenario("s1")
    for run in range(50):
        out = simulate_run(cfg, run, seed=1, filters=("central",))
        m = out["metrics"][("central", 0)]
        assert m is not None, f"run {run} diverged"
        assert np.all(np.isfinite(m["gwd"]))
        assert m["gwd"].max() < 25.0
