from __future__ import annotations

import json

import numpy as np
import pytest

from cvmtrack.errors import ConfigurationError
from cvmtrack.scenarios import (SCENARIOS, ScenarioConfig, build_s1, build_s2, build_s3, build_truth,
                                draw_priors, get_scenario, load_scenario, path_length)


@pytest.mark.parametrize("name", list(SCENARIOS))
def test_round_trip_is_bit_exact(name):
    cfg = get_scenario(name)
    again = ScenarioConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg
    assert again.to_json() == cfg.to_json()


def test_unknown_keys_rejected():
    doc = build_s1().to_dict()
    doc["speed_of_light"] = 3e8
    with pytest.raises(ConfigurationError, match="unknown"):
        ScenarioConfig.from_dict(doc)
    doc = build_s1().to_dict()
    doc["trajectory"]["wobble"] = 1
    with pytest.raises(ConfigurationError, match="unknown"):
        ScenarioConfig.from_dict(doc)


def test_base_override(tmp_path):
    path = tmp_path / "mine.json"
    path.write_text(json.dumps({"base": "s3", "name": "mine", "measurement_rate": 4.0,
                                "trajectory": {"speed": 2.0}}))
    cfg = load_scenario(path)
    ref = build_s3()
    assert cfg.name == "mine" and cfg.measurement_rate == 4.0 and cfg.trajectory.speed == 2.0
    assert cfg.trajectory.waypoints == ref.trajectory.waypoints
    assert cfg.kin_proc_cov == ref.kin_proc_cov


@pytest.mark.parametrize("patch", [
    {"scan_period": 0.0}, {"shape": "blob"}, {"semi_lengths": [1.0, -1.0]},
    {"kin_proc_cov": [[1.0, 0], [0, 1.0]]}, {"consensus_rate_scale": 1.5},
    {"prior": {"mode": "weird"}}, {"prior": {"rho": 1.0}}, {"trajectory": {"speed": -1.0}},
    {"network": {"edges": [[0, 1]]}},
])
def test_invalid_documents(patch):
    with pytest.raises(ConfigurationError):
        ScenarioConfig.from_dict({"base": "s3", **patch})


def test_load_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_scenario(bad)
    with pytest.raises(ConfigurationError):
        get_scenario("s9")


def test_s1_table_values():
    cfg = build_s1()
    dyn = cfg.dynamics()
    t = 3.0
    phi = np.array([[1, 0, t, 0], [0, 1, 0, t], [0, 0, 1, 0], [0, 0, 0, 1]], float)
    assert np.array_equal(dyn.kin_transition, phi)
    assert np.array_equal(np.diag(cfg.kin_proc_cov), [50, 50, 1, 1])
    # extent vectors are ordered (l1, l2, beta)
    assert np.allclose(np.diag(cfg.ext_proc_cov), [1 / 500, 1 / 220, 0.3])
    assert np.allclose(np.diag(cfg.prior.ext_cov), [1 / 500, 1 / 50, 0.36])
    assert 2 * np.array(cfg.semi_lengths).prod() == 6.0 and sorted(2 * np.array(cfg.semi_lengths)) == [3, 4]
    truth = build_truth(cfg)
    assert np.array_equal(truth[0].kin.position, [0.0, 0.0])
    assert all(t.ext.sideslip == 0.0 for t in truth)


def test_s2_orientation_constant():
    cfg = build_s2()
    assert np.allclose(np.diag(cfg.prior.ext_cov), [1 / 500, 1 / 100, 0.01])
    truth = build_truth(cfg)
    alpha = np.array([t.orientation for t in truth])
    assert np.allclose(alpha, np.pi / 4, atol=1e-12)
    betas = np.array([t.ext.sideslip for t in truth])
    assert np.abs(betas).max() > 0.5


@pytest.mark.parametrize("name", list(SCENARIOS))
def test_alpha_identity(name):
    for t in build_truth(get_scenario(name)):
        v = t.kin.velocity
        d = np.angle(np.exp(1j * (t.orientation - (np.arctan2(v[1], v[0]) - t.ext.sideslip))))
        assert abs(d) < 1e-9


@pytest.mark.parametrize("name", ["s1", "s3"])
def test_speed_on_straight_legs(name):
    cfg = get_scenario(name)
    pos = np.array([t.kin.position for t in build_truth(cfg)])
    steps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    expected = cfg.trajectory.speed * cfg.scan_period
    # arcs shorten chords slightly; the first steps are on a straight leg
    assert np.allclose(steps[:5], expected, rtol=1e-12)
    assert np.all(steps <= expected + 1e-9)


def test_straight_line_has_constant_velocity():
    cfg = ScenarioConfig.from_dict({"base": "s3", "trajectory": {"waypoints": [[0, 0], [400, 300]]},
                                    "scan_count": 30})
    v = np.array([t.kin.velocity for t in build_truth(cfg)])
    assert np.allclose(v, v[0], atol=1e-12)
    assert np.isclose(np.linalg.norm(v[0]), 100 / 36)


def test_s3_geometry():
    cfg = build_s3()
    net = cfg.build_network()
    assert net.size == 9 and net.topology.max_degree == 2
    assert cfg.consensus(net.topology).rate == 0.325
    pos = np.array([t.kin.position for t in build_truth(cfg)])
    assert np.array_equal(pos[0], [25.0, 300.0])
    assert pos.min() >= 0 and pos.max() <= 500
    assert path_length(cfg.trajectory) >= (cfg.scan_count - 1) * cfg.trajectory.speed * cfg.scan_period


def test_waypoint_errors():
    with pytest.raises(ConfigurationError):
        build_truth(ScenarioConfig.from_dict(
            {"base": "s3", "trajectory": {"waypoints": [[0, 0], [5, 0], [400, 0]]}}))
    with pytest.raises(ConfigurationError):
        build_truth(ScenarioConfig.from_dict({"base": "s3", "trajectory": {"waypoints": [[0, 0], [100, 0]]}}))
    with pytest.raises(ConfigurationError):
        build_truth(ScenarioConfig.from_dict({"base": "s3", "trajectory": {"waypoints": [[0, 0]]}}))


def test_equal_priors_identical_across_nodes():
    cfg = build_s3()
    pr = draw_priors(cfg, build_truth(cfg)[0], 9, np.random.default_rng(4))
    for k, e in pr.nodes[1:]:
        assert np.array_equal(k.mean, pr.nodes[0][0].mean) and np.array_equal(k.info, pr.nodes[0][0].info)
        assert np.array_equal(e.mean, pr.nodes[0][1].mean) and np.array_equal(e.info, pr.nodes[0][1].info)


@pytest.mark.parametrize("mode", ["uncorrelated_unequal", "correlated_unequal"])
def test_unequal_priors_reproducible_and_distinct(mode):
    cfg = build_s3(mode)
    t0 = build_truth(cfg)[0]
    a = draw_priors(cfg, t0, 9, np.random.default_rng(11))
    b = draw_priors(cfg, t0, 9, np.random.default_rng(11))
    for (ka, ea), (kb, eb) in zip(a.nodes, b.nodes):
        assert np.array_equal(ka.mean, kb.mean) and np.array_equal(ea.info, eb.info)
    assert not np.array_equal(a.nodes[0][0].info, a.nodes[1][0].info)
    bound = np.diag(cfg.prior.kin_cov_unequal)
    for k, _ in a.nodes:
        assert np.all(np.diag(k.covariance()) <= bound * (1 + 1e-12))


def test_prior_correlation_coefficient():
    # across many draws, node perturbations correlate with coefficient rho
    cfg = build_s3("correlated_unequal")
    t0 = build_truth(cfg)[0]
    rng = np.random.default_rng(0)
    z = []
    for _ in range(3000):
        pr = draw_priors(cfg, t0, 2, rng)
        z.append([(k.mean[0] - t0.kin.position[0]) / np.sqrt(k.covariance()[0, 0]) for k, _ in pr.nodes])
    r = np.corrcoef(np.array(z).T)[0, 1]
    assert abs(r - 0.5) < 0.06


def test_equal_prior_nees_matches_dimension():
    cfg = build_s3()
    t0 = build_truth(cfg)[0]
    rng = np.random.default_rng(1)
    vals = []
    for _ in range(4000):
        k, _ = draw_priors(cfg, t0, 1, rng).central
        e = k.mean - t0.kin.vector
        vals.append(e @ k.info @ e)
    assert abs(np.mean(vals) - 4.0) < 0.2


def test_table_constants_stored_once():
    import inspect
    import cvmtrack.scenarios as sc
    src = inspect.getsource(sc)
    for literal in ("1 / 220", "1 / 400", "1 / 300", "2e-3, 1e-3, 1e-4", "100 / 36"):
        assert src.count(literal) == (2 if literal == "2e-3, 1e-3, 1e-4" else 1), literal
