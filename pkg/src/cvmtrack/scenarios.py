"""Scenario parameter sets and ground-truth trajectories.

Three built-in scenarios are provided:

``s1``  single sensor, rectangular object moving along its orientation;
``s2``  as ``s1`` but the object keeps a constant orientation of pi/4 while
        its velocity direction changes (drift / sideslip motion);
``s3``  9-node sensor network over [0, 500]^2 tracking an elliptic object.

A scenario round-trips through a plain key/value document (see
:meth:`ScenarioConfig.to_dict`). Documents may name a ``base`` scenario and
override a subset of its keys; unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from ._linalg import is_spd
from .errors import ConfigurationError
from .filter_central import TrackingModels
from .filter_distributed import CONVERGED, UNCORRELATED, ConsensusConfig
from .model import (DynamicsModel, ExtentState, InfoEstimate, KinematicState, NoiseModel,
                    wrap_angle)
from .network import SHAPES, GroundTruthStep, SensorNetwork, SensorNode, Topology

PRIOR_MODES = ("equal", "uncorrelated_unequal", "correlated_unequal")
PRIOR_CASES = ("auto", CONVERGED, UNCORRELATED)


def _matrix(value, name, shape) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.shape != shape:
        raise ConfigurationError(f"{name}: expected shape {shape}, got {a.shape}")
    return a


def _spd(value, name, n) -> np.ndarray:
    a = _matrix(value, name, (n, n))
    if not is_spd(a):
        raise ConfigurationError(f"{name} must be symmetric positive definite")
    return a


def _psd(value, name, n) -> np.ndarray:
    a = _matrix(value, name, (n, n))
    if not np.allclose(a, a.T) or np.linalg.eigvalsh(a)[0] < 0:
        raise ConfigurationError(f"{name} must be symmetric positive semi-definite")
    return a


def _diag(*values) -> list:
    return np.diag(np.asarray(values, dtype=float)).tolist()


def _ext_diag(angle, l1, l2) -> list:
    """Extent covariance from table entries, which list the angle first.

    The state order is ``(l1, l2, beta)``.
    """
    return _diag(l1, l2, angle)


# ---------------------------------------------------------------------------
# document schema


@dataclass(frozen=True)
class TrajectorySpec:
    """Constant-speed path through ``waypoints`` with corners rounded by
    circular arcs of ``turn_radius``. With ``orientation`` set the body keeps
    that fixed orientation; otherwise the sideslip is the constant ``sideslip``.
    """

    waypoints: list
    speed: float
    turn_radius: float
    sideslip: float = 0.0
    orientation: float | None = None


@dataclass(frozen=True)
class NetworkSpec:
    positions: list
    sensing_range: float
    meas_cov: list
    edges: list


@dataclass(frozen=True)
class PriorInitPolicy:
    """How node priors are initialised.

    ``equal``: one draw shared by every node with covariances ``kin_cov`` /
    ``ext_cov``. The unequal modes scale ``kin_cov_unequal`` /
    ``ext_cov_unequal`` elementwise by uniform(0, 1) draws per node; the
    correlated mode couples the per-node mean perturbations with coefficient
    ``rho``. ``central_*`` (optional) set the centralized filter's prior
    covariance in the unequal modes.
    """

    mode: str
    kin_cov: list
    ext_cov: list
    kin_cov_unequal: list | None = None
    ext_cov_unequal: list | None = None
    rho: float = 0.0
    central_kin_cov: list | None = None
    central_ext_cov: list | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    scan_period: float
    scan_count: int
    kin_proc_cov: list
    ext_proc_cov: list
    mult_cov: list
    shape: str
    semi_lengths: list
    measurement_rate: float
    network: NetworkSpec
    prior: PriorInitPolicy
    trajectory: TrajectorySpec
    consensus_rate_scale: float = 0.65
    consensus_iterations: int = 10
    prior_case: str = "auto"
    monte_carlo_runs: int = 50

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in _NESTED:
                v = {g.name: copy.deepcopy(getattr(v, g.name)) for g in fields(v)}
            out[f.name] = copy.deepcopy(v)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        doc = dict(doc)
        base = doc.pop("base", None)
        if base is not None:
            doc = _merge(get_scenario(base).to_dict(), doc)
        cfg = _build(cls, doc, "")
        cfg.validate()
        return cfg

    # -- derived objects ---------------------------------------------------
    def dynamics(self) -> DynamicsModel:
        return DynamicsModel.nearly_constant_velocity(
            self.scan_period, np.asarray(self.kin_proc_cov, float),
            np.asarray(self.ext_proc_cov, float))

    def build_network(self) -> SensorNetwork:
        pos = np.asarray(self.network.positions, dtype=float).reshape(-1, 2)
        topo = Topology.from_edges(len(pos), self.network.edges)
        nodes = [SensorNode(i, p, float(self.network.sensing_range),
                            np.asarray(self.network.meas_cov, float))
                 for i, p in enumerate(pos)]
        return SensorNetwork(tuple(nodes), topo)

    def models(self, network: SensorNetwork | None = None) -> TrackingModels:
        network = network or self.build_network()
        return TrackingModels(self.dynamics(),
                              NoiseModel(np.asarray(self.mult_cov, float), network.meas_covs))

    def resolved_prior_case(self) -> str:
        if self.prior_case != "auto":
            return self.prior_case
        return UNCORRELATED if self.prior.mode == "uncorrelated_unequal" else CONVERGED

    def consensus(self, topology: Topology, iterations: int | None = None) -> ConsensusConfig:
        dmax = max(topology.max_degree, 1)
        return ConsensusConfig(
            rate=self.consensus_rate_scale / dmax,
            iterations=int(self.consensus_iterations if iterations is None else iterations),
            prior_case=self.resolved_prior_case())

    def validate(self) -> None:
        if self.scan_period <= 0:
            raise ConfigurationError("scan_period must be positive")
        if self.scan_count < 1:
            raise ConfigurationError("scan_count must be >= 1")
        if self.monte_carlo_runs < 1:
            raise ConfigurationError("monte_carlo_runs must be >= 1")
        if self.consensus_iterations < 1:
            raise ConfigurationError("consensus_iterations must be >= 1")
        if not 0.0 < self.consensus_rate_scale < 1.0:
            raise ConfigurationError("consensus_rate_scale must lie in (0, 1)")
        if self.prior_case not in PRIOR_CASES:
            raise ConfigurationError(f"prior_case must be one of {PRIOR_CASES}")
        if self.shape not in SHAPES:
            raise ConfigurationError(f"shape must be one of {SHAPES}")
        if self.measurement_rate <= 0:
            raise ConfigurationError("measurement_rate must be positive")
        lengths = np.asarray(self.semi_lengths, dtype=float)
        if lengths.shape != (2,) or np.any(lengths <= 0):
            raise ConfigurationError("semi_lengths must be two positive numbers")
        _psd(self.kin_proc_cov, "kin_proc_cov", 4)
        _psd(self.ext_proc_cov, "ext_proc_cov", 3)
        _spd(self.mult_cov, "mult_cov", 2)
        _spd(self.network.meas_cov, "network.meas_cov", 2)
        if self.network.sensing_range <= 0:
            raise ConfigurationError("network.sensing_range must be positive")
        p = self.prior
        if p.mode not in PRIOR_MODES:
            raise ConfigurationError(f"prior.mode must be one of {PRIOR_MODES}")
        _spd(p.kin_cov, "prior.kin_cov", 4)
        _spd(p.ext_cov, "prior.ext_cov", 3)
        if p.mode != "equal":
            if p.kin_cov_unequal is None or p.ext_cov_unequal is None:
                raise ConfigurationError("unequal prior modes need kin_cov_unequal and ext_cov_unequal")
            _spd(p.kin_cov_unequal, "prior.kin_cov_unequal", 4)
            _spd(p.ext_cov_unequal, "prior.ext_cov_unequal", 3)
        if not 0.0 <= p.rho < 1.0:
            raise ConfigurationError("prior.rho must lie in [0, 1)")
        for name in ("central_kin_cov", "central_ext_cov"):
            val = getattr(p, name)
            if val is not None:
                _spd(val, f"prior.{name}", 4 if "kin" in name else 3)
        t = self.trajectory
        if t.speed <= 0:
            raise ConfigurationError("trajectory.speed must be positive")
        if t.turn_radius < 0:
            raise ConfigurationError("trajectory.turn_radius must be non-negative")
        net = self.build_network()
        self.consensus(net.topology).validate(net.topology)


_NESTED = {"network": NetworkSpec, "prior": PriorInitPolicy, "trajectory": TrajectorySpec}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k in _NESTED and isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def _build(cls, doc: Any, where: str):
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{where or 'document'}: expected a mapping")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigurationError(f"{where or 'document'}: unknown keys {unknown}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in doc:
            continue
        v = doc[f.name]
        if cls is ScenarioConfig and f.name in _NESTED:
            v = _build(_NESTED[f.name], v, f.name)
        kwargs[f.name] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{where or 'document'}: {exc}") from exc


def load_scenario(source: str | Path) -> ScenarioConfig:
    """Resolve a built-in scenario name or read a JSON scenario document."""
    if str(source).lower() in SCENARIOS:
        return get_scenario(str(source).lower())
    path = Path(source)
    if not path.exists():
        raise ConfigurationError(f"no built-in scenario or file named {source!r}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    return ScenarioConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# built-in scenarios


def _single_node_network(meas_cov) -> NetworkSpec:
    return NetworkSpec(positions=[[0.0, 0.0]], sensing_range=1.0e5, meas_cov=meas_cov, edges=[])


def build_s1() -> ScenarioConfig:
    """Rectangle (3 m x 4 m sides) moving along its orientation, one sensor."""
    return ScenarioConfig(
        name="s1",
        scan_period=3.0,
        scan_count=100,
        kin_proc_cov=_diag(50, 50, 1, 1),
        ext_proc_cov=_ext_diag(0.3, 1 / 500, 1 / 220),
        mult_cov=_diag(1 / 3, 1 / 3),
        shape="rectangle",
        semi_lengths=[1.5, 2.0],
        measurement_rate=7.0,
        network=_single_node_network(_diag(1 / 3, 1 / 3)),
        prior=PriorInitPolicy(mode="equal", kin_cov=_diag(2, 2, 1 / 5, 1 / 5),
                              ext_cov=_ext_diag(0.36, 1 / 500, 1 / 50)),
        trajectory=TrajectorySpec(waypoints=[[0.0, 0.0], [220.0, 0.0], [220.0, 260.0]],
                                  speed=1.5, turn_radius=60.0, sideslip=0.0),
        monte_carlo_runs=50,
    )


def build_s2() -> ScenarioConfig:
    """As s1, but the body orientation stays at pi/4 (drift motion)."""
    s1 = build_s1()
    doc = s1.to_dict()
    doc.update(
        name="s2",
        ext_proc_cov=_ext_diag(0.5, 1 / 400, 1 / 300),
        prior={**doc["prior"], "ext_cov": _ext_diag(0.01, 1 / 500, 1 / 100)},
        trajectory={**doc["trajectory"], "orientation": float(np.pi / 4), "sideslip": 0.0},
    )
    return ScenarioConfig.from_dict(doc)


S3_GRID = (125.0, 250.0, 375.0)
# a 9-cycle through the 3x3 grid: outer ring with the centre node spliced in
S3_EDGES = [[0, 1], [1, 2], [2, 5], [5, 8], [8, 7], [7, 6], [6, 3], [3, 4], [4, 0]]


def build_s3(prior_mode: str = "equal") -> ScenarioConfig:
    """9-node network over [0, 500]^2 tracking an ellipse with 35 m / 30 m semi-axes."""
    return ScenarioConfig(
        name="s3" if prior_mode == "equal" else f"s3-{prior_mode.replace('_', '-')}",
        scan_period=5.0,
        scan_count=40,
        kin_proc_cov=_diag(100, 100, 1, 1),
        ext_proc_cov=_ext_diag(2e-3, 1e-3, 1e-4),
        mult_cov=_diag(1 / 4, 1 / 4),
        shape="ellipse",
        semi_lengths=[35.0, 30.0],
        measurement_rate=10.0,
        network=NetworkSpec(positions=[[x, y] for y in S3_GRID for x in S3_GRID],
                            sensing_range=200.0, meas_cov=_diag(40, 20), edges=S3_EDGES),
        prior=PriorInitPolicy(mode=prior_mode, kin_cov=_diag(50, 50, 10, 10),
                              ext_cov=_ext_diag(0.01, 0.1, 0.1),
                              kin_cov_unequal=_diag(100, 100, 10, 10),
                              ext_cov_unequal=_ext_diag(1, 7, 7),
                              rho=0.5 if prior_mode == "correlated_unequal" else 0.0,
                              central_kin_cov=_diag(2, 2, 1 / 2, 1 / 2),
                              central_ext_cov=_ext_diag(2e-3, 1e-3, 1e-4)),
        trajectory=TrajectorySpec(
            waypoints=[[25.0, 300.0], [230.0, 300.0], [300.0, 120.0], [475.0, 120.0]],
            speed=100 / 36, turn_radius=60.0, sideslip=0.0),
        consensus_rate_scale=0.65,
        consensus_iterations=10,
        monte_carlo_runs=50,
    )


SCENARIOS = {
    "s1": build_s1,
    "s2": build_s2,
    "s3": build_s3,
    "s3-uncorrelated-unequal": lambda: build_s3("uncorrelated_unequal"),
    "s3-correlated-unequal": lambda: build_s3("correlated_unequal"),
}


def get_scenario(name: str) -> ScenarioConfig:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}") from None


# ---------------------------------------------------------------------------
# trajectories


def _path_segments(waypoints: np.ndarray, radius: float):
    """Lines and fillet arcs as (kind, length, data) tuples."""
    dirs = np.diff(waypoints, axis=0)
    lengths = np.linalg.norm(dirs, axis=1)
    if np.any(lengths <= 0):
        raise ConfigurationError("consecutive waypoints must differ")
    units = dirs / lengths[:, None]
    cut_in = np.zeros(len(units))
    cut_out = np.zeros(len(units))
    arcs = []
    for j in range(1, len(waypoints) - 1):
        u0, u1 = units[j - 1], units[j]
        turn = np.arctan2(u0[0] * u1[1] - u0[1] * u1[0], float(u0 @ u1))
        t = radius * np.tan(abs(turn) / 2.0)
        cut_out[j - 1] = t
        cut_in[j] = t
        arcs.append((waypoints[j] - t * u0, u0, turn))
    if np.any(cut_in + cut_out > lengths + 1e-9):
        raise ConfigurationError("turn radius too large for the waypoint spacing")
    segments = []
    for j in range(len(units)):
        start = waypoints[j] + cut_in[j] * units[j]
        segments.append(("line", lengths[j] - cut_in[j] - cut_out[j], (start, units[j])))
        if j < len(arcs):
            start, u0, turn = arcs[j]
            segments.append(("arc", radius * abs(turn), (start, u0, turn, radius)))
    return segments


def _point_on(segment, s: float) -> np.ndarray:
    kind, length, data = segment
    if kind == "line":
        start, u = data
        return start + s * u
    start, u0, turn, radius = data
    sign = 1.0 if turn >= 0 else -1.0
    normal = sign * np.array([-u0[1], u0[0]])
    center = start + radius * normal
    phi = sign * s / radius
    rel = start - center
    c, sn = np.cos(phi), np.sin(phi)
    return center + np.array([c * rel[0] - sn * rel[1], sn * rel[0] + c * rel[1]])


def path_length(spec: TrajectorySpec) -> float:
    segs = _path_segments(np.asarray(spec.waypoints, float), float(spec.turn_radius))
    return float(sum(seg[1] for seg in segs))


def build_truth(config: ScenarioConfig) -> list[GroundTruthStep]:
    """Ground truth at every scan: constant speed along the rounded waypoint path."""
    spec = config.trajectory
    wp = np.asarray(spec.waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[1] != 2 or len(wp) < 2:
        raise ConfigurationError("trajectory needs at least two 2-D waypoints")
    step = spec.speed * config.scan_period
    gaps = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    if np.any(gaps < step):
        raise ConfigurationError("waypoints closer than one scan step")
    segments = _path_segments(wp, float(spec.turn_radius))
    total = sum(seg[1] for seg in segments)
    n = config.scan_count
    if (n - 1) * step > total + 1e-9:
        raise ConfigurationError(
            f"path of {total:.1f} m too short for {n} scans of {step:.2f} m")
    # one extra sample for the forward difference at the last scan
    arc = np.minimum(np.arange(n + 1) * step, total)
    bounds = np.cumsum([0.0] + [seg[1] for seg in segments])
    pos = np.empty((n + 1, 2))
    for k, s in enumerate(arc):
        j = min(np.searchsorted(bounds, s, side="right") - 1, len(segments) - 1)
        pos[k] = _point_on(segments[j], s - bounds[j])
    vel = np.diff(pos, axis=0) / config.scan_period
    if np.hypot(*vel[-1]) < 1e-9:
        vel[-1] = vel[-2]
    lengths = np.asarray(config.semi_lengths, dtype=float)
    out = []
    for k in range(n):
        heading = np.arctan2(vel[k, 1], vel[k, 0])
        if spec.orientation is not None:
            beta = wrap_angle(heading - spec.orientation)
        else:
            beta = wrap_angle(spec.sideslip)
        out.append(GroundTruthStep(KinematicState(pos[k], vel[k]), ExtentState(lengths, beta)))
    return out


# ---------------------------------------------------------------------------
# priors


@dataclass
class Priors:
    nodes: list  # [(InfoEstimate kin, InfoEstimate ext)] per node
    central: tuple  # (InfoEstimate kin, InfoEstimate ext)


def _perturb(truth_vec, cov, z):
    return truth_vec + np.sqrt(np.diag(cov)) * z if _is_diag(cov) else \
        truth_vec + np.linalg.cholesky(cov) @ z


def _is_diag(a) -> bool:
    return np.count_nonzero(a - np.diag(np.diag(a))) == 0


def draw_priors(config: ScenarioConfig, truth0: GroundTruthStep, n_nodes: int,
                rng: np.random.Generator) -> Priors:
    """Prior estimates for every node and for the centralized filter.

    Prior means are the truth perturbed by a draw from the prior covariance.
    """
    p = config.prior
    x_true = truth0.kin.vector
    p_true = truth0.ext.vector

    def estimate(kcov, ecov, zk, ze):
        xm = _perturb(x_true, kcov, zk)
        pm = _perturb(p_true, ecov, ze)
        pm[2] = wrap_angle(pm[2])
        return (InfoEstimate.from_covariance(xm, kcov), InfoEstimate.from_covariance(pm, ecov))

    if p.mode == "equal":
        kcov = np.asarray(p.kin_cov, float)
        ecov = np.asarray(p.ext_cov, float)
        shared = estimate(kcov, ecov, rng.standard_normal(4), rng.standard_normal(3))
        nodes = [(shared[0].copy(), shared[1].copy()) for _ in range(n_nodes)]
        return Priors(nodes, (shared[0].copy(), shared[1].copy()))

    kbase = np.asarray(p.kin_cov_unequal, float)
    ebase = np.asarray(p.ext_cov_unequal, float)
    rho = p.rho if p.mode == "correlated_unequal" else 0.0
    zk_common = rng.standard_normal(4)
    ze_common = rng.standard_normal(3)
    nodes = []
    for _ in range(n_nodes):
        kcov = kbase * np.diag(rng.uniform(0.0, 1.0, 4))
        ecov = ebase * np.diag(rng.uniform(0.0, 1.0, 3))
        zk = np.sqrt(rho) * zk_common + np.sqrt(1.0 - rho) * rng.standard_normal(4)
        ze = np.sqrt(rho) * ze_common + np.sqrt(1.0 - rho) * rng.standard_normal(3)
        nodes.append(estimate(kcov, ecov, zk, ze))
    kc = np.asarray(p.central_kin_cov if p.central_kin_cov is not None else p.kin_cov, float)
    ec = np.asarray(p.central_ext_cov if p.central_ext_cov is not None else p.ext_cov, float)
    central = estimate(kc, ec, rng.standard_normal(4), rng.standard_normal(3))
    return Priors(nodes, central)
