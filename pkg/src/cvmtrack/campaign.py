"""Monte Carlo campaigns: simulate runs, aggregate metrics, export tables."""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, TrackingError
from .filter_central import run_cwlsf
from .filter_distributed import run_dwlsf
from .metrics import EllipticExtentSummary, acee, gwd, nees, ospa
from .network import generate_scan
from .scenarios import ScenarioConfig, build_truth, draw_priors

FILTERS = ("central", "distributed")
METRIC_FILES = ("gwd", "ospa", "acee_kin", "acee_ext", "nees")
CSV_HEADER = ("scan_time", "L", "metric", "mean", "stderr")


@dataclass(frozen=True)
class RunSpec:
    scenario: ScenarioConfig
    filters: tuple = FILTERS
    consensus_iters: tuple = (10,)
    runs: int = 50
    seed: int = 0
    jobs: int = 1

    def validate(self) -> None:
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")
        bad = [f for f in self.filters if f not in FILTERS]
        if bad or not self.filters:
            raise ConfigurationError(f"filters must be drawn from {FILTERS}")
        if "distributed" in self.filters:
            if not self.consensus_iters or any(int(L) < 1 for L in self.consensus_iters):
                raise ConfigurationError("consensus iterations must be >= 1")
        self.scenario.validate()


def run_seed(seed: int, run: int) -> int:
    """Seed of one Monte Carlo run, independent of scheduling."""
    return int(np.random.SeedSequence([int(seed), int(run)]).generate_state(1)[0])


def _summaries(kin, ext):
    return EllipticExtentSummary.from_state(kin, ext)


def _track_metrics(kin, ext, truth_kin, truth_ext, truth_summary, shape):
    """Per-scan GWD and OSPA of a single estimate sequence."""
    k = len(truth_kin)
    g = np.empty(k)
    o = np.empty(k)
    for i in range(k):
        g[i] = gwd(_summaries(kin[i], ext[i]), truth_summary[i])
        o[i] = ospa((kin[i], ext[i]), (truth_kin[i], truth_ext[i]), shape)
    return g, o


def simulate_run(config: ScenarioConfig, run: int, seed: int, filters=FILTERS,
                 consensus_iters=(10,)) -> dict:
    """One Monte Carlo run. Returns per-scan metric arrays keyed by
    ``(filter, L)``; ``None`` marks a diverged filter."""
    rs = run_seed(seed, run)
    truth = build_truth(config)
    network = config.build_network()
    models = config.models(network)
    priors = draw_priors(config, truth[0], network.size, np.random.default_rng(rs))
    scans = [generate_scan(t, network, config.shape, config.measurement_rate, rs, k)
             for k, t in enumerate(truth)]
    tk = np.array([t.kin.vector for t in truth])
    te = np.array([t.ext.vector for t in truth])
    ts = [_summaries(a, b) for a, b in zip(tk, te)]
    out: dict = {}
    timing: dict = {}

    if "central" in filters:
        t0 = time.perf_counter()
        try:
            track = run_cwlsf(*priors.central, scans, models)
            if not (np.all(np.isfinite(track.kin_mean)) and np.all(np.isfinite(track.ext_mean))):
                raise TrackingError("non-finite estimate")
            g, o = _track_metrics(track.kin_mean, track.ext_mean, tk, te, ts, config.shape)
            err = track.kin_mean - tk
            n = np.array([nees(e, w) for e, w in zip(err, track.kin_info)])
            out[("central", 0)] = {"gwd": g, "ospa": o, "nees": n}
        except (TrackingError, np.linalg.LinAlgError):
            out[("central", 0)] = None
        timing[("central", 0)] = time.perf_counter() - t0

    if "distributed" in filters and network.size > 1:
        for L in consensus_iters:
            t0 = time.perf_counter()
            try:
                tracks = run_dwlsf(priors.nodes, network.topology, scans,
                                   config.consensus(network.topology, int(L)), models)
                if not (np.all(np.isfinite(tracks.kin_mean)) and np.all(np.isfinite(tracks.ext_mean))):
                    raise TrackingError("non-finite estimate")
                k, n_nodes = tracks.kin_mean.shape[:2]
                g = np.zeros(k)
                o = np.zeros(k)
                for s in range(n_nodes):
                    gs, os_ = _track_metrics(tracks.kin_mean[:, s], tracks.ext_mean[:, s],
                                             tk, te, ts, config.shape)
                    g += gs / n_nodes
                    o += os_ / n_nodes
                ak = np.array([acee(x) for x in tracks.kin_mean])
                ae = np.array([acee(x) for x in tracks.ext_mean])
                out[("distributed", int(L))] = {"gwd": g, "ospa": o, "acee_kin": ak, "acee_ext": ae}
            except (TrackingError, np.linalg.LinAlgError):
                out[("distributed", int(L))] = None
            timing[("distributed", int(L))] = time.perf_counter() - t0
    return {"run": run, "metrics": out, "timing": timing}


def _simulate_star(args):
    return simulate_run(*args)


@dataclass
class ResultTable:
    """Aggregated per-scan statistics.

    ``rows[name]`` holds ``(scan_time, L, metric, mean, stderr)`` tuples for
    metric file ``name``; ``counts`` maps ``"filter:L"`` to ok / diverged run
    counts.
    """

    rows: dict = field(default_factory=lambda: {m: [] for m in METRIC_FILES})
    counts: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def series(self, metric: str, filter_name: str, L: int = 0) -> np.ndarray:
        """``(K, 2)`` array of (mean, stderr) for one filter / L combination."""
        tag = f"{metric}:{filter_name}"
        sel = [(r[3], r[4]) for r in self.rows[metric] if r[2] == tag and r[1] == L]
        return np.array(sel, dtype=float).reshape(-1, 2)


def _stats(samples: np.ndarray):
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / np.sqrt(n)


def aggregate(results: list, config: ScenarioConfig) -> ResultTable:
    """Deterministic reduction of per-run results ordered by run index."""
    results = sorted(results, key=lambda r: r["run"])
    table = ResultTable(config=config.to_dict())
    keys = sorted({k for r in results for k in r["metrics"]}, key=lambda k: (FILTERS.index(k[0]), k[1]))
    times = config.scan_period * np.arange(config.scan_count)
    for key in keys:
        filt, L = key
        ok = [r["metrics"][key] for r in results if r["metrics"].get(key) is not None]
        table.counts[f"{filt}:{L}"] = {"ok": len(ok), "diverged": len(results) - len(ok)}
        table.timing[f"{filt}:{L}"] = float(sum(r["timing"].get(key, 0.0) for r in results))
        if not ok:
            continue
        for metric in ok[0]:
            mean, err = _stats(np.array([m[metric] for m in ok]))
            for t, mu, se in zip(times, mean, err):
                table.rows[metric].append((float(t), int(L), f"{metric}:{filt}", float(mu), float(se)))
    return table


def run_campaign(spec: RunSpec) -> ResultTable:
    spec.validate()
    args = [(spec.scenario, r, spec.seed, tuple(spec.filters), tuple(int(L) for L in spec.consensus_iters))
            for r in range(spec.runs)]
    if spec.jobs > 1 and spec.runs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(_simulate_star, args))
    else:
        results = [_simulate_star(a) for a in args]
    table = aggregate(results, spec.scenario)
    table.config = {"scenario": spec.scenario.to_dict(), "seed": int(spec.seed),
                    "runs": int(spec.runs), "filters": list(spec.filters),
                    "consensus_iters": [int(L) for L in spec.consensus_iters]}
    return table


def spec_from_manifest(manifest: dict, jobs: int = 1) -> RunSpec:
    """Rebuild the run specification recorded in ``manifest.json``."""
    cfg = manifest["config"] if "config" in manifest else manifest
    return RunSpec(scenario=ScenarioConfig.from_dict(cfg["scenario"]),
                   filters=tuple(cfg["filters"]),
                   consensus_iters=tuple(cfg["consensus_iters"]),
                   runs=int(cfg["runs"]), seed=int(cfg["seed"]), jobs=jobs)


def _fmt(x: float) -> str:
    return repr(float(x))


def export_results(table: ResultTable, out_dir, timing: bool = False) -> list[Path]:
    """Write one CSV per metric plus ``manifest.json``; returns written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"{out} is not writable")
        written = []
        for metric in METRIC_FILES:
            path = out / f"{metric}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_HEADER)
                for t, L, name, mu, se in table.rows.get(metric, []):
                    w.writerow([_fmt(t), L, name, _fmt(mu), _fmt(se)])
            written.append(path)
        manifest = {"config": table.config, "counts": table.counts}
        path = out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        written.append(path)
        if timing:
            path = out / "timing.json"
            path.write_text(json.dumps(table.timing, indent=2, sort_keys=True) + "\n")
            written.append(path)
    except OSError as exc:
        raise ConfigurationError(f"cannot write results to {out}: {exc}") from exc
    return written
