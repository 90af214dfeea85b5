"""Command line interface.

    cvmtrack run --scenario s3 --filter both --runs 50 --consensus-iters 10
    cvmtrack sweep-L --scenario s3 --consensus-iters 1,2,5,10,20
    cvmtrack run --manifest results/manifest.json --out rerun
    cvmtrack validate-config my_scenario.json
    cvmtrack show-config s1
    cvmtrack list-scenarios

Results go to ``--out``, else ``$CVMTRACK_OUT``, else ``./results``. On
failure the process exits nonzero and prints ``error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import kernels
from .campaign import RunSpec, export_results, run_campaign, spec_from_manifest
from .errors import ConfigurationError, TrackingError
from .scenarios import SCENARIOS, get_scenario, load_scenario

OUT_ENV = "CVMTRACK_OUT"
DEFAULT_OUT = "results"


def _iters(text: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty iteration list")
    return vals


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _campaign_args(p: argparse.ArgumentParser, default_iters: str) -> None:
    p.add_argument("--scenario", default="s3", help="built-in name or JSON scenario file")
    p.add_argument("--filter", choices=("central", "distributed", "both"), default="both")
    p.add_argument("--runs", type=_positive, help="Monte Carlo runs (default: scenario value)")
    p.add_argument("--consensus-iters", type=_iters, default=_iters(default_iters),
                   help="comma-separated consensus iteration counts L")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--jobs", type=_positive, default=1, help="worker processes")
    p.add_argument("--timing", action="store_true", help="also write timing.json")
    p.add_argument("--manifest", help="repeat the campaign recorded in a manifest.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvmtrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _campaign_args(sub.add_parser("run", help="run a Monte Carlo campaign"), "10")
    _campaign_args(sub.add_parser("sweep-L", help="sweep consensus iterations"), "1,2,5,10,20")
    v = sub.add_parser("validate-config", help="check a scenario document")
    v.add_argument("config")
    s = sub.add_parser("show-config", help="print a scenario as JSON")
    s.add_argument("scenario")
    sub.add_parser("list-scenarios", help="list built-in scenarios")
    return parser


def _filters(choice: str) -> tuple:
    return ("central", "distributed") if choice == "both" else (choice,)


def _from_manifest(path: str, jobs: int):
    try:
        doc = json.loads(Path(path).read_text())
        return spec_from_manifest(doc, jobs)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"unreadable manifest {path}: {exc}") from exc


def _campaign(args) -> int:
    if args.manifest:
        return _execute(_from_manifest(args.manifest, args.jobs), args)
    scenario = load_scenario(args.scenario)
    filters = _filters(args.filter)
    if args.command == "sweep-L" and "distributed" not in filters:
        raise ConfigurationError("sweep-L needs the distributed filter")
    if "distributed" in filters and scenario.build_network().size < 2:
        if args.filter == "distributed" or args.command == "sweep-L":
            raise ConfigurationError(f"scenario {scenario.name} has a single node")
        filters = ("central",)
    spec = RunSpec(scenario=scenario, filters=filters, consensus_iters=args.consensus_iters,
                   runs=args.runs or scenario.monte_carlo_runs, seed=args.seed, jobs=args.jobs)
    return _execute(spec, args)


def _execute(spec: RunSpec, args) -> int:
    t0 = time.perf_counter()
    table = run_campaign(spec)
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    paths = export_results(table, out, timing=args.timing)
    for key, c in table.counts.items():
        print(f"{key}: ok={c['ok']} diverged={c['diverged']}")
    print(f"wrote {len(paths)} files to {out} ({time.perf_counter() - t0:.1f} s, backend={kernels.BACKEND})")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("run", "sweep-L"):
            return _campaign(args)
        if args.command == "validate-config":
            cfg = load_scenario(args.config)
            print(f"ok: {cfg.name}")
            return 0
        if args.command == "show-config":
            print(get_scenario(args.scenario).to_json())
            return 0
        if args.command == "list-scenarios":
            for name, build in SCENARIOS.items():
                cfg = build()
                print(f"{name}\t{cfg.build_network().size} node(s), {cfg.shape}, "
                      f"{cfg.scan_count} scans, prior={cfg.prior.mode}")
            return 0
    except TrackingError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
