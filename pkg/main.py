"""
Spectral Flow Toolkit - Command Line Entry Point

Runs the named experiments:
- winding: n=1 gauge paths, exact flow = prediction = m
- contact-sweep: n=3 contact paths over an r-sweep, slope fits
- estimator-check: flow invariants and the <= n certificate
- heat-check: heat-trace oracles, counting bounds, density checks
- chs-check: forms and Chern-Simons property suite
- all: every experiment with its default config

Exit codes: 0 all checks pass, 2 assertion failure, 3 numerical
certificate failure, 4 configuration error.
"""

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from specflow import (
    EXIT_ASSERTION,
    EXIT_CONFIG,
    ConfigError,
    ExperimentName,
    ExperimentReport,
    SpecFlowError,
    get_eigen_cache,
    init_eigen_cache,
    init_pool,
    resolve_config,
    run_experiment,
)

# Load environment variables
load_dotenv()

DEFAULT_OUT_DIR = "results"


def get_out_dir() -> str:
    """Get the output directory from environment."""
    value = os.getenv("SPECFLOW_OUT_DIR", "").strip().strip('"').strip("'")
    return value or DEFAULT_OUT_DIR


def load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specflow",
        description="Spectral flow experiments for twisted Dirac operators on flat tori",
    )
    parser.add_argument(
        "experiment",
        choices=[name.value for name in ExperimentName] + ["all"],
        help="experiment to run",
    )
    parser.add_argument("--config", help="JSON config overriding the experiment defaults")
    parser.add_argument("--out", help="output directory (default: $SPECFLOW_OUT_DIR or ./results)")
    parser.add_argument("--threads", type=int, help="worker threads (default: available cores)")
    parser.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def print_report(report: ExperimentReport) -> None:
    verdict = "PASS" if report.passed else "FAIL"
    print(f"[{verdict}] {report.experiment.value} in {report.elapsed_seconds:.1f}s")
    for failure in report.failures:
        print(f"  - {failure}")


def run(args: argparse.Namespace) -> int:
    out_dir = args.out or get_out_dir()
    threads = init_pool(args.threads)
    cache = init_eigen_cache()
    print(f"Spectral flow toolkit: out={out_dir}, threads={threads}, cache={cache.max_entries} entries")

    overrides = load_config_file(args.config)
    if args.experiment == "all":
        names = list(ExperimentName)
        if overrides and "experiment" in overrides:
            raise ConfigError("'all' takes a mapping from experiment name to overrides, not a single config")
    else:
        names = [ExperimentName(args.experiment)]
        overrides = {args.experiment: overrides}

    # Validate every config before any computation
    configs = [resolve_config(name, overrides.get(name.value), out_dir=out_dir, seed=args.seed) for name in names]

    reports = []
    for config in configs:
        print(f"Running {config.experiment.value} (n={config.n}, K={config.K}, seed={config.seed})")
        reports.append(run_experiment(config))
        print_report(reports[-1])
        get_eigen_cache().clear()

    failed = [r.experiment.value for r in reports if not r.passed]
    if failed:
        print(f"Failed: {', '.join(failed)}")
        return EXIT_ASSERTION
    print("All checks passed")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print(f"ERROR: --seed must be an unsigned 64-bit integer, got {args.seed}")
        return EXIT_CONFIG

    started = time.perf_counter()
    try:
        code = run(args)
    except SpecFlowError as e:
        print(f"ERROR ({type(e).__name__}): {e.message}")
        code = e.code
    print(f"Finished in {time.perf_counter() - started:.1f}s (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
