"""Command-line entry point: ``fluxband <scenario> --config <path> ...``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure (any
grid point or the summary failed; the data files are still written).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .device import DeviceError
from .evolve import METHODS, IntegrationError
from .experiments import SCENARIOS, ConfigError, ScenarioConfig, run, validate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
DEFAULT_OUT = "results"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluxband", description="Run flux-sideband simulation scenarios.")
    parser.add_argument("scenario", choices=sorted(SCENARIOS), help="scenario to run")
    parser.add_argument("--config", required=True, type=Path, help="JSON configuration file")
    parser.add_argument("--out", type=Path, default=None, help=f"output directory (default: config 'output' or {DEFAULT_OUT})")
    parser.add_argument("--threads", type=int, default=1, help="worker threads; 1 gives byte-identical CSV output")
    parser.add_argument("--integrator", choices=METHODS, default=None, help="override the integrator method")
    parser.add_argument("--validate-only", action="store_true", help="print physics warnings and exit")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = ScenarioConfig.from_json(args.config, args.scenario)
        if args.integrator is not None:
            cfg = cfg.with_integrator(method=args.integrator)
        report = validate(cfg)
    except FileNotFoundError:
        print(f"error: config file {args.config} not found", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, DeviceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for line in report:
        print(f"warning: {line}", file=sys.stderr)
    if args.validate_only:
        print(json.dumps({"scenario": cfg.scenario, "config_digest": cfg.digest, "warnings": report}, indent=2))
        return EXIT_OK
    out_dir = args.out or Path(cfg.output or DEFAULT_OUT)
    try:
        record = run(args.scenario, cfg, out_dir=out_dir, threads=args.threads)
    except (ConfigError, DeviceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except IntegrationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for p in record.failures:
        print(f"point {p.index} failed: {p.error}", file=sys.stderr)
    if record.summary_error:
        print(f"summary failed: {record.summary_error}", file=sys.stderr)
    print(f"wrote {out_dir / (args.scenario + '.csv')} and {out_dir / (args.scenario + '.json')}")
    return EXIT_OK if record.succeeded else EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
