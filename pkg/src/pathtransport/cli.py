"""Command-line entry point.

Subcommands:

* ``run <config>`` - execute a scenario config, writing CSV and a JSON sidecar;
* ``check <config>`` - validate a config without running it;
* ``catalog [--json]`` - list the built-in manifolds and tasks.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (the grid
point goes to stderr), 4 chart-domain truncation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .catalog import catalog_entries
from .config import TASKS, load_config
from .errors import ConfigError, CurveTruncationError, DomainError, GeometryError
from .runner import OUTPUT_ENV_VAR, ScenarioRunError, run_scenario


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pathtransport",
        description="Transports along paths, displacement and deviation vectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scenario config")
    run_p.add_argument("config", help="TOML or JSON scenario file")
    run_p.add_argument("--step", type=float, help="override integrator step")
    run_p.add_argument("--quad-panels", type=int, help="override quadrature panel count")
    run_p.add_argument("--fd-step", type=float, help="override finite-difference step")
    run_p.add_argument(
        "--output",
        help=f"output directory (default: config, then ${OUTPUT_ENV_VAR}, then cwd)",
    )

    check_p = sub.add_parser("check", help="validate a scenario config")
    check_p.add_argument("config", help="TOML or JSON scenario file")

    cat_p = sub.add_parser("catalog", help="list built-in manifolds and tasks")
    cat_p.add_argument("--json", action="store_true", help="machine-readable output")
    return parser


def _apply_overrides(cfg, args):
    updates = {}
    if args.step is not None:
        updates["step"] = args.step
    if args.quad_panels is not None:
        updates["quad_panels"] = args.quad_panels
    if args.fd_step is not None:
        updates["fd_step"] = args.fd_step
    if updates:
        cfg.integrator = dataclasses.replace(cfg.integrator, **updates)
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "catalog":
        entries = catalog_entries()
        if args.json:
            print(json.dumps({"manifolds": entries, "tasks": list(TASKS)}, indent=2))
        else:
            print("built-in manifolds:")
            for e in entries:
                print(f"  {e['name']:<22} dim={e['dim']!s:<3} {e['description']}")
                for pname, pdesc in e["params"].items():
                    print(f"  {'':<22} {pname}: {pdesc}")
            print("tasks: " + ", ".join(TASKS))
        return 0

    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    if args.command == "check":
        print(f"{args.config}: valid ({cfg.task} on {cfg.manifold_name})")
        return 0

    cfg = _apply_overrides(cfg, args)
    try:
        record = run_scenario(cfg, output_dir=args.output)
    except ScenarioRunError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        cause = err.cause
        if isinstance(cause, CurveTruncationError):
            return 4
        return 3
    except (DomainError, CurveTruncationError) as err:
        print(f"domain failure: {err}", file=sys.stderr)
        return 4
    except GeometryError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    print(f"wrote {record.csv_path} ({len(record.rows)} rows) and {record.json_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
