"""Command line entry point: ``colregs-sim run|validate|list-scenarios``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .scenario import (
    DECIDERS,
    ScenarioError,
    SimulationError,
    bundled_scenarios,
    emit_outputs,
    load_scenario,
    run,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SIMULATION = 4


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="colregs-sim", description="COLREGs encounter simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log decision discrepancies and retries")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and write outputs")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file or bundled scenario name")
    p_run.add_argument("--decider", choices=DECIDERS, help="override the scenario's decider")
    p_run.add_argument("--seed", type=int, help="override the scenario seed")
    p_run.add_argument("--out", default="out", help="output directory (default: ./out)")
    p_run.add_argument("--mock-fixture", help="JSON list of canned responses for --decider mock")

    p_val = sub.add_parser("validate", help="check a scenario file without running it")
    p_val.add_argument("--scenario", required=True)

    sub.add_parser("list-scenarios", help="list bundled scenarios")
    return parser


def _fail(category: str, message: str, code: int) -> int:
    print(f"error [{category}]: {message}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "list-scenarios":
        for name in bundled_scenarios():
            print(name)
        return EXIT_OK

    try:
        config = load_scenario(args.scenario)
    except ScenarioError as exc:
        return _fail(exc.category, str(exc), EXIT_CONFIG)

    if args.command == "validate":
        print(f"{config.name}: ok ({config.duration:g} s, decider={config.decider}, seed={config.seed})")
        return EXIT_OK

    overrides = {}
    if args.decider:
        overrides["decider"] = args.decider
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mock_fixture:
        overrides["mock_fixture"] = Path(args.mock_fixture)
    try:
        config = replace(config, **overrides)
    except ScenarioError as exc:
        return _fail(exc.category, str(exc), EXIT_CONFIG)

    if config.decider == "llm" and not config.llm.api_key:
        logging.getLogger(__name__).warning(
            "%s is not set; requests go out unauthenticated", config.llm.api_key_env_var
        )

    try:
        log, metrics = run(config)
    except SimulationError as exc:
        return _fail("simulation", str(exc), EXIT_SIMULATION)
    except (OSError, ValueError) as exc:
        # unreadable or malformed mock fixture
        return _fail("decider", str(exc), EXIT_CONFIG)

    try:
        paths = emit_outputs(log, metrics, args.out, name=config.name)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_IO)

    print(json.dumps(metrics.to_dict(), indent=2))
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
