"""
CLI entry point for `contact-lab-scenarios`.

Prints the bundled scenarios with their descriptions, or one scenario's
default knobs and output tables. --format machine prints tab-separated
id, description and JSON defaults, one scenario per line.
"""

import argparse
import json
import sys

import tabulate

from . errors import ConfigError
from . index import Index

def _show(scenario):

    print()
    print(f"{scenario.name}: {scenario.description}")
    print()
    print(tabulate.tabulate(
        [(k, json.dumps(v)) for k, v in scenario.defaults.items()],
        tablefmt="pretty",
        headers=["knob", "default"],
        stralign="left"
    ))
    print()
    print("Outputs:", ", ".join(scenario.outputs + ["report.txt", "report.json"]))
    print()

def list_scenarios():

    parser = argparse.ArgumentParser(
        prog="contact-lab-scenarios",
        description=__doc__
    )

    parser.add_argument(
        'scenario',
        nargs='?',
        help='Show the defaults of one scenario'
    )

    parser.add_argument(
        '-f', '--format',
        choices=["table", "machine"],
        default="table",
        help='Output format (default: table)'
    )

    args = parser.parse_args()

    try:
        if args.scenario:
            scenarios = [Index.get_scenario(args.scenario)]
        else:
            scenarios = Index.get_scenarios()
    except ConfigError as e:
        print(f"Exception: {e}", file=sys.stderr)
        sys.exit(2)

    if args.format == "machine":
        for v in scenarios:
            print(f"{v.name}\t{v.description}\t{json.dumps(v.defaults)}")
        return

    if args.scenario:
        _show(scenarios[0])
        return

    print()
    print("Scenarios:")
    print(tabulate.tabulate(
        [(v.name, v.description) for v in scenarios],
        tablefmt="pretty",
        headers=["id", "description"],
        maxcolwidths=[None, 60],
        stralign="left"
    ))
    print()
