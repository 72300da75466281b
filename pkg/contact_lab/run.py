"""
CLI entry point for `contact-lab`.

Runs one bundled scenario: merges its defaults with an optional YAML
config and command-line overrides, validates the knobs, writes the CSV
tables and report.txt / report.json to the output directory and, with
--zip, bundles them. Exits 0 when every check passes, 1 when a check
fails or the run stops, 2 on an invalid configuration.
"""

import argparse
import json
import logging
import sys

from . config import load_config
from . errors import ConfigError
from . packager import Packager
from . scenarios import run_scenario

def run_lab():

    parser = argparse.ArgumentParser(
        prog="contact-lab",
        description=__doc__
    )

    parser.add_argument(
        'scenario',
        help='Scenario id, see contact-lab-scenarios'
    )

    parser.add_argument(
        '-c', '--config',
        help='YAML file of knob overrides'
    )

    parser.add_argument(
        '-o', '--out',
        help='Output directory (default: $CONTACT_LAB_OUT or '
        'contact-lab-out/<scenario>)'
    )

    parser.add_argument(
        '-s', '--seed',
        type=int,
        help='Random seed override'
    )

    parser.add_argument(
        '--golden',
        action='store_true',
        help="Fixed-step integration and single-threaded sampling",
    )

    parser.add_argument(
        '-z', '--zip',
        help="Also bundle every artefact into this zip file",
    )

    parser.add_argument(
        '-q', '--quiet',
        action='store_true',
        help="Only warnings and failures",
    )

    args = parser.parse_args()

    if args.quiet:
        logging.basicConfig(level=logging.WARNING, format='%(message)s')
    else:
        logging.basicConfig(level=logging.INFO, format='%(message)s')

    try:

        cfg = load_config(
            args.scenario, args.config, args.out, args.seed, args.golden
        )

        packager = Packager(cfg.out, args.zip, quiet=args.quiet)
        report = run_scenario(cfg, packager)

    except ConfigError as e:

        print(f"Exception: {e}", file=sys.stderr)
        if e.schema is not None:
            print(json.dumps(e.schema, indent=4), file=sys.stderr)
        sys.exit(2)

    except Exception as e:

        print(f"Exception: {e}", file=sys.stderr)
        sys.exit(1)

    if not report.passed:
        for check in report.failures:
            print(
                f"FAIL {check.name}: {check.value} (bound {check.bound})",
                file=sys.stderr
            )
        if report.error:
            print(f"Error: {report.error}", file=sys.stderr)
        sys.exit(1)

    if not args.quiet:
        print(f"{cfg.scenario}: all {len(report.checks)} checks passed.")
