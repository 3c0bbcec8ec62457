#!/usr/bin/env python3
"""
Main Estimation Runner
Runs the AEL parameter estimation command-line interface.
"""

import sys

from scripts.cli import build_parser, main as cli_main


def main(argv=None):
    """Run one estimation stage, or print an overview when called without arguments."""
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        print("AEL Parameter Estimation")
        print("=" * 40)
        print("Stages:")
        print("1. synth      generate synthetic observations from a job schedule")
        print("2. surrogate  build the sparse-grid polynomial surrogate")
        print("3. fit        sample the posterior and write the results bundle")
        print("4. ls-fit     least-squares baseline on the same data")
        print("5. simulate   forward trajectories for given parameters")
        print("6. summarize  summaries and histograms from a samples CSV")
        print()
        build_parser().print_help()
        return 0
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
