#!/usr/bin/env python3
"""
SalClassNet - Main Entry Point

Top-down saliency detection trained jointly with a classifier that sees
the saliency map as a fourth input channel. Run ``python main.py --help``.
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from cli.commands import run_command


def main(argv=None):
    """Run one salclass command and exit with its code"""
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
