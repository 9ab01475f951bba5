#!/usr/bin/env python3
"""Regenerate every phase-portrait SVG into out/figures/."""

import sys

from equishoot.cli import run


def main() -> int:
    status = 0
    for fig_id in (1, 2, 4, 5, 6):
        status |= run(["--out", "out/figures", "figure", "--id", str(fig_id)])
    return status


if __name__ == "__main__":
    sys.exit(main())
