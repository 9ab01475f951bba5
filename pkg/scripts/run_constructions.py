#!/usr/bin/env python3
"""Run every construction end to end and export the artifacts to out/.

Covers the closed hypertorus orbit (n = 2, 3), the two-stage self-crossing
orbit, the initial-angle ladder with its sphere/immersed assemblies, the
free-boundary arc of the triple product, and the full verification sweep.
"""

import sys

from equishoot.cli import run


def main() -> int:
    status = 0
    for args in (
        ["torus", "--n", "2"],
        ["torus", "--n", "3"],
        ["infty", "--n", "2"],
        ["infty", "--n", "3"],
        ["ladder", "--n", "2", "--k", "3"],
        ["spheres", "--n", "2", "--k", "2"],
        ["t4"],
        ["probe", "--n", "4"],
        ["probe", "--n", "2"],
        ["verify", "--suite", "all"],
    ):
        print(f"== equishoot {' '.join(args)}")
        status |= run(["--out", "out"] + args)
    return status


if __name__ == "__main__":
    sys.exit(main())
