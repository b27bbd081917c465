#!/usr/bin/env python3
"""
capfem - finite elements for the capacitive interface problem.

Generates interface-fitted meshes, runs backward Euler simulations of
pulsed excitations and certifies convergence rates from the command line.
"""
import sys

from src.cli import main

if __name__ == '__main__':
    sys.exit(main())
