"""Numerical core: grids, potentials, targets, solvers and scenarios."""
