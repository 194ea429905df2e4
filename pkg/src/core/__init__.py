"""Operators, solver, tomography and the experiment harness."""
