"""Experiment views package."""
