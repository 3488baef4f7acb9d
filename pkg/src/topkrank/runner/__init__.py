"""Experiment runner (grids, aggregation, filesystem artifacts)."""
