"""Experiment harness: synthetic data, splits, method runs, sweeps and reports.

Submodules are imported explicitly (``dpcoupling.harness.experiments`` and so
on) so that the optimizer can use the metric helpers without a cycle.
"""
