"""Causal testing: infer metamorphic test outcomes from execution data using
causal DAGs and regression-based effect estimation."""

__version__ = "0.1.0"
