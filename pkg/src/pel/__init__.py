"""Predictive ensemble learning: per-example base-model selection for
polygon-output detection tasks, with evaluation, NMS, and oracle baselines."""

__version__ = "0.1.0"
