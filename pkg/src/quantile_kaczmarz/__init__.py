"""Quantile-based Kaczmarz and SGD solvers for linear systems with sparse corruptions."""

__version__ = "0.1.0"
