"""Validation obligations for Event-B style machines: parsing, evaluation,
explicit-state exploration, refinement checks, traces and projections."""

__version__ = "0.1.0"
