"""Uncertainty-aware evaluation harness for pairwise spatial relations.

Builds a counterfactually-paired prompt benchmark, turns detector outputs
into PASS/FAIL/UNDECIDABLE verdicts with decomposed confidence, aggregates
metrics under abstention, and calibrates the operating point from a small
human audit.
"""

__version__ = "0.1.0"

TOOL_NAME = "spatialeval"
