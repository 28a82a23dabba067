"""Serve-once evaluator for LLM-generated kernels over the JSON line protocol."""

__version__ = "0.1.0"
