"""LLM-driven strategic search over GPU kernel candidates."""

__version__ = "0.1.0"
