"""Agentic retrieval-augmented question answering over biomedical sources."""

__version__ = "0.1.0"
