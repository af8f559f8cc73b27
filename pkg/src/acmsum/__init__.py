"""Attribute-conditioned multi-document summarization at desk scale."""

__version__ = "0.1.0"
