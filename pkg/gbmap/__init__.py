"""Gradient boosting mapping: supervised embeddings, distances and drift detection"""
__version__ = "0.1.0"
