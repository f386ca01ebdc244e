"""Embedding service for the lgca wire protocol."""

from .backends import HashedBackend, load_backend
from .server import EncoderServer

__all__ = ["EncoderServer", "HashedBackend", "load_backend"]

__version__ = "0.1.0"
