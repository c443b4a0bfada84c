"""Shared engine utilities."""

from khn.engine.rng import SeededRNG

__all__ = ["SeededRNG"]
