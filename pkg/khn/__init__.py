"""Kernel-conditioned hypernetworks for few-shot classification."""

__version__ = "0.1.0"
