"""Tests for khn."""
