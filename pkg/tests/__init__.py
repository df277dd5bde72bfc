"""Tests for subpop."""
