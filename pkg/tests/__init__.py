"""Tests for mftraj."""
