"""Tests for the drsplat package."""
