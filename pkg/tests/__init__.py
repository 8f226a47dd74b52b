"""Test package for hetero_dispatch."""
