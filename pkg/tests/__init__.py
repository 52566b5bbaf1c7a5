"""
Unit tests for Dilemma Bench.
"""
