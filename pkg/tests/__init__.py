"""
Unit tests for timed-abstraction package.
"""
