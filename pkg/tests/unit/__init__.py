"""Unit tests for rilab."""
