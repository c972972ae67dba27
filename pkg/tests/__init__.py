"""Tests for rilab."""
