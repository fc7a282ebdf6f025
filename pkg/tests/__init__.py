"""Tests for mllab."""
