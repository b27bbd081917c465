"""Test suite for capfem."""
