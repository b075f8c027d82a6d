"""Resonant magneto-mechanical transmitter toolkit."""
