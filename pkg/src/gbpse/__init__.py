"""Streaming DC state estimation with Gaussian belief propagation."""
