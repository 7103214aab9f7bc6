"""Reconstruction of flat model manifolds from Neumann boundary spectral data."""
