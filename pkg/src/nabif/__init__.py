"""Nonautonomous bifurcation toolkit: hull-driven cocycles, invariant manifolds, pullback attractors."""
