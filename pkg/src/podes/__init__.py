"""Probabilistic solvers for differential equations with discretization uncertainty."""
