"""
Schwarz Lab - stochastic subspace correction solver laboratory.

Randomized and accelerated Schwarz iterations on an overlapping domain
decomposition of a 2D Poisson problem, with fault injection, cost models
and dense reference checks.
"""

__version__ = "1.0.0"
__author__ = "Schwarz Lab Team"
