"""Jacobi pairs, homogeneous Poisson structures, linear-bivector algebroids,
and the associated sigma-model field equations, on explicitly named charts."""

__version__ = "0.1.0"
