"""Exact-arithmetic machinery for an asymptotic-l2 norming construction:
Schreier families, hierarchy averages, norming trees, certified norm
bounds, and the dependent-chain witness pipeline."""

__version__ = "0.1.0"
