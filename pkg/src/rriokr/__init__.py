"""Reduced-rank kernel ridge regression with output kernels.

Modules: ``kernels``, ``spectral``, ``regression``, ``subspace``,
``structpred``, ``synthgen``, ``evalbench``, ``io`` and ``cli``.
"""

__version__ = "0.1.0"
