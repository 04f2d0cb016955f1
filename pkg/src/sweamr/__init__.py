"""Adjoint-guided adaptive mesh refinement for linearized shallow water flow.

Subpackages by concern: :mod:`~sweamr.bathymetry` (gridded bottom data),
:mod:`~sweamr.riemann` (face kernels), :mod:`~sweamr.solver` (single-grid
stepping), :mod:`~sweamr.adjoint` (backward solve and inner products),
:mod:`~sweamr.amr` (nested refinement levels), and :mod:`~sweamr.scenario`
(configuration and run orchestration).
"""

__version__ = "0.1.0"
