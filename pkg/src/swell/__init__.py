"""Pseudospectral simulator and verification suite for 2D gravity water
waves in modified Lagrangian coordinates.

Subpackages by role:

- :mod:`swell.grid` — periodic grid, spectral transforms, norms.
- :mod:`swell.cauchy` — curve Hilbert transform, multilinear singular
  integrals, projection-equation solvers.
- :mod:`swell.quantities` — the derived flow quantities (b, A, w, a_t/a,
  theta, sigma, Q) assembled from a wave state.
- :mod:`swell.cubic` — cubic nonlinearities G1, G2, their material
  derivatives, and identity residuals.
- :mod:`swell.evolution` — initial data, RK4 stepping, run loop.
- :mod:`swell.diagnostics` — energies, conservation/scaling reports, series.
- :mod:`swell.identity_lab` — standalone oscillatory-integral and
  derivative-transition certification (independent of the simulator).
- :mod:`swell.cli` — command-line entry point.
"""

__version__ = "0.1.0"
