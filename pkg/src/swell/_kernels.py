"""Hot kernels: dense periodized Cauchy-kernel matrices.

The curve transform and the multilinear singular integrals all reduce to
matrix-vector products against the n-by-n matrices

    Psi_p[i, j] = psi_p(zeta_i - zeta_j),   p in {1, 2, 3},

where ``psi_p`` is the exact periodization of ``1/x^p`` over the period
``P = 2*pi*L`` (image sum over all periodic copies of the interface):

    psi_1(x) = c * cot(c x)
    psi_2(x) = c^2 / sin^2(c x)
    psi_3(x) = c^3 * cos(c x) / sin^3(c x)        with c = pi / P = 1/(2L).

Because the interface satisfies ``zeta(beta + P) = zeta(beta) + P``, these
image sums are exactly the periodic Cauchy kernels, so trapezoid sums against
them are spectrally accurate.  Diagonals are left at zero; the analytic
diagonal limits are added by the callers.

Building these matrices is the only O(n^2) transcendental-function work in
the package, so it carries a numba fast path with a pure-numpy broadcasting
fallback.  Selection: numpy is used when the environment variable
``SWELL_NO_NUMBA`` is set (to anything non-empty) or when numba is not
importable; :func:`set_backend` overrides at runtime (used by the benchmark).
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["build_psi", "current_backend", "set_backend", "available_backends"]

_HAVE_NUMBA = False
if not os.environ.get("SWELL_NO_NUMBA"):
    try:
        import numba

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - depends on environment
        _HAVE_NUMBA = False

_backend = "numba" if _HAVE_NUMBA else "numpy"


def available_backends() -> tuple:
    return ("numba", "numpy") if _HAVE_NUMBA else ("numpy",)


def current_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Force the matrix-build backend ('numba' or 'numpy')."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise ValueError("numba backend unavailable")
    _backend = name


def _build_psi_numpy(zeta: np.ndarray, c: float, p: int) -> np.ndarray:
    x = zeta[:, None] - zeta[None, :]
    cx = c * x
    np.fill_diagonal(cx, 1.0)  # placeholder; diagonal overwritten below
    s = np.sin(cx)
    if p == 1:
        out = c * np.cos(cx) / s
    elif p == 2:
        out = (c * c) / (s * s)
    else:
        out = (c**3) * np.cos(cx) / (s * s * s)
    np.fill_diagonal(out, 0.0)
    return out


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _build_psi_numba(zeta, c, p):  # pragma: no cover - exercised via wrapper
        n = zeta.shape[0]
        out = np.empty((n, n), dtype=np.complex128)
        for i in range(n):
            zi = zeta[i]
            for j in range(n):
                if i == j:
                    out[i, j] = 0.0
                else:
                    cx = c * (zi - zeta[j])
                    s = np.sin(cx)
                    if p == 1:
                        out[i, j] = c * np.cos(cx) / s
                    elif p == 2:
                        out[i, j] = (c * c) / (s * s)
                    else:
                        out[i, j] = (c**3) * np.cos(cx) / (s * s * s)
        return out


def build_psi(zeta: np.ndarray, c: float, p: int) -> np.ndarray:
    """Dense kernel matrix ``psi_p(zeta_i - zeta_j)`` with zero diagonal.

    Parameters
    ----------
    zeta : complex ndarray
        Interface node positions (``alpha + offset``).
    c : float
        ``1/(2L)`` for period ``2*pi*L``.
    p : int
        Kernel power, 1, 2, or 3.
    """
    if p not in (1, 2, 3):
        raise ValueError(f"kernel power must be 1, 2, or 3, got {p}")
    zeta = np.ascontiguousarray(zeta, dtype=np.complex128)
    if _backend == "numba":
        return _build_psi_numba(zeta, c, p)
    return _build_psi_numpy(zeta, c, p)
