"""Cubic nonlinearities and identity residuals.

The antiholomorphic projection theta obeys ``(D_t^2 - iA d_alpha) theta =
G1 + G2`` with G cubic in the perturbation -- the quadratic part of the
nonlinearity cancels.  This module assembles G1, G2, their material
derivative, the residuals of the theta- and sigma-equations (the master
self-tests of the whole stack), the k-th order commutator sources feeding
the energy rate, and the main-term gap diagnostics.

G1 is assembled twice: through the complex kernel matrices and through the
manifestly real kernel obtained from ``psi1(x) - psi1(conj x)``; the two
routes share no quadrature code, so their agreement localizes kernel bugs.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .cauchy import CurveHandle, curve_hilbert, singular_S, singular_S_bar
from .grid import Field, dealias, deriv, norm_hs, norm_l2, norm_linf, nodes
from .quantities import AuxQuantities, WaveState

__all__ = [
    "CubicBundle",
    "compute_G",
    "compute_G1_real",
    "compute_DtG",
    "compute_cubic",
    "cubic_residual",
    "commutator_source",
    "main_term_gap",
]


@dataclass(frozen=True)
class CubicBundle:
    """G-terms and the identity residuals for one state.

    ``K_theta`` / ``K_sigma`` collect the alpha-independent part of each
    identity defect -- the slot where the periodic frame's forced constants
    would appear.  With the production assembly (real projection solves,
    weighted A-equation) they sit at solver tolerance; the split is kept so
    nothing constant can hide in the residuals unreported.  The residual
    fields are stored mean-free, leaving the part that refines under the
    quadrature; the raw identity defect is ``residual + K``.
    """

    G1: Field
    G2: Field
    G: Field
    DtG: Field
    residual_theta: Field
    residual_sigma: Field
    K_theta: complex
    K_sigma: complex


def _curve(state: WaveState, curve: CurveHandle | None) -> CurveHandle:
    return curve if curve is not None else state.curve


def _im_h(c: CurveHandle, f: Field) -> Field:
    return f - curve_hilbert(c, f)


def compute_G(state: WaveState, aux: AuxQuantities,
              curve: CurveHandle | None = None):
    """The two cubic terms.

    ``G1 = -2 S2([u],u,1) + 2 S2bar([u],u,1)`` (the commutator against
    ``H(1/zeta_a) + Hbar(1/conj(zeta_a))`` applied to ``u_alpha``) and
    ``G2 = S2([u,u], zeta - conj(zeta), 2)``.
    """
    c = _curve(state, curve)
    u = state.u
    zmz = state.zeta_offset - state.zeta_offset.conj()
    G1 = (singular_S_bar(c, [u], u, "S2", 1)
          - singular_S(c, [u], u, "S2", 1)) * 2.0
    G2 = singular_S(c, [u, u], zmz, "S2", 2)
    return G1, G2


def compute_G1_real(state: WaveState, curve: CurveHandle | None = None) -> Field:
    """G1 through the real kernel: independent quadrature route.

    ``psi1(x) - psi1(conj x) = -2i (Im x / c) Phi`` with ``Phi = c^2 *
    (sinh y / y) / |sin(c Dz)|^2 >= 0``, ``y = 2c (eta(a) - eta(b))``, so

        G1 = (4/pi) integral (eta(a)-eta(b)) (u(a)-u(b)) Phi u_beta dbeta,

    evaluated by the trapezoid rule with the analytic diagonal
    ``eta' u' / |zeta_a|^2 u_alpha``.  The ratio sinh(y)/y is series-guarded
    near height crossings where both factors vanish.
    """
    c = _curve(state, curve)
    grid = state.grid
    half = c._c  # 1/(2L)
    eta = state.zeta_offset.imag_part
    us = state.u.samples
    ub = deriv(state.u).samples

    dz = c.zeta[:, None] - c.zeta[None, :]
    de = eta[:, None] - eta[None, :]
    du = us[:, None] - us[None, :]
    y = 2.0 * half * de
    small = np.abs(y) < 1e-4
    ratio = np.where(small, 1.0 + y * y / 6.0,
                     np.sinh(np.where(small, 1.0, y)) / np.where(small, 1.0, y))
    s = np.sin(half * dz)
    np.fill_diagonal(s, 1.0)  # placeholder; diagonal replaced below
    phi = half * half * ratio / np.abs(s) ** 2
    integrand = de * du * phi * ub[None, :]
    zeta_a = c.zeta_alpha
    np.fill_diagonal(integrand, np.imag(zeta_a) * ub / np.abs(zeta_a) ** 2 * ub)
    out = (4.0 / np.pi) * grid.dalpha * integrand.sum(axis=1)
    return dealias(Field(grid, out))


def compute_DtG(state: WaveState, aux: AuxQuantities,
                curve: CurveHandle | None = None) -> Field:
    """Material derivative of G by kernel transport (no time differencing).

    Each kernel contributes three pieces: numerator transport
    (``Du -> Dw``), payload transport, and the kernel-power term appending a
    ``u`` (or ``conj(u)`` for the bar kernel) numerator at power + 1.
    """
    c = _curve(state, curve)
    u, w = state.u, aux.w
    zmz = state.zeta_offset - state.zeta_offset.conj()
    DtG1 = ((singular_S_bar(c, [w], u, "S2", 1)
             + singular_S_bar(c, [u], w, "S2", 1)
             - singular_S_bar(c, [u, u.conj()], u, "S2", 2)) * 2.0
            - (singular_S(c, [w], u, "S2", 1)
               + singular_S(c, [u], w, "S2", 1)
               - singular_S(c, [u, u], u, "S2", 2)) * 2.0)
    DtG2 = (singular_S(c, [w, u], zmz, "S2", 2) * 2.0
            - singular_S(c, [u, u, u], zmz, "S2", 3) * 2.0
            + singular_S(c, [u, u], u - u.conj(), "S2", 2))
    return DtG1 + DtG2


def compute_cubic(state: WaveState, aux: AuxQuantities,
                  curve: CurveHandle | None = None) -> CubicBundle:
    """Assemble the bundle, including both identity residuals.

    ``residual_theta = D_t^2 theta - iA theta_alpha - G - K_theta`` with
    ``D_t^2 theta`` taken from aux (two transport passes, no time
    differencing) and ``K_theta`` the mean of the raw defect;
    ``residual_sigma`` likewise for the sigma-equation with the
    ``i (a_t/a) A theta_alpha`` source and ``D_t^3 theta`` expanded by one
    more transport pass.  Everything closes on ``A`` (through ``w`` and
    ``D_t w``) and ``a_t/a``; the advection coefficient drops out of the
    chain entirely.
    """
    c = _curve(state, curve)
    u = state.u
    w, A, q = aux.w, aux.A, aux.at_over_a
    X = state.zeta_offset - state.zeta_offset.conj()

    G1, G2 = compute_G(state, aux, c)
    G = G1 + G2
    DtG = compute_DtG(state, aux, c)

    raw_theta = aux.Dt_sigma - dealias(A * deriv(aux.theta) * 1j) - G
    K_theta = complex(np.mean(raw_theta.samples))
    residual_theta = raw_theta - K_theta

    Dtw = aux.Dtw
    u_m = u - u.conj()
    w_m = w - w.conj()
    Dt3_theta = (_im_h(c, Dtw - Dtw.conj())
                 - singular_S(c, [u], w_m, "S2", 1) * 3.0
                 - singular_S(c, [w], u_m, "S2", 1) * 3.0
                 + singular_S(c, [u, u], u_m, "S2", 2) * 3.0
                 - singular_S(c, [Dtw], X, "S2", 1)
                 + singular_S(c, [w, u], X, "S2", 2) * 3.0
                 - singular_S(c, [u, u, u], X, "S2", 3) * 2.0)
    raw_sigma = (Dt3_theta
                 - dealias(A * deriv(aux.sigma) * 1j)
                 - DtG
                 - dealias(q * A * deriv(aux.theta) * 1j))
    K_sigma = complex(np.mean(raw_sigma.samples))
    residual_sigma = raw_sigma - K_sigma
    return CubicBundle(G1=G1, G2=G2, G=G, DtG=DtG,
                       residual_theta=residual_theta,
                       residual_sigma=residual_sigma,
                       K_theta=K_theta, K_sigma=K_sigma)


def cubic_residual(state: WaveState, aux: AuxQuantities,
                   bundle: CubicBundle):
    """L2 / Linf / H1 norms of the two identity residuals.

    Each dict also carries ``const``, the L2 weight ``|K| sqrt(vol)`` of the
    removed constant; since the stored residuals are mean-free, the raw
    identity defect is ``hypot(l2, const)`` exactly.
    """
    vol = float(np.sqrt(state.grid.n * state.grid.dalpha))

    def _norms(f: Field, K: complex) -> dict:
        return {"l2": norm_l2(f), "linf": norm_linf(f),
                "h1": norm_hs(f, 1.0), "const": abs(K) * vol}

    return (_norms(bundle.residual_theta, bundle.K_theta),
            _norms(bundle.residual_sigma, bundle.K_sigma))


def _cb(b: Field, k: int, f: Field) -> Field:
    """[D_t, d^k] f = -sum_{j=1}^k C(k,j) (d^j b)(d^{k-j+1} f)."""
    out = Field(f.grid, np.zeros(f.grid.n))
    for j in range(1, k + 1):
        out = out - dealias(deriv(b, j) * deriv(f, k - j + 1)) * comb(k, j)
    return out


def commutator_source(aux: AuxQuantities, k: int, which: str = "theta") -> Field:
    """``[D_t^2 - iA d_alpha, d^k]`` applied to theta or sigma.

    Expanded as ``D_t [D_t, d^k] f + [D_t, d^k] D_t f + i sum C(k,j)
    (d^j A)(d^{k-j+1} f)`` with ``D_t d^m f = d^m D_t f + [D_t, d^m] f`` and
    ``D_t d^j b = d^j D_t b + [D_t, d^j] b`` substituted so that no time
    differencing occurs.
    """
    if which not in ("theta", "sigma"):
        raise ValueError(f"which must be 'theta' or 'sigma', got {which!r}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    f, Dtf = ((aux.theta, aux.sigma) if which == "theta"
              else (aux.sigma, aux.Dt_sigma))
    grid = f.grid
    if k == 0:
        return Field(grid, np.zeros(grid.n))

    b, Dtb, A = aux.b, aux.Dtb, aux.A
    out = _cb(b, k, Dtf)  # [D_t, d^k] D_t f
    for j in range(1, k + 1):
        cj = comb(k, j)
        m = k - j + 1
        Dt_djb = deriv(Dtb, j) + _cb(b, j, b)
        Dt_dmf = deriv(Dtf, m) + _cb(b, m, f)
        out = out - dealias(Dt_djb * deriv(f, m)) * cj
        out = out - dealias(deriv(b, j) * Dt_dmf) * cj
        out = out + dealias(deriv(A, j) * deriv(f, m)) * (1j * cj)
    return out


def main_term_gap(state: WaveState, aux: AuxQuantities, region) -> dict:
    """Raw long-time main-term diagnostics over ``region`` (no pass/fail).

    ``region`` is an iterable of (lo, hi) alpha-intervals, none of which may
    contain alpha = 0 (the comparisons carry t/alpha and alpha/t factors).
    Reports ``|(I-H)G1|_L2`` (global), ``|G2 - i(t/alpha)|w|^2 sigma|_L2``
    and ``|b + (2 alpha/t)|w|^2|_Linf`` over the region.
    """
    if state.t == 0.0:
        raise ValueError("main-term comparisons need t > 0")
    al = nodes(state.grid)
    mask = np.zeros(state.grid.n, dtype=bool)
    for lo, hi in region:
        if lo >= hi:
            raise ValueError(f"empty interval ({lo}, {hi})")
        if lo <= 0.0 <= hi:
            raise ValueError("region must not touch alpha = 0")
        mask |= (al >= lo) & (al <= hi)
    if not mask.any():
        raise ValueError("region contains no grid nodes")

    c = _curve(state, None)
    G1, G2 = compute_G(state, aux, c)
    ig1 = norm_l2(_im_h(c, G1))

    w2 = np.abs(aux.w.samples) ** 2
    g2_model = 1j * (state.t / al) * w2 * aux.sigma.samples
    g2_gap = np.sqrt(state.grid.dalpha
                     * np.sum(np.abs((G2.samples - g2_model)[mask]) ** 2))
    b_model = -(2.0 * al / state.t) * w2
    b_gap = float(np.max(np.abs((aux.b.samples - b_model)[mask])))
    return {"IG1_l2": ig1, "G2_gap_l2": float(g2_gap), "b_gap_linf": b_gap}
