"""Curve-associated Hilbert transform, multilinear singular integrals, and
projection-equation solvers.

The transform associated with the interface ``zeta(alpha)`` is

    H f(alpha) = (1/(pi i)) p.v. integral  zeta_beta f(beta) / (zeta(alpha) - zeta(beta)) dbeta,

computed as the flat transform (exact Fourier multiplier) plus a smooth
correction kernel integrated by the trapezoid rule, with the analytic
diagonal value ``-zeta_aa/(2 zeta_a)``.  The multilinear sums

    S1: (1/(pi i)) p.v. integral  prod_j (N_j(alpha)-N_j(beta)) / (zeta(alpha)-zeta(beta))^p * f(beta) dbeta
    S2: same with  f_beta(beta) dbeta,

cover every commutator bracket and quadratic/cubic kernel in the package; no
other quadrature path exists, so one code path carries all the validation.
When ``p == len(numerators)`` the full integrand is smooth (each numerator
difference vanishes at the diagonal) and the trapezoid sum is spectrally
accurate; the marginal case ``p == len(numerators) + 1`` retains a simple-pole
principal value whose symmetric lattice sum cancels, and is provided for
contract completeness at O(dalpha) accuracy.

Projection equations ``(I - H) f = g`` (and the weighted variant
``(I - H)(f W) = g``) are solved for real f by the small-perturbation
fixed-point iteration; since the flat transform of a real field is purely
imaginary, taking the real part of the iterate is exact, and the residual of
the original equation is re-checked after convergence.

On a periodic interface the holomorphic class contains the constants (the
strip admits bounded constant limits, unlike the line), so the right-hand
sides assembled from singular integrals are real-solvable only modulo a
purely imaginary constant: the solvable form is ``(I - H)(f W) = g + i
gamma`` with one forced real ``gamma`` per equation.  The fixed-point update
takes real parts and is therefore blind to that constant; the solver reports
it as ``SolveInfo.shift`` and measures the residual against the shifted
equation.  Measured on projected wave states, ``gamma`` is O(slope^3) and
grid-independent, and the shifted residual reaches the roundoff floor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ChordArcError, FieldError, SolverError
from .grid import Field, GridSpec, dealias, deriv, flat_hilbert, nodes, norm_l2

__all__ = [
    "CurveHandle",
    "SolveInfo",
    "curve_hilbert",
    "conj_curve_hilbert",
    "singular_S",
    "singular_S_bar",
    "solve_projection",
    "cauchy_project",
]

# Interface self-approach guard: the measured lower chord-arc ratio must stay
# above this floor, otherwise the parametrization has degenerated and every
# kernel below is meaningless.
MIN_CHORD_ARC = 0.2
MIN_ZETA_ALPHA = 0.5


@lru_cache(maxsize=8)
def _flat_psi(n: int, length: float, backend: str, p: int) -> np.ndarray:
    """psi_p on the flat curve (zeta = alpha), cached per grid/backend.

    Built through the same kernel routine and the same node vector as curved
    matrices, so a handle with zero offset reduces to the flat transform
    bitwise.
    """
    alpha = nodes(GridSpec(n=n, length=length))
    return _kernels.build_psi(alpha.astype(np.complex128), 1.0 / (2.0 * length), p)


class CurveHandle:
    """Immutable bundle of interface geometry and its kernel matrices.

    Parameters
    ----------
    zeta_offset : Field
        ``zeta - alpha`` (periodic part of the interface).

    Raises
    ------
    ChordArcError
        If the sampled chord-arc lower bound or ``min |zeta_alpha|`` falls
        below its floor (self-approaching or degenerate interface).
    """

    def __init__(self, zeta_offset: Field):
        self.grid: GridSpec = zeta_offset.grid
        self.zeta_offset = zeta_offset
        self.zeta = nodes(self.grid) + zeta_offset.samples
        self.zeta_alpha = 1.0 + deriv(zeta_offset).samples
        self.zeta_aa = deriv(zeta_offset, 2).samples
        self._c = 1.0 / (2.0 * self.grid.length)
        self._psi: dict[int, np.ndarray] = {}

        amin = float(np.min(np.abs(self.zeta_alpha)))
        if amin <= MIN_ZETA_ALPHA:
            raise ChordArcError(
                f"min|zeta_alpha| = {amin:.3g} <= {MIN_ZETA_ALPHA}; "
                "interface parametrization degenerated"
            )
        self.chord_arc_bounds = self._chord_arc()
        if self.chord_arc_bounds[0] <= MIN_CHORD_ARC:
            raise ChordArcError(
                f"chord-arc lower bound {self.chord_arc_bounds[0]:.3g} <= "
                f"{MIN_CHORD_ARC}; interface self-approach"
            )

    def _chord_arc(self) -> tuple:
        """Sampled chord/arc ratio bounds ``|zeta(a+g) - zeta(a)| / g``.

        Node separations are scanned densely up to the distance where
        ``g >= span/0.8`` (span = offset diameter); past that point
        ``|chord|/g >= 1 - span/g > MIN_CHORD_ARC`` holds a priori, including
        approaches to periodic images, so the scan is complete.
        """
        n = self.grid.n
        off = self.zeta_offset.samples
        dalpha = self.grid.dalpha
        span = 2.0 * float(np.max(np.abs(off - np.mean(off))))
        d_scan = min(int(np.ceil(span / (0.8 * dalpha))) + 1, 8 * n)
        lo, hi = np.inf, 0.0
        for d in range(1, max(d_scan, 1) + 1):
            gap = d * dalpha
            chord = np.abs(gap + (np.roll(off, -d) - off))
            lo = min(lo, float(np.min(chord)) / gap)
            hi = max(hi, float(np.max(chord)) / gap)
        return (lo, hi)

    def psi(self, p: int) -> np.ndarray:
        """Kernel matrix for power ``p`` (built lazily, cached)."""
        if p not in self._psi:
            self._psi[p] = _kernels.build_psi(self.zeta, self._c, p)
        return self._psi[p]

    def psi_flat(self, p: int) -> np.ndarray:
        return _flat_psi(self.grid.n, self.grid.length,
                         _kernels.current_backend(), p)


def curve_hilbert(c: CurveHandle, f: Field) -> Field:
    """Hilbert transform associated with the interface of ``c``.

    Split as flat transform plus smooth correction: the correction kernel
    ``K(alpha,beta) = zeta_beta psi_1(dzeta) - psi_1(dalpha)`` is periodic and
    smooth with diagonal ``-zeta_aa/(2 zeta_alpha)``, so its trapezoid sum is
    spectrally accurate; on the flat curve the correction vanishes
    identically (same matrix bits) and the reduction to the flat transform
    is exact.
    """
    if f.grid != c.grid:
        raise FieldError("Field grid does not match CurveHandle grid")
    base = flat_hilbert(f).samples
    v = c.zeta_alpha * f.samples
    corr = c.psi(1) @ v - c.psi_flat(1) @ f.samples
    diag = -c.zeta_aa / (2.0 * c.zeta_alpha) * f.samples
    pref = c.grid.dalpha / (np.pi * 1j)
    return dealias(Field(c.grid, base + pref * (corr + diag)))


def conj_curve_hilbert(c: CurveHandle, f: Field) -> Field:
    """The conjugated-operator companion transform: conj(H(conj f)).

    This is the operator written with the conjugated interface in the energy
    and velocity-potential formulas; for a real field on the flat curve it
    reproduces the conjugate of the flat transform.  (It is the complex
    conjugate *of the operator*, not the transform of a different curve.)
    """
    return curve_hilbert(c, f.conj()).conj()


def _subset_products(samples: list[np.ndarray], n: int):
    """Yield (sign, alpha_factor, beta_factor) over all numerator subsets.

    Expands ``prod_j (N_j(alpha) - N_j(beta))`` binomially; the beta factors
    multiply the payload inside the matrix-vector product, the alpha factors
    multiply outside.
    """
    q = len(samples)
    for mask in range(1 << q):
        sign = 1.0
        a = np.ones(n, dtype=np.complex128)
        b = np.ones(n, dtype=np.complex128)
        for idx in range(q):
            if mask & (1 << idx):
                sign = -sign
                b = b * samples[idx]
            else:
                a = a * samples[idx]
        yield sign, a, b


def singular_S(c: CurveHandle, numerators: Sequence[Field], f: Field,
               variant: str = "S2", power: int = 1) -> Field:
    """Multilinear singular integral against the interface Cauchy kernel.

    Computes ``(1/(pi i)) p.v. integral prod_j (N_j(alpha) - N_j(beta)) /
    (zeta(alpha)-zeta(beta))^power * payload(beta) dbeta`` with payload
    ``f(beta)`` for variant "S1" and ``f_beta(beta)`` for variant "S2".
    The alpha = beta node is evaluated by the analytic diagonal limit.

    Raises
    ------
    ValueError
        Empty numerator list, unknown variant, or
        ``power > len(numerators) + 1`` (kernel not integrable).
    """
    if len(numerators) == 0:
        raise ValueError("numerators must be nonempty")
    if variant not in ("S1", "S2"):
        raise ValueError(f"variant must be 'S1' or 'S2', got {variant!r}")
    q = len(numerators)
    if power < 1 or power > q + 1:
        raise ValueError(
            f"power must be in [1, {q + 1}] for {q} numerators, got {power}"
        )
    grid = c.grid
    if f.grid != grid or any(N.grid != grid for N in numerators):
        raise FieldError("Field grid does not match CurveHandle grid")

    payload = f.samples if variant == "S1" else deriv(f).samples
    nums = [N.samples for N in numerators]
    psi = c.psi(power)

    core = np.zeros(grid.n, dtype=np.complex128)
    for sign, a, b in _subset_products(nums, grid.n):
        core += sign * a * (psi @ (b * payload))

    core += _diagonal_term(c, numerators, f, variant, power)
    return dealias(Field(grid, (grid.dalpha / (np.pi * 1j)) * core))


def _diagonal_term(c: CurveHandle, numerators, f: Field, variant: str,
                   power: int) -> np.ndarray:
    """Analytic alpha = beta limit of the S-integrand (times one node weight).

    With q numerators and power p the integrand behaves like h^(q-p) near the
    diagonal: zero limit for q > p; the plain limit ``prod N_j' / zeta_a^p *
    payload`` for q == p; and for q == p - 1 the even part of the Laurent
    expansion (the 1/h odd part cancels in the symmetric lattice sum):

        (p zeta_aa/(2 zeta_a) prod N' - (1/2) sum_j N_j'' prod_{i != j} N_i')
            / zeta_a^p * payload  -  (prod N' / zeta_a^p) * payload'.
    """
    q = len(numerators)
    p = power
    n = c.grid.n
    if q > p:
        return np.zeros(n, dtype=np.complex128)

    dnums = [deriv(N).samples for N in numerators]
    prod_d = np.ones(n, dtype=np.complex128)
    for d in dnums:
        prod_d = prod_d * d
    za_p = c.zeta_alpha**p
    g = f.samples if variant == "S1" else deriv(f).samples

    if q == p:
        return prod_d / za_p * g

    # q == p - 1
    ddnums = [deriv(N, 2).samples for N in numerators]
    cross = np.zeros(n, dtype=np.complex128)
    for j in range(q):
        pj = np.ones(n, dtype=np.complex128)
        for i in range(q):
            if i != j:
                pj = pj * dnums[i]
        cross += ddnums[j] * pj
    gp = deriv(f).samples if variant == "S1" else deriv(f, 2).samples
    even = (p * c.zeta_aa / (2.0 * c.zeta_alpha) * prod_d - 0.5 * cross) / za_p
    return even * g - prod_d / za_p * gp


def singular_S_bar(c: CurveHandle, numerators: Sequence[Field], f: Field,
                   variant: str = "S2", power: int = 1) -> Field:
    """The companion sum with conjugated denominator ``(zbar(a)-zbar(b))^p``.

    Obtained from :func:`singular_S` by conjugation symmetry:
    ``S_bar(N, f) = -conj(S(conj N, conj f))``.
    """
    inner = singular_S(c, [N.conj() for N in numerators], f.conj(),
                       variant, power)
    return -inner.conj()


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    residual: float
    converged: bool
    shift: complex = 0.0j


def _shifted_residual(grid: GridSpec, r: np.ndarray) -> tuple[float, complex]:
    """Residual modulo the forced imaginary constant (see module docstring)."""
    shift = 1j * float(np.mean(r).imag)
    return norm_l2(Field(grid, r - shift)), shift


def solve_projection(c: CurveHandle, g: Field, weighted: bool = False,
                     tol: float = 1e-11, max_iter: int = 60,
                     weight: Field | None = None, strict: bool = True):
    """Solve ``(I - H)(f W) = g + i gamma`` for a real field f (W = 1 if
    unweighted), with gamma the forced real constant of the periodic frame.

    Fixed-point iteration in the small-perturbation regime:

        unweighted:  f <- Re{ g + (H - flatH)(f) }
        weighted:    f <- Re{ g + (H - flatH)(f W) - (I - flatH)(f (W - 1)) }

    Both maps contract at rate O(||zeta_alpha - 1||); the real part is exact
    because the flat transform of a real field is purely imaginary (which is
    also why the iteration never sees ``i gamma``).  The residual of the
    shifted equation is evaluated from a fresh transform after the loop and
    returned in :class:`SolveInfo` together with the shift.

    On a grid that cannot resolve the products in ``f W`` the dealiased
    equation is inconsistent beyond the constant channel and the residual
    floors at the truncation level instead of ``tol``; ``strict=False``
    returns that best-effort solution with ``converged=False`` so refinement
    studies can quantify exactly this floor.

    Returns
    -------
    (Field, SolveInfo)

    Raises
    ------
    SolverError
        If the shifted residual does not reach ``tol`` within ``max_iter``
        and ``strict`` is true.
    """
    grid = c.grid
    if weighted:
        W = weight.samples if weight is not None else np.conj(c.zeta_alpha)
    else:
        W = np.ones(grid.n)

    f = np.zeros(grid.n, dtype=np.float64)
    g_s = g.samples
    iterations = 0
    for iterations in range(1, max_iter + 1):
        fw = Field(grid, f * W)
        h_fw = curve_hilbert(c, fw).samples
        residual, _ = _shifted_residual(grid, fw.samples - h_fw - g_s)
        if residual <= tol:
            break
        flat_fw = flat_hilbert(fw).samples
        upd = g_s + (h_fw - flat_fw)
        if weighted:
            fw1 = Field(grid, f * (W - 1.0))
            upd = upd - (fw1.samples - flat_hilbert(fw1).samples)
        f = np.real(upd)

    out = Field(grid, f.astype(np.complex128))
    # independent post-solve verification of the defining equation
    fw = Field(grid, f * W)
    r = fw.samples - curve_hilbert(c, fw).samples - g_s
    final, shift = _shifted_residual(grid, r)
    info = SolveInfo(iterations=iterations, residual=final,
                     converged=final <= tol, shift=shift)
    if strict and not info.converged:
        raise SolverError(
            f"projection solve stalled at residual {final:.3e} "
            f"(tol {tol:.1e}) after {iterations} iterations",
            residual=final, iterations=iterations,
        )
    return out, info


def cauchy_project(c: CurveHandle, f: Field, sign: str = "minus") -> Field:
    """Projector ``(I -+ H)/2``: "minus" annihilates the holomorphic class
    fixed by H, "plus" reproduces it; the two projectors sum to the identity
    exactly."""
    if sign not in ("minus", "plus"):
        raise ValueError(f"sign must be 'minus' or 'plus', got {sign!r}")
    h = curve_hilbert(c, f).samples
    if sign == "minus":
        return Field(f.grid, 0.5 * (f.samples - h))
    return Field(f.grid, 0.5 * (f.samples + h))
