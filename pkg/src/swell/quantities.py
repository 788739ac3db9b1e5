"""Derived interface quantities for the modified-Lagrangian water-wave system.

The prognostic pair is ``(zeta - alpha, u = D_t zeta)``.  Everything else the
analysis consumes -- the advection coefficient ``b``, the normalized
acceleration ``A`` (whose positivity is the Taylor sign condition), the second
material derivative ``w = D_t^2 zeta``, the logarithmic acceleration rate
``a_t/a``, the antiholomorphic projections ``theta`` and ``sigma = D_t theta``,
and the potential-trace derivatives ``Q_alpha`` and ``D_t Q`` -- is recovered
pointwise in time from projection equations of the form ``(I - H)(f W) = g``
whose right-hand sides are multilinear singular integrals in ``(zeta, u)``.

Material derivatives are always assembled through the commutator calculus
(``D_t (I-H)f = (I-H) D_t f - S2([u], f, 1)`` and the kernel transport rules);
nothing in this module differences in time.

Periodic-frame note: each projection equation here is real-solvable only up
to a forced imaginary constant (see the solver module docstring).  The
constants are O(eps^3) class-drift rates; they are reported per solve via
``SolveInfo.shift`` and accounted for downstream, so every defining equation
re-verifies to solver tolerance rather than stalling at an eps^3 floor.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .cauchy import (
    CurveHandle,
    SolveInfo,
    curve_hilbert,
    singular_S,
    solve_projection,
)
from .errors import FieldError, SolverError, TaylorSignError
from .grid import Field, GridSpec, dealias, deriv, norm_l2, norm_linf

__all__ = [
    "WaveState",
    "AuxQuantities",
    "DEFAULT_CONSTRAINT_CEILING",
    "assert_taylor_sign",
    "compute_b",
    "compute_A",
    "compute_A_picard",
    "compute_w",
    "compute_at_over_a",
    "compute_theta",
    "compute_sigma",
    "compute_Dtb",
    "compute_Dt_sigma",
    "compute_Q",
    "compute_Dtw",
    "compute_Dt2b",
    "compute_aux",
    "material_deriv_projected",
]

# Ceiling on the holomorphicity residuals ||(I-H)(conj(zeta)-alpha)|| and
# ||(I-H)conj(u)|| for a state to count as on-class.  Projected initial data
# sits at roundoff; time stepping with the spectral filter keeps it below
# this with a wide margin at the resolutions the test-suite runs.
DEFAULT_CONSTRAINT_CEILING = 1e-7


@dataclass(frozen=True)
class WaveState:
    """Prognostic fields at one instant: interface offset and trace velocity."""

    t: float
    zeta_offset: Field
    u: Field
    grid: GridSpec

    def __post_init__(self) -> None:
        if self.zeta_offset.grid != self.grid or self.u.grid != self.grid:
            raise FieldError("WaveState fields must live on the declared grid")

    @functools.cached_property
    def curve(self) -> CurveHandle:
        """Geometry handle (chord-arc checked on first access)."""
        return CurveHandle(self.zeta_offset)

    def constraint_residual(self, curve: CurveHandle | None = None) -> dict:
        """Residuals of the two holomorphicity constraints, split by channel.

        A constant function is trivially the boundary value of a holomorphic
        function, but the mean-annihilating Hilbert convention gives
        ``(I - H)c = c``: the operator over-tests membership by exactly the
        constant channel.  ``zeta`` and ``u`` are therefore L2 norms of the
        mean-free residual (the geometric content); ``zeta_const`` and
        ``u_const`` report the magnitude of the constant component, which the
        periodic frame drifts at the rate of the b-equation's forced shift
        and which no admissible real coefficient can hold at zero.
        """
        c = curve if curve is not None else self.curve
        out = {}
        for name, f in (("zeta", self.zeta_offset.conj()),
                        ("u", self.u.conj())):
            r = (f - curve_hilbert(c, f)).samples
            k = complex(np.mean(r))
            out[name] = norm_l2(Field(self.grid, r - k))
            out[name + "_const"] = abs(k)
        return out

    def validate(self, ceiling: float = DEFAULT_CONSTRAINT_CEILING,
                 curve: CurveHandle | None = None) -> None:
        res = self.constraint_residual(curve)
        worst = max(res["zeta"], res["u"])
        if worst > ceiling:
            raise FieldError(
                f"holomorphicity constraint residual {worst:.3e} exceeds "
                f"ceiling {ceiling:.1e}"
            )


@dataclass(frozen=True)
class AuxQuantities:
    """Value bundle of all derived quantities at one instant.

    ``info`` maps quantity names to their :class:`SolveInfo` (projection
    solves) plus the float ``theta_gap`` consistency diagnostic.
    """

    b: Field
    A: Field
    w: Field
    at_over_a: Field
    theta: Field
    sigma: Field
    Dt_sigma: Field
    Q_alpha: Field
    DtQ: Field
    Dtb: Field
    Dtw: Field
    info: dict = dataclass_field(default_factory=dict)


def _curve(state: WaveState, curve: CurveHandle | None) -> CurveHandle:
    return curve if curve is not None else state.curve


def _im_h(c: CurveHandle, f: Field) -> Field:
    """(I - H) f."""
    return f - curve_hilbert(c, f)


def _hbar_field(c: CurveHandle) -> Field:
    """conj(zeta_alpha) - 1, the payload of the b- and A-equations."""
    return Field(c.grid, np.conj(c.zeta_alpha) - 1.0)


def assert_taylor_sign(A: Field, floor: float = 0.0) -> float:
    """Check min Re(A) > floor; returns the minimum or raises."""
    amin = float(np.min(A.real_part))
    if amin <= floor:
        raise TaylorSignError(
            f"Taylor sign violated: min A = {amin:.4g} <= {floor:g}"
        )
    return amin


def compute_b(state: WaveState, curve: CurveHandle | None = None, *,
              tol: float = 1e-11, strict: bool = True,
              with_info: bool = False):
    """Advection coefficient from ``(I-H) b = -S1([u], conj(zeta_a)-1, 1)``."""
    c = _curve(state, curve)
    g = -singular_S(c, [state.u], _hbar_field(c), "S1", 1)
    b, info = solve_projection(c, g, tol=tol, strict=strict)
    return (b, info) if with_info else b


def compute_w(state: WaveState, A: Field) -> Field:
    """Second material derivative ``w = i A zeta_alpha - i``."""
    zeta_alpha = 1.0 + deriv(state.zeta_offset)
    return dealias(A * zeta_alpha * 1j - 1j)


def compute_A(state: WaveState, curve: CurveHandle | None = None, *,
              tol: float = 1e-11, strict: bool = True,
              with_info: bool = False):
    """Normalized acceleration from the weighted projection equation.

    Persistence of the velocity constraint closes the A-equation linearly:

    ``(I-H)(A conj(zeta_alpha)) = (I-H)1 + i S2([u], conj(u), 1)``,

    one weighted solve (weight = ``conj(zeta_alpha)``, the solver default),
    no iteration over ``w(A)``.  The unweighted implicit route
    (:func:`compute_A_picard`) converges to the same field to solver
    tolerance and is kept as a structurally independent cross-check.

    Real-valuedness of A matters here: admitting a complex solution lets an
    imaginary constant ~ i slope^3 leak into A (the forced constant of the
    projection equation), which enters ``w = iA zeta_alpha - i`` as a
    non-constant spurious term; solving over real fields modulo the reported
    shift keeps the downstream identities clean.

    Raises :class:`TaylorSignError` if the solved A is nonpositive anywhere.
    """
    c = _curve(state, curve)
    grid = state.grid
    one = Field(grid, np.ones(grid.n))
    g = (_im_h(c, one)
         + singular_S(c, [state.u], state.u.conj(), "S2", 1) * 1j)
    A, info = solve_projection(c, g, weighted=True, tol=tol,
                               strict=strict)
    assert_taylor_sign(A)
    return (A, info) if with_info else A


def compute_A_picard(state: WaveState, curve: CurveHandle | None = None, *,
                     tol: float = 1e-11, picard_tol: float = 1e-12,
                     max_picard: int = 25, with_info: bool = False):
    """Normalized acceleration via the implicit route (cross-check only).

    The unweighted equation ``(I-H)A = 1 + i S2([u], conj(u), 1)
    + i S1([w], conj(zeta_a)-1, 1)`` is implicit because ``w = iA zeta_a - i``.
    Starting from ``A = 1`` the update contracts at the perturbation size, so
    a handful of sweeps reaches solver tolerance; the converged pair
    ``(A, w(A))`` is re-verified against the defining equation.  It agrees
    with :func:`compute_A` to solver tolerance while sharing none of its
    algebra (different equation, different weight, an outer iteration), so
    it serves as a consistency probe rather than the production assembly.

    Raises :class:`TaylorSignError` if the converged A is nonpositive
    anywhere, and :class:`SolverError` if the outer loop stalls.
    """
    c = _curve(state, curve)
    grid = state.grid
    h = _hbar_field(c)
    one = Field(grid, np.ones(grid.n))
    h_of_one = curve_hilbert(c, one)  # spectrally tiny, kept for exactness
    g_fixed = singular_S(c, [state.u], state.u.conj(), "S2", 1) * 1j + h_of_one

    def rhs_tilde(A_cur: Field) -> Field:
        w = compute_w(state, A_cur)
        return g_fixed + singular_S(c, [w], h, "S1", 1) * 1j

    A = one
    iterations = 0
    step = np.inf
    for iterations in range(1, max_picard + 1):
        A_tilde, _ = solve_projection(c, rhs_tilde(A), tol=tol)
        A_new = A_tilde + 1.0
        step = norm_linf(A_new - A)
        A = A_new
        if step <= picard_tol:
            break

    # self-consistency of the full implicit equation at the converged pair,
    # modulo the forced imaginary constant of the periodic frame
    r = (_im_h(c, A) - 1.0 - (rhs_tilde(A) - h_of_one)).samples
    shift = 1j * float(np.mean(r).imag)
    residual = norm_l2(Field(grid, r - shift))
    if step > picard_tol:
        raise SolverError(
            f"A iteration stalled: last update {step:.3e} "
            f"(tol {picard_tol:.1e}) after {iterations} sweeps",
            residual=residual, iterations=iterations,
        )
    assert_taylor_sign(A)
    if with_info:
        return A, SolveInfo(iterations=iterations, residual=residual,
                            converged=True, shift=shift)
    return A


def compute_at_over_a(state: WaveState, A: Field, w: Field,
                      curve: CurveHandle | None = None, *,
                      tol: float = 1e-11, strict: bool = True,
                      with_info: bool = False):
    """Logarithmic acceleration rate from its weighted projection equation.

    ``(I-H)(q A conj(zeta_alpha)) = 2i S2([w], conj(u), 1)
    + 2i S2([u], conj(w), 1) - i S2([u,u], conj(u), 2)``.
    """
    c = _curve(state, curve)
    ubar = state.u.conj()
    g = (singular_S(c, [w], ubar, "S2", 1) * 2j
         + singular_S(c, [state.u], w.conj(), "S2", 1) * 2j
         - singular_S(c, [state.u, state.u], ubar, "S2", 2) * 1j)
    weight = dealias(A * np.conj(c.zeta_alpha))
    q, info = solve_projection(c, g, weighted=True, weight=weight, tol=tol,
                               strict=strict)
    return (q, info) if with_info else q


def compute_theta(state: WaveState, curve: CurveHandle | None = None, *,
                  with_alternate: bool = False):
    """Antiholomorphic part of the interface, ``theta = (I-H)(zeta - alpha)``.

    With ``with_alternate=True`` also returns the equivalent-on-class
    assembly ``(I-H)(zeta - conj(zeta))`` and the L2 gap between the two,
    which equals the raw (constant-channel-inclusive) holomorphicity
    residual of the state exactly.
    """
    c = _curve(state, curve)
    theta = _im_h(c, state.zeta_offset)
    if not with_alternate:
        return theta
    zmz = state.zeta_offset - state.zeta_offset.conj()  # zeta - conj(zeta)
    theta_alt = _im_h(c, zmz)
    return theta, theta_alt, norm_l2(theta_alt - theta)


def material_deriv_projected(state: WaveState, f: Field, Dtf: Field,
                             curve: CurveHandle | None = None) -> Field:
    """``D_t [(I-H) f]`` from the supplied material derivative of ``f``.

    Uses ``D_t (I-H) f = (I-H) D_t f - S2([u], f, 1)``; no time differencing.
    """
    c = _curve(state, curve)
    return _im_h(c, Dtf) - singular_S(c, [state.u], f, "S2", 1)


def compute_sigma(state: WaveState, curve: CurveHandle | None = None) -> Field:
    """``sigma = D_t theta``, transported off ``theta = (I-H)(zeta-conj(zeta))``.

    ``D_t (zeta - conj(zeta)) = u - conj(u)`` exactly, so this assembly needs
    no advection coefficient.  The delta-based assembly
    ``material_deriv_projected(state, delta, u - b)`` differs from it by the
    transported conjugate-class constraint, which on-class is the forced
    constant of the b-equation (cubically small, alpha-independent); the
    constant-free X-form is what the higher identities differentiate, so it
    is the one produced here.
    """
    c = _curve(state, curve)
    X = state.zeta_offset - state.zeta_offset.conj()
    return material_deriv_projected(state, X, state.u - state.u.conj(), c)


def compute_Dtb(state: WaveState, b: Field, w: Field,
                curve: CurveHandle | None = None, *,
                tol: float = 1e-11, strict: bool = True,
                with_info: bool = False):
    """Material derivative of b (diagnostic; the stepper never needs it).

    Transporting the kernel of the b-equation gives

    ``(I-H) D_t b = 2 S2([u], b, 1) - S1([w], h, 1) - S2([u], conj(u), 1)
    + S1([u,u], h, 2)``,   ``h = conj(zeta_alpha) - 1``.
    """
    c = _curve(state, curve)
    h = _hbar_field(c)
    u = state.u
    g = (singular_S(c, [u], b, "S2", 1) * 2.0
         - singular_S(c, [w], h, "S1", 1)
         - singular_S(c, [u], u.conj(), "S2", 1)
         + singular_S(c, [u, u], h, "S1", 2))
    Dtb, info = solve_projection(c, g, tol=tol, strict=strict)
    return (Dtb, info) if with_info else Dtb


def compute_Dt_sigma(state: WaveState, w: Field,
                     curve: CurveHandle | None = None) -> Field:
    """``D_t^2 theta`` by a second transport pass over sigma.

    With ``X = zeta - conj(zeta)``:  sigma = (I-H)(u - conj(u))
    - S2([u], X, 1); transporting once more (``D_t u = w``,
    ``D_t conj(u) = conj(w)``, ``D_t X = u - conj(u)``) gives

    ``(I-H)(w - conj(w)) - 2 S2([u], u - conj(u), 1) - S2([w], X, 1)
    + S2([u, u], X, 2)``.

    No advection coefficient enters: the whole second-derivative identity
    chain closes on ``A`` (through ``w``) and ``a_t/a`` alone.
    """
    c = _curve(state, curve)
    u = state.u
    X = state.zeta_offset - state.zeta_offset.conj()
    return (_im_h(c, w - w.conj())
            - singular_S(c, [u], u - u.conj(), "S2", 1) * 2.0
            - singular_S(c, [w], X, "S2", 1)
            + singular_S(c, [u, u], X, "S2", 2))


def compute_Q(state: WaveState, curve: CurveHandle | None = None):
    """Potential-trace derivatives ``(Q_alpha, D_t Q)``.

    ``conj(Q_alpha) = conj(u) + (zeta_a - 1) conj(u)
    - (1/2)[zeta_a H(m/zeta_a) + conj(zeta_a H(conj(m)/zeta_a))]`` with
    ``m = zeta_a conj(u)``, and

    ``D_t Q = -S1([u], Re{conj(zeta_a) u}, 1) + (1/2)(I-H)|u|^2
    - (1/2i)(I-H)(zeta - conj(zeta))``.
    """
    c = _curve(state, curve)
    grid = state.grid
    za = c.zeta_alpha
    u = state.u
    ubar = u.conj()

    m = Field(grid, za) * ubar
    t1 = curve_hilbert(c, Field(grid, m.samples / za))
    t2 = curve_hilbert(c, Field(grid, np.conj(m.samples) / za))
    qbar_alpha = (ubar + ubar * (za - 1.0)
                  - (t1 * za + (t2 * za).conj()) * 0.5)
    Q_alpha = dealias(qbar_alpha.conj())

    re_m = Field(grid, m.real_part)  # Re{conj(zeta_a) u} = Re{zeta_a conj(u)}
    speed2 = Field(grid, (u * ubar).real_part)
    zmz = state.zeta_offset - state.zeta_offset.conj()
    DtQ = (-singular_S(c, [u], re_m, "S1", 1)
           + _im_h(c, speed2) * 0.5
           - _im_h(c, zmz) * (0.5 / 1j))
    return Q_alpha, DtQ


def compute_Dtw(state: WaveState, A: Field, at_over_a: Field) -> Field:
    """``D_t w = iA (q zeta_alpha + u_alpha)`` with ``q = a_t/a``."""
    zeta_alpha = 1.0 + deriv(state.zeta_offset)
    return dealias((at_over_a * zeta_alpha + deriv(state.u)) * A * 1j)


def compute_Dt2b(state: WaveState, b: Field, Dtb: Field, w: Field,
                 Dtw: Field, curve: CurveHandle | None = None, *,
                 tol: float | None = None, strict: bool = True,
                 with_info: bool = False):
    """Second material derivative of b (kernel transport of the D_t b RHS).

    ``(I-H) D_t^2 b = 3 S2([u],D_tb,1) + 2 S2([w],b,1) - 2 S2([u,u],b,2)
    - S1([D_tw],h,1) + 3 S1([w,u],h,2) - 2 S1([u,u,u],h,3)
    - S2([w], 2conj(u)-b, 1) + S2([u,u], 2conj(u)-b, 2) - S2([u], conj(w), 1)``.
    """
    c = _curve(state, curve)
    h = _hbar_field(c)
    u = state.u
    mixed = u.conj() * 2.0 - b
    g = (singular_S(c, [u], Dtb, "S2", 1) * 3.0
         + singular_S(c, [w], b, "S2", 1) * 2.0
         - singular_S(c, [u, u], b, "S2", 2) * 2.0
         - singular_S(c, [Dtw], h, "S1", 1)
         + singular_S(c, [w, u], h, "S1", 2) * 3.0
         - singular_S(c, [u, u, u], h, "S1", 3) * 2.0
         - singular_S(c, [w], mixed, "S2", 1)
         + singular_S(c, [u, u], mixed, "S2", 2)
         - singular_S(c, [u], w.conj(), "S2", 1))
    Dt2b, info = solve_projection(c, g, tol=tol, strict=strict)
    return (Dt2b, info) if with_info else Dt2b


def compute_aux(state: WaveState, curve: CurveHandle | None = None, *,
                tol: float = 1e-11, strict: bool = True,
                constraint_ceiling: float | None = None) -> AuxQuantities:
    """Assemble every derived quantity off one shared geometry handle.

    ``constraint_ceiling`` (if given) validates the state first; pass None to
    skip for manufactured off-class states.  The ``info`` dict carries one
    :class:`SolveInfo` per projection solve (each with its forced-constant
    ``shift``) plus the L2 gap between the two theta assemblies.  With
    ``strict=False`` under-resolved coefficient solves return their
    truncation floor instead of raising (the ``info`` residuals say which).
    """
    c = _curve(state, curve)
    if constraint_ceiling is not None:
        state.validate(constraint_ceiling, curve=c)

    A, info_a = compute_A(state, c, tol=tol, strict=strict, with_info=True)
    w = compute_w(state, A)
    q, info_q = compute_at_over_a(state, A, w, c, tol=tol, strict=strict,
                                  with_info=True)
    theta, _, theta_gap = compute_theta(state, c, with_alternate=True)
    sigma = compute_sigma(state, c)
    Dt_sigma = compute_Dt_sigma(state, w, c)
    b, info_b = compute_b(state, c, tol=tol, strict=strict, with_info=True)
    Dtb, info_dtb = compute_Dtb(state, b, w, c, tol=tol, strict=strict,
                                with_info=True)
    Q_alpha, DtQ = compute_Q(state, c)
    Dtw = compute_Dtw(state, A, q)
    return AuxQuantities(
        b=b, A=A, w=w, at_over_a=q, theta=theta, sigma=sigma,
        Dt_sigma=Dt_sigma, Q_alpha=Q_alpha, DtQ=DtQ, Dtb=Dtb, Dtw=Dtw,
        info={"b": info_b, "A": info_a, "at_over_a": info_q,
              "Dtb": info_dtb, "theta_gap": theta_gap},
    )
