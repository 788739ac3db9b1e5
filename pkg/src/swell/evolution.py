"""Admissible initial data, laboratory-frame time derivatives, RK4 stepping,
and the checkpointed run loop.

The evolved pair is ``(zeta - alpha, u)``.  Advection and acceleration
coefficients are reassembled from scratch inside every right-hand-side
evaluation, so the stepper never integrates stale geometry.  Class membership
is monitored rather than enforced: the mean-free constraint channel measures
geometric drift (the correctness signal), while the constant channel drifts at
the rate of the b-equation's forced shift -- a property of the periodic frame
itself that no admissible real coefficient can cancel -- and is reported
separately, outside the ceiling check.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cauchy import CurveHandle, cauchy_project
from .errors import ChordArcError, ConfigError, FieldError, IOFormatError, \
    SolverError, TaylorSignError
from .grid import Field, GridSpec, apply_filter, dealias, deriv, \
    field_record, from_modes, half_deriv, make_grid, mode_numbers, nodes, \
    norm_hs, norm_hs_half, norm_l2, norm_linf, parse_field_record, to_modes
from .quantities import WaveState, compute_A, compute_aux, compute_b, \
    compute_w

__all__ = [
    "RunConfig",
    "Trajectory",
    "load_config",
    "config_from_dict",
    "config_hash",
    "measured_epsilon",
    "make_initial_data",
    "rhs",
    "rhs_linear",
    "step_rk4",
    "reproject",
    "run",
    "constraint_residual",
    "checkpoint_record",
    "parse_checkpoint_record",
    "read_checkpoints",
]

PROFILES = ("gaussian-packet", "single-mode", "file")

# Top of the positive-frequency band the packet profile populates.  Chosen
# against the refinement ladder n in {256, 512, 1024} with third-fraction
# dealiasing: the band itself (<= 84) survives every cutoff, its quadratic
# interactions (<= 168) are truncated at n=256 but kept from n=512 on, and
# its cubic interactions (<= 252) are truncated at n=512 but kept at n=1024.
PACKET_BAND_TOP = 84

_CKPT_MAGIC = b"CKP1"

_INT_KEYS = ("n", "carrier_wavenumber", "s_track", "seed", "reproject_every")
_FLOAT_KEYS = ("length", "epsilon", "t_end", "dt_safety", "solver_tol",
               "snapshot_dt", "filter_strength")


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one simulation run (JSON round-trippable).

    ``epsilon = 0`` selects the exact equilibrium and ``t_end = 0`` a
    single-snapshot run; both degenerate settings are admitted on purpose --
    they anchor the fixed-point and plumbing tests.  ``constraint_ceiling``
    of None resolves to ``1e-7 * epsilon`` (with a roundoff floor), the
    admissibility threshold for initial data and the monitored bound during
    stepping.  ``solver_tol`` defaults to 1e-10 because the default
    profile's dealias-truncation floor for the acceleration solve at n=512
    sits at 3e-11 (measured); tighter tolerances are reachable on finer
    grids or smaller amplitudes and can simply be configured there.
    """

    n: int = 512
    length: float = 2.0
    epsilon: float = 1e-2
    profile: str = "gaussian-packet"
    profile_path: str | None = None
    carrier_wavenumber: int = 16
    s_track: int = 4
    t_end: float = 50.0
    dt_safety: float = 0.5
    solver_tol: float = 1e-10
    constraint_ceiling: float | None = None
    snapshot_dt: float = 1.0
    checkpoint_path: str | None = None
    seed: int = 0
    reproject_every: int = 0
    filter_strength: float = 36.0

    def __post_init__(self):
        for key in _INT_KEYS:
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"config key {key!r} must be an integer, "
                                  f"got {v!r}")
        for key in _FLOAT_KEYS:
            v = getattr(self, key)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"config key {key!r} must be a number, "
                                  f"got {v!r}")
            object.__setattr__(self, key, float(v))
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}; "
                              f"expected one of {PROFILES}")
        if self.profile == "file" and not self.profile_path:
            raise ConfigError("profile 'file' requires profile_path")
        if self.epsilon < 0.0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.t_end < 0.0:
            raise ConfigError(f"t_end must be >= 0, got {self.t_end}")
        if not 0.0 < self.dt_safety <= 1.0:
            raise ConfigError(f"dt_safety must lie in (0, 1], "
                              f"got {self.dt_safety}")
        if self.solver_tol <= 0.0:
            raise ConfigError(f"solver_tol must be > 0, got {self.solver_tol}")
        if self.snapshot_dt <= 0.0:
            raise ConfigError(f"snapshot_dt must be > 0, "
                              f"got {self.snapshot_dt}")
        if self.s_track < 0:
            raise ConfigError(f"s_track must be >= 0, got {self.s_track}")
        if self.carrier_wavenumber < 1:
            raise ConfigError(f"carrier_wavenumber must be >= 1, "
                              f"got {self.carrier_wavenumber}")
        if self.reproject_every < 0:
            raise ConfigError(f"reproject_every must be >= 0, "
                              f"got {self.reproject_every}")
        if self.filter_strength < 0.0:
            raise ConfigError(f"filter_strength must be >= 0, "
                              f"got {self.filter_strength}")
        if self.constraint_ceiling is not None:
            if isinstance(self.constraint_ceiling, bool) or \
                    not isinstance(self.constraint_ceiling, (int, float)):
                raise ConfigError("config key 'constraint_ceiling' must be "
                                  "a number or null")
            object.__setattr__(self, "constraint_ceiling",
                               float(self.constraint_ceiling))
            if self.constraint_ceiling <= 0.0:
                raise ConfigError("constraint_ceiling must be > 0 when given")

    @property
    def effective_ceiling(self) -> float:
        if self.constraint_ceiling is not None:
            return self.constraint_ceiling
        return max(1e-7 * self.epsilon, 1e-13)

    def grid(self) -> GridSpec:
        return make_grid(self.n, self.length)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def config_from_dict(raw: dict) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown))
    return RunConfig(**raw)


def load_config(path) -> RunConfig:
    """Parse a JSON run configuration; unknown keys are rejected."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON at line {e.lineno}, "
                          f"column {e.colno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return config_from_dict(raw)


def config_hash(config: RunConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# --------------------------------------------------------------- initial data


def measured_epsilon(state: WaveState, s: int = 0) -> float:
    """Amplitude functional the smallness parameter refers to.

    ``||u||_{H^{s+1/2}} + ||Lambda^{1/2} delta||_{L2} + ||d_alpha delta||_{H^s}``
    with ``delta = zeta - alpha``.  Initial data is normalized at the base
    level ``s = 0``, where all three weights are O(1) on the occupied band
    and epsilon therefore sets the physical wave-slope scale; at ``s = 4``
    the band-edge weight ``k^{s+1/2} ~ 5e8`` shrinks every admissible state
    to sub-roundoff amplitudes (a measured fact, not a style choice), which
    would put all quadratic and cubic observables below the solver floor.
    """
    d = state.zeta_offset
    return (norm_hs_half(state.u, s) + norm_l2(half_deriv(d))
            + norm_hs(deriv(d), s))


def _project_class(delta: Field, u: Field, max_iter: int = 100,
                   target: float = 1e-14):
    """Averaging projection of ``(conj delta, conj u)`` onto the curved class.

    Alternates the reproducing projector (I+H)/2 on the curve induced by the
    current ``delta``; returns the pair and the final mean-free residual.
    """
    res = math.inf
    for _ in range(max_iter):
        c = CurveHandle(delta)
        db = cauchy_project(c, delta.conj(), "plus")
        ub = cauchy_project(c, u.conj(), "plus")
        delta, u = db.conj(), ub.conj()
        st = WaveState(t=0.0, zeta_offset=delta, u=u, grid=delta.grid)
        r = st.constraint_residual(CurveHandle(delta))
        res = max(r["zeta"], r["u"])
        if res < target:
            break
    return delta, u, res


def _band_limit(f: Field, k_top: int) -> Field:
    """Keep only the positive-frequency modes 1..k_top."""
    m = mode_numbers(f.grid)
    c = to_modes(f)
    c[(m <= 0) | (m > k_top)] = 0.0
    return from_modes(f.grid, c)


def _packet_trial(grid: GridSpec, k0: int, seed: int) -> Field:
    """Gaussian envelope x carrier, banded to positive frequencies <= 84.

    The envelope width 1/20 puts a spectral width of ~20 modes around the
    carrier: the band edge holds ~0.3% relative amplitude, enough content
    near the dealiasing cutoffs for the refinement ladder to bite while
    keeping the n=512 truncation floor of the coefficient solves below the
    default solver tolerance (wider envelopes push that floor above 1e-11
    and the default run could not solve its own coefficients).  The seed
    jitters the packet center and carrier phase only; the shape is shared
    across seeds.
    """
    rng = np.random.default_rng(seed)
    center = math.pi * grid.length + 0.35 * rng.standard_normal()
    phase = rng.uniform(0.0, 2.0 * math.pi)
    d = nodes(grid) - center
    d = (d + grid.period / 2.0) % grid.period - grid.period / 2.0
    env = np.exp(-0.5 * (d * 20.0) ** 2)
    trial = Field(grid, env * np.exp(1j * (k0 * d + phase)))
    return _band_limit(trial, min(PACKET_BAND_TOP, grid.mode_keep - 1))


def _single_mode_trial(grid: GridSpec, k0: int) -> Field:
    if k0 >= grid.mode_keep:
        raise ConfigError(f"carrier_wavenumber {k0} is outside the retained "
                          f"band (< {grid.mode_keep}) at n = {grid.n}")
    coef = np.zeros(grid.n, dtype=np.complex128)
    coef[mode_numbers(grid) == k0] = 1.0
    return from_modes(grid, coef)


def _state_from_file(config: RunConfig) -> WaveState:
    state, _ = read_checkpoints(config.profile_path)[-1]
    if state.grid.n != config.n or state.grid.length != config.length:
        raise ConfigError(
            f"checkpoint grid (n={state.grid.n}, length={state.grid.length}) "
            f"does not match config (n={config.n}, length={config.length})")
    state.validate(config.effective_ceiling)
    return state


def make_initial_data(config: RunConfig) -> WaveState:
    """Admissible initial state for ``config``.

    Builds the profile's envelope-times-carrier trial pair in the flat
    positive-frequency band, pulls it onto the curved holomorphicity class by
    averaging projection, and rescales until the measured amplitude
    functional matches ``config.epsilon`` (to 0.2%, contract 1%).  Profile
    ``file`` loads the last checkpoint record verbatim instead.
    """
    if config.profile == "file":
        return _state_from_file(config)
    grid = config.grid()
    if config.epsilon == 0.0:
        zero = Field(grid, np.zeros(grid.n))
        return WaveState(t=0.0, zeta_offset=zero, u=zero, grid=grid)
    if config.profile == "single-mode":
        delta = _single_mode_trial(grid, config.carrier_wavenumber)
    else:
        delta = _packet_trial(grid, config.carrier_wavenumber, config.seed)
    u = half_deriv(delta) * (-1j)

    target = config.epsilon
    state = WaveState(t=0.0, zeta_offset=delta, u=u, grid=grid)
    r0 = target / measured_epsilon(state)
    delta, u = delta * r0, u * r0

    res = math.inf
    for _ in range(8):
        delta, u, res = _project_class(delta, u)
        state = WaveState(t=0.0, zeta_offset=delta, u=u, grid=grid)
        ratio = target / measured_epsilon(state)
        if abs(ratio - 1.0) <= 2e-3:
            break
        delta, u = delta * ratio, u * ratio
    else:
        raise SolverError("initial-data amplitude rescale did not settle "
                          "within 8 projection passes")
    if res >= config.effective_ceiling:
        raise SolverError(
            f"initial-data projection stalled at residual {res:.3e} "
            f"(ceiling {config.effective_ceiling:.1e})", residual=res)
    return state


# ------------------------------------------------------------ time derivative


def rhs(state: WaveState, *, tol: float = 1e-11):
    """Laboratory-frame derivatives ``(d_t(zeta - alpha), d_t u)``.

    ``d_t zeta = u - b zeta_alpha`` and ``d_t u = w - b d_alpha u`` with the
    advection coefficient and the acceleration field reassembled on the
    instantaneous geometry; both outputs are dealiased.  Geometry and sign
    guards (chord-arc, Taylor) propagate as exceptions.
    """
    c = state.curve
    b = compute_b(state, c, tol=tol)
    A = compute_A(state, c, tol=tol)
    w = compute_w(state, A)
    za = Field(state.grid, c.zeta_alpha)
    dzeta = dealias(state.u - b * za)
    du = dealias(w - b * deriv(state.u))
    return dzeta, du


def rhs_linear(state: WaveState, *, tol: float = 0.0):
    """Linearized derivatives with ``b = 0, A = 1`` forced.

    The system collapses to ``d_t(zeta - alpha) = u, d_t u = i d_alpha
    (zeta - alpha)``, whose on-class modes satisfy the exact dispersion
    ``omega = sqrt(k)``; used as the manufactured problem for temporal-order
    measurements.  ``tol`` is accepted for signature compatibility.
    """
    del tol
    return state.u, deriv(state.zeta_offset) * 1j


# -------------------------------------------------------------------- stepper


def step_rk4(state: WaveState, dt: float, *, tol: float = 1e-11,
             filter_strength: float = 36.0, rhs_fn=None) -> WaveState:
    """One classical four-stage explicit step of size ``dt``.

    Coefficients are recomputed at every stage; the combined increment is
    dealiased and (for ``filter_strength > 0``) smoothed by the exponential
    high-mode filter.  A chord-arc or Taylor-sign violation at any stage
    aborts the whole step by propagating the guard's exception.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    f = rhs if rhs_fn is None else rhs_fn
    z0, u0, t0 = state.zeta_offset, state.u, state.t
    grid = state.grid

    def at(tau: float, dz: Field, du: Field) -> WaveState:
        return WaveState(t=t0 + tau, zeta_offset=z0 + dz, u=u0 + du,
                         grid=grid)

    k1z, k1u = f(state, tol=tol)
    k2z, k2u = f(at(dt / 2, k1z * (dt / 2), k1u * (dt / 2)), tol=tol)
    k3z, k3u = f(at(dt / 2, k2z * (dt / 2), k2u * (dt / 2)), tol=tol)
    k4z, k4u = f(at(dt, k3z * dt, k3u * dt), tol=tol)

    zn = dealias(z0 + (k1z + (k2z + k3z) * 2.0 + k4z) * (dt / 6.0))
    un = dealias(u0 + (k1u + (k2u + k3u) * 2.0 + k4u) * (dt / 6.0))
    if filter_strength > 0.0:
        zn = apply_filter(zn, strength=filter_strength)
        un = apply_filter(un, strength=filter_strength)
    return WaveState(t=t0 + dt, zeta_offset=zn, u=un, grid=grid)


def reproject(state: WaveState) -> WaveState:
    """One full class re-projection pass (used when reproject_every > 0)."""
    delta, u, _ = _project_class(state.zeta_offset, state.u, max_iter=25)
    return WaveState(t=state.t, zeta_offset=delta, u=u, grid=state.grid)


def constraint_residual(state: WaveState, curve=None):
    """Mean-free L2 residuals ``(r_zeta, r_u)`` of the two class constraints.

    The constant channel is excluded here (see
    ``WaveState.constraint_residual`` for the split and the rationale); it is
    available from the same call's ``*_const`` entries when needed.
    """
    res = state.constraint_residual(curve)
    return res["zeta"], res["u"]


# ------------------------------------------------------------------- run loop


@dataclass(frozen=True)
class Trajectory:
    """Cadence-aligned states and energy snapshots of one run.

    ``terminated_early`` is None for a clean run, otherwise one of
    ``chord-arc | taylor-sign | solver | nan | constraint``; the recorded
    checkpoints always end at the last state that passed its checks.
    """

    config: RunConfig
    config_hash: str
    states: tuple
    snapshots: tuple
    step_count: int
    wall_time: float
    terminated_early: str | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


def _cadence(t_end: float, dt_snap: float) -> list:
    if t_end <= 0.0:
        return [0.0]
    k_full = int(math.floor(t_end / dt_snap + 1e-9))
    ts = [k * dt_snap for k in range(k_full + 1)]
    if ts[-1] < t_end - 1e-9 * max(1.0, t_end):
        ts.append(t_end)
    else:
        ts[-1] = t_end
    return ts


def _failure_reason(exc: Exception) -> str:
    if isinstance(exc, ChordArcError):
        return "chord-arc"
    if isinstance(exc, TaylorSignError):
        return "taylor-sign"
    if isinstance(exc, FieldError):
        # Field construction rejects non-finite samples, so a blowup
        # surfaces here rather than as NaNs propagating through the state.
        return "nan"
    return "solver"


_GUARDS = (ChordArcError, TaylorSignError, SolverError, FieldError)


def run(config: RunConfig) -> Trajectory:
    """Integrate to ``t_end`` with snapshotting at the output cadence.

    The step size is re-chosen per cadence interval as
    ``dt_safety * dalpha / max(1, max|A|, max|b|)`` and rounded down so an
    integer number of steps lands exactly on the boundary -- the trajectory
    is a pure function of the config.  Early terminations record their cause
    and leave the already-validated prefix in place.
    """
    from . import diagnostics

    t_wall = time.perf_counter()
    state = make_initial_data(config)
    grid = state.grid
    chash = config_hash(config)
    ceiling = config.effective_ceiling
    bounds = [state.t + b for b in _cadence(config.t_end, config.snapshot_dt)]

    states, snaps = [], []
    steps = 0
    reason = None
    ck = open(config.checkpoint_path, "wb") if config.checkpoint_path else None
    try:
        i = 0
        while True:
            try:
                # tolerant solves: snapshots must report degraded coefficient
                # floors, not kill the run; stepping stays strict inside rhs
                aux = compute_aux(state, tol=config.solver_tol, strict=False)
            except _GUARDS as e:
                reason = _failure_reason(e)
                break
            res = state.constraint_residual()
            snaps.append(diagnostics.energy_snapshot(
                state, aux, s_track=config.s_track, constraint=res))
            states.append(state)
            if ck is not None:
                ck.write(checkpoint_record(state, chash))
            if max(res["zeta"], res["u"]) > ceiling:
                reason = "constraint"
                break
            if i >= len(bounds) - 1:
                break
            interval = bounds[i + 1] - bounds[i]
            dt_nom = config.dt_safety * grid.dalpha / max(
                1.0, norm_linf(aux.A), norm_linf(aux.b))
            m = max(1, int(math.ceil(interval / dt_nom - 1e-12)))
            dt = interval / m
            try:
                for _ in range(m):
                    state = step_rk4(state, dt, tol=config.solver_tol,
                                     filter_strength=config.filter_strength)
                    steps += 1
                    if config.reproject_every and \
                            steps % config.reproject_every == 0:
                        state = reproject(state)
            except _GUARDS as e:
                reason = _failure_reason(e)
                break
            # land on the boundary exactly (fp-accumulated t would drift)
            state = WaveState(t=bounds[i + 1], zeta_offset=state.zeta_offset,
                              u=state.u, grid=grid)
            i += 1
    finally:
        if ck is not None:
            ck.close()
    return Trajectory(config=config, config_hash=chash, states=tuple(states),
                      snapshots=tuple(snaps), step_count=steps,
                      wall_time=time.perf_counter() - t_wall,
                      terminated_early=reason)


# ---------------------------------------------------------------- checkpoints


def checkpoint_record(state: WaveState, chash: str) -> bytes:
    """One self-contained checkpoint: magic, config hash, both field records."""
    return (_CKPT_MAGIC + bytes.fromhex(chash)
            + field_record(state.zeta_offset, state.t)
            + field_record(state.u, state.t))


def parse_checkpoint_record(buf: bytes, offset: int = 0,
                            dealias_fraction: float = 1.0 / 3.0):
    """Decode one checkpoint record; returns (state, config_hash, next_offset)."""
    if buf[offset:offset + 4] != _CKPT_MAGIC:
        raise IOFormatError(f"bad checkpoint magic at byte {offset}")
    if len(buf) < offset + 36:
        raise IOFormatError("truncated checkpoint header")
    chash = buf[offset + 4:offset + 36].hex()
    z, t1, off = parse_field_record(buf, offset + 36, dealias_fraction)
    u, t2, off = parse_field_record(buf, off, dealias_fraction)
    if t1 != t2:
        raise IOFormatError(f"checkpoint field times disagree "
                            f"({t1!r} vs {t2!r})")
    state = WaveState(t=t1, zeta_offset=z, u=u, grid=z.grid)
    return state, chash, off


def read_checkpoints(path, dealias_fraction: float = 1.0 / 3.0) -> list:
    """All (state, config_hash) records of a checkpoint file, in order."""
    buf = Path(path).read_bytes()
    out = []
    off = 0
    while off < len(buf):
        state, chash, off = parse_checkpoint_record(buf, off,
                                                    dealias_fraction)
        out.append((state, chash))
    if not out:
        raise IOFormatError(f"{path}: no checkpoint records")
    return out
