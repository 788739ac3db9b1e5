"""Uniform periodic grid, spectral transforms, derivatives, and norms.

Everything else in the package is built on the objects here: a uniform grid
on the fundamental domain [-pi*L, pi*L) with spacing ``dalpha = 2*pi*L/n``,
complex sample vectors (:class:`Field`), and the standard pseudospectral
operator set — spectral derivatives, the fractional derivative
``Lambda^(1/2)`` with symbol ``|k|^(1/2)``, sharp frequency cutoffs, the flat
Hilbert transform with symbol ``-sgn(k)``, dealiasing, and a mild exponential
filter.

Conventions
-----------
Wavenumbers are ``k_m = m / L`` for integer mode numbers
``m in {-n/2, ..., n/2 - 1}``; a sample vector ``f`` represents
``f(alpha_j)`` at ``alpha_j = -pi*L + j*dalpha``.  The mean mode is
annihilated by the Hilbert transform and by ``Lambda^(1/2)`` so that the
periodic operators agree with their whole-line counterparts on zero-mean
data.  L2 norms use the trapezoid weight ``dalpha`` (exact for periodic
trigonometric polynomials, and equal to the mode-space sum by Parseval).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import FieldError, GridError, IOFormatError

__all__ = [
    "GridSpec",
    "Field",
    "make_grid",
    "nodes",
    "mode_numbers",
    "wavenumbers",
    "to_modes",
    "from_modes",
    "deriv",
    "half_deriv",
    "freq_cutoff",
    "flat_hilbert",
    "dealias",
    "apply_filter",
    "filter_multiplier",
    "norms",
    "norm_l2",
    "norm_linf",
    "norm_hs",
    "norm_hs_half",
    "inner_l2",
    "write_field",
    "read_field",
]


@dataclass(frozen=True)
class GridSpec:
    """Immutable description of the periodic grid.

    Parameters
    ----------
    n : int
        Number of grid points; even and at least 16.
    length : float
        The scale ``L``; the fundamental domain is ``[-pi*L, pi*L)`` and the
        period is ``2*pi*L``.
    dealias_fraction : float
        Fraction of top modes zeroed by :func:`dealias` after every
        nonlinear product; in ``[0, 1/2)``.
    """

    n: int
    length: float
    dealias_fraction: float = 1.0 / 3.0

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise GridError(f"n must be an integer, got {self.n!r}")
        if self.n % 2 != 0:
            raise GridError(f"n must be even, got {self.n}")
        if self.n < 16:
            raise GridError(f"n must be >= 16, got {self.n}")
        if not np.isfinite(self.length) or self.length <= 0:
            raise GridError(f"length must be positive, got {self.length!r}")
        if not (0.0 <= self.dealias_fraction < 0.5):
            raise GridError(
                f"dealias_fraction out of range [0, 1/2): {self.dealias_fraction!r}"
            )

    @property
    def dalpha(self) -> float:
        """Grid spacing ``2*pi*L/n``."""
        return 2.0 * np.pi * self.length / self.n

    @property
    def period(self) -> float:
        return 2.0 * np.pi * self.length

    @property
    def mode_keep(self) -> int:
        """Largest |mode number| kept by :func:`dealias`."""
        return int(np.floor((self.n // 2) * (1.0 - self.dealias_fraction)))


def make_grid(n: int, length: float, dealias_fraction: float = 1.0 / 3.0) -> GridSpec:
    """Validate and build a :class:`GridSpec`.

    Raises
    ------
    GridError
        If ``n`` is odd or below 16, ``length`` is not positive, or the
        dealias fraction is outside ``[0, 1/2)``.
    """
    return GridSpec(n=int(n), length=float(length),
                    dealias_fraction=float(dealias_fraction))


@dataclass(frozen=True)
class Field:
    """Complex samples of a scalar function on the grid nodes.

    ``samples[j] ~ f(alpha_j)`` with ``alpha_j = -pi*L + j*dalpha``.  The
    constructor copies input to a contiguous complex128 vector and enforces
    the invariants (length ``n``, all samples finite); every arithmetic
    operation returns a new validated Field.
    """

    grid: GridSpec
    samples: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.samples, dtype=np.complex128)
        if arr.ndim != 1 or arr.shape[0] != self.grid.n:
            raise FieldError(
                f"samples must be a length-{self.grid.n} vector, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr.view(np.float64))):
            raise FieldError("non-finite samples in Field")
        object.__setattr__(self, "samples", arr)

    # -- arithmetic (small conveniences; heavy lifting stays on raw arrays) --

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise FieldError("Field grids differ")
            return other.samples
        return np.asarray(other, dtype=np.complex128)

    def __add__(self, other) -> "Field":
        return Field(self.grid, self.samples + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other) -> "Field":
        return Field(self.grid, self.samples - self._coerce(other))

    def __rsub__(self, other) -> "Field":
        return Field(self.grid, self._coerce(other) - self.samples)

    def __mul__(self, other) -> "Field":
        return Field(self.grid, self.samples * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Field":
        return Field(self.grid, self.samples / self._coerce(other))

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.samples)

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.samples))

    @property
    def real_part(self) -> np.ndarray:
        return self.samples.real.copy()

    @property
    def imag_part(self) -> np.ndarray:
        return self.samples.imag.copy()


def as_field(grid: GridSpec, values) -> Field:
    """Wrap raw values as a validated Field on ``grid``."""
    return Field(grid, np.asarray(values))


@lru_cache(maxsize=64)
def nodes(spec: GridSpec) -> np.ndarray:
    """Grid nodes ``alpha_j = -pi*L + j*dalpha`` (read-only view)."""
    a = -np.pi * spec.length + spec.dalpha * np.arange(spec.n)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=64)
def mode_numbers(spec: GridSpec) -> np.ndarray:
    """Integer mode numbers in FFT order: 0, 1, ..., n/2-1, -n/2, ..., -1."""
    m = np.fft.fftfreq(spec.n, d=1.0 / spec.n).astype(np.int64)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=64)
def wavenumbers(spec: GridSpec) -> np.ndarray:
    """Wavenumbers ``k_m = m / L`` in FFT order."""
    k = mode_numbers(spec) / spec.length
    k.setflags(write=False)
    return k


def to_modes(f: Field) -> np.ndarray:
    """Mode coefficients ``c_m`` with ``f_j = sum_m c_m exp(i k_m alpha_j)``
    up to the uniform node phase (all operators here are diagonal
    multipliers, which are phase-agnostic)."""
    return np.fft.fft(f.samples) / f.grid.n


def from_modes(spec: GridSpec, c: np.ndarray) -> Field:
    return Field(spec, np.fft.ifft(np.asarray(c, dtype=np.complex128) * spec.n))


def _multiplier(f: Field, sym: np.ndarray) -> Field:
    return Field(f.grid, np.fft.ifft(np.fft.fft(f.samples) * sym))


def deriv(f: Field, order: int = 1) -> Field:
    """Spectral derivative: multiplication by ``(i k_m)^order`` in mode space.

    Exact for band-limited fields.  ``order=0`` returns a copy.
    """
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    if order == 0:
        return Field(f.grid, f.samples.copy())
    k = wavenumbers(f.grid)
    return _multiplier(f, (1j * k) ** order)


def half_deriv(f: Field) -> Field:
    """Fractional derivative ``Lambda^(1/2)``: symbol ``|k_m|^(1/2)``.

    The mean mode maps to zero.
    """
    k = wavenumbers(f.grid)
    return _multiplier(f, np.sqrt(np.abs(k)))


def freq_cutoff(f: Field, cutoff: float, keep: str = "low") -> Field:
    """Sharp Fourier projector.

    ``keep="low"`` retains modes with ``|k_m| <= cutoff``; ``keep="high"``
    retains the complement, so low-part + high-part reproduces ``f`` exactly.
    """
    if cutoff < 0:
        raise ValueError(f"cutoff must be >= 0, got {cutoff}")
    if keep not in ("low", "high"):
        raise ValueError(f"keep must be 'low' or 'high', got {keep!r}")
    k = np.abs(wavenumbers(f.grid))
    mask = (k <= cutoff) if keep == "low" else (k > cutoff)
    return _multiplier(f, mask.astype(np.float64))


def flat_hilbert(f: Field) -> Field:
    """Flat Hilbert transform: Fourier multiplier with symbol ``-sgn(k_m)``.

    Modes ``exp(-i k alpha)`` (k > 0) are fixed, modes ``exp(+i k alpha)``
    are negated, and the mean mode maps to zero.  For real input the result
    is purely imaginary.
    """
    m = mode_numbers(f.grid)
    return _multiplier(f, -np.sign(m).astype(np.float64))


def dealias(f: Field) -> Field:
    """Zero the top ``dealias_fraction`` of modes (by |mode number|)."""
    spec = f.grid
    if spec.dealias_fraction == 0.0:
        return Field(spec, f.samples.copy())
    m = np.abs(mode_numbers(spec))
    return _multiplier(f, (m <= spec.mode_keep).astype(np.float64))


def filter_multiplier(spec: GridSpec, strength: float = 36.0,
                      order: int = 36) -> np.ndarray:
    """Exponential filter symbol ``exp(-strength*(|m|/m_keep)^order)``.

    Essentially 1 below three quarters of the dealias cutoff and machine-zero
    at the cutoff; combined with :func:`dealias` during time stepping.
    """
    m = np.abs(mode_numbers(spec)).astype(np.float64)
    m_keep = max(spec.mode_keep, 1)
    return np.exp(-strength * (m / m_keep) ** order)


def apply_filter(f: Field, strength: float = 36.0, order: int = 36) -> Field:
    if strength == 0.0:
        return Field(f.grid, f.samples.copy())
    return _multiplier(f, filter_multiplier(f.grid, strength, order))


# ---------------------------------------------------------------------------
# norms


def norm_l2(f: Field) -> float:
    """L2 norm with quadrature weight ``dalpha``."""
    return float(np.sqrt(f.grid.dalpha * np.sum(np.abs(f.samples) ** 2)))


def norm_linf(f: Field) -> float:
    return float(np.max(np.abs(f.samples)))


def inner_l2(f: Field, g: Field) -> complex:
    """Trapezoid inner product ``integral conj(f) * g``."""
    return complex(f.grid.dalpha * np.sum(np.conj(f.samples) * g.samples))


def norm_hs(f: Field, s: float) -> float:
    """Sobolev norm ``(sum_{j<=s} ||d^j f||_L2^2)^(1/2)`` for integer ``s``;
    for non-integer ``s`` the highest term is ``||Lambda^(s-floor(s)) d^floor(s) f||``.
    """
    if s < 0:
        raise ValueError("s must be >= 0")
    c = to_modes(f)
    k2 = wavenumbers(f.grid) ** 2
    total = 0.0
    j = 0
    while j <= int(np.floor(s)):
        total += np.sum(k2**j * np.abs(c) ** 2)
        j += 1
    frac = s - np.floor(s)
    if frac > 0:
        kfrac = np.abs(wavenumbers(f.grid)) ** (2 * frac)
        total += np.sum(kfrac * k2 ** int(np.floor(s)) * np.abs(c) ** 2)
    return float(np.sqrt(f.grid.period * total))


def norm_hs_half(f: Field, s: int) -> float:
    """``H^(s+1/2)``-type norm: ``(||f||_{H^s}^2 + ||Lambda^(1/2) d^s f||^2)^(1/2)``."""
    extra = norm_l2(half_deriv(deriv(f, s)))
    return float(np.sqrt(norm_hs(f, s) ** 2 + extra**2))


def norms(f: Field, s_max: int) -> dict:
    """Norm table: L2, Linf, H^k for 1 <= k <= s_max, and ``||Lambda^(1/2) f||_L2``.

    All values are nonnegative floats.
    """
    out = {"L2": norm_l2(f), "Linf": norm_linf(f)}
    for k in range(1, s_max + 1):
        out[f"H{k}"] = norm_hs(f, k)
    out["Lambda_L2"] = norm_l2(half_deriv(f))
    return out


# ---------------------------------------------------------------------------
# field dump format
#
# One self-describing little-endian binary record:
#   magic 'FLD1' | uint32 n | float64 L | float64 t | n*(re, im) float64
# Deliberately not an npz: zip containers embed timestamps, which would break
# byte-determinism of checkpoints.

_FIELD_MAGIC = b"FLD1"


def field_record(f: Field, t: float) -> bytes:
    """Serialized field record (exact bytes that :func:`write_field` emits)."""
    head = _FIELD_MAGIC + struct.pack("<Idd", f.grid.n, f.grid.length, float(t))
    inter = np.empty(2 * f.grid.n, dtype="<f8")
    inter[0::2] = f.samples.real
    inter[1::2] = f.samples.imag
    return head + inter.tobytes()


def write_field(path, f: Field, t: float = 0.0) -> None:
    with open(path, "wb") as fh:
        fh.write(field_record(f, t))


def parse_field_record(buf: bytes, offset: int = 0,
                       dealias_fraction: float = 1.0 / 3.0):
    """Parse one field record from ``buf`` at ``offset``.

    Returns ``(field, t, next_offset)``.
    """
    if buf[offset:offset + 4] != _FIELD_MAGIC:
        raise IOFormatError("bad field record magic")
    n, length, t = struct.unpack_from("<Idd", buf, offset + 4)
    start = offset + 4 + struct.calcsize("<Idd")
    end = start + 16 * n
    if len(buf) < end:
        raise IOFormatError("truncated field record")
    inter = np.frombuffer(buf[start:end], dtype="<f8")
    samples = inter[0::2] + 1j * inter[1::2]
    spec = GridSpec(n=int(n), length=float(length),
                    dealias_fraction=dealias_fraction)
    return Field(spec, samples), float(t), end


def read_field(path, dealias_fraction: float = 1.0 / 3.0):
    """Read one field record; returns ``(field, t)``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    f, t, _ = parse_field_record(buf, 0, dealias_fraction)
    return f, t
