"""Energy functionals, norm tables, conservation/scaling reports, and
serialized time series.

Energies are evaluated with the same coefficient bundle the stepper used
(no re-solve), so reported drift reflects one consistent discretization.
This module never imports the stepper; reports take any object exposing
``config``, ``config_hash``, ``snapshots`` and ``terminated_early``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cubic import _cb, compute_G
from .errors import IOFormatError
from .grid import Field, deriv, half_deriv, norm_l2, norm_linf, norms
from .quantities import AuxQuantities, WaveState, compute_aux

__all__ = [
    "EnergySnapshot",
    "energy_k",
    "total_energy",
    "energy_snapshot",
    "conservation_report",
    "scaling_report",
    "fit_loglog",
    "write_series",
    "read_series",
    "load_expectations",
    "write_expectations",
]

_EXPECTATIONS_PATH = Path(__file__).with_name("expectations.json")


def energy_k(state: WaveState, aux: AuxQuantities, k: int,
             which: str = "theta") -> complex:
    """Order-``k`` energy ``int |D_t f_k|^2 / A + i int f_k d_alpha conj(f_k)``.

    ``f_k = d_alpha^k f`` for ``f`` one of theta/sigma, with the material
    derivative assembled commutator-corrected from the already-transported
    fields: ``D_t f_k = d^k (D_t f) + [D_t, d^k] f``.  Both quadratic forms
    are real for periodic fields (by parts); the imaginary part is returned
    as a sanity channel, not discarded.
    """
    if which not in ("theta", "sigma"):
        raise ValueError(f"which must be 'theta' or 'sigma', got {which!r}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if which == "theta":
        f, dtf = aux.theta, aux.sigma
    else:
        f, dtf = aux.sigma, aux.Dt_sigma
    fk = deriv(f, k)
    dt_fk = deriv(dtf, k) + _cb(aux.b, k, f)
    da = state.grid.dalpha
    kinetic = np.sum(np.abs(dt_fk.samples) ** 2 / aux.A.samples) * da
    dispersive = 1j * np.sum(fk.samples * np.conj(deriv(fk).samples)) * da
    return complex(kinetic + dispersive)


def total_energy(state: WaveState, aux: AuxQuantities,
                 s_track: int = 4) -> float:
    """Sum of the real parts of all tracked energies, orders 0..s_track."""
    return float(sum(energy_k(state, aux, k, which).real
                     for k in range(s_track + 1)
                     for which in ("theta", "sigma")))


@dataclass(frozen=True)
class EnergySnapshot:
    """Everything the reports need about one instant.

    ``E_theta``/``E_sigma`` hold orders 0..s_track as complex values (the
    imaginary part is the realness sanity channel).  ``anomalous`` flags a
    total energy that is negative beyond the realness noise floor; the
    positivity of the quadratic form is measured, never assumed.
    """

    t: float
    E_theta: tuple
    E_sigma: tuple
    E_total: float
    norms: dict
    constraint: dict
    solver: dict
    anomalous: bool = False


def energy_snapshot(state: WaveState, aux: AuxQuantities | None = None, *,
                    s_track: int = 4, constraint: dict | None = None,
                    curve=None) -> EnergySnapshot:
    """Assemble the full per-instant record (energies, norms, residuals)."""
    c = curve if curve is not None else state.curve
    if aux is None:
        aux = compute_aux(state, c)
    e_theta = tuple(energy_k(state, aux, k, "theta")
                    for k in range(s_track + 1))
    e_sigma = tuple(energy_k(state, aux, k, "sigma")
                    for k in range(s_track + 1))
    e_total = float(sum(e.real for e in e_theta) + sum(e.real for e in e_sigma))

    g1, g2 = compute_G(state, aux, c)
    za1 = Field(state.grid, c.zeta_alpha - 1.0)
    table = {
        "zeta_alpha_minus_1": norms(za1, s_track),
        "u": norms(state.u, s_track),
        "w": norms(aux.w, s_track),
        "theta": norms(aux.theta, s_track),
        "b_linf": norm_linf(aux.b),
        "A_minus_1_linf": norm_linf(aux.A - 1.0),
        "at_over_a_linf": norm_linf(aux.at_over_a),
        "G_l2": norm_l2(g1 + g2),
        "theta_minus_2zeta_l2": norm_l2(aux.theta - state.zeta_offset * 2.0),
        "Lambda_theta_k_L2": norm_l2(half_deriv(deriv(aux.theta, s_track))),
    }
    if constraint is None:
        constraint = state.constraint_residual(c)
    solver = {}
    for name, info in aux.info.items():
        if name == "theta_gap":
            solver[name] = float(info)
        else:
            solver[name] = {"iterations": int(info.iterations),
                            "residual": float(info.residual),
                            "converged": bool(info.converged),
                            "shift_imag": float(info.shift.imag)}
    noise = 1e-9 * (1.0 + sum(abs(e) for e in e_theta + e_sigma))
    return EnergySnapshot(t=state.t, E_theta=e_theta, E_sigma=e_sigma,
                          E_total=e_total, norms=table, constraint=constraint,
                          solver=solver, anomalous=e_total < -noise)


# -------------------------------------------------------------------- reports


def _drift(snapshots) -> tuple:
    e0 = snapshots[0].E_total
    drift = max(abs(s.E_total - e0) for s in snapshots)
    if e0 != 0.0:
        rel = drift / abs(e0)
    else:
        rel = 0.0 if drift == 0.0 else math.inf
    return e0, drift, rel


def conservation_report(traj, paired=None) -> dict:
    """Energy-drift summary; with ``paired`` also the quartic-scaling check.

    ``paired`` must be a second trajectory identical in everything but
    epsilon (paths exempt); the headline number is the drift ratio, expected
    ``(eps_a / eps_b)^4`` for the almost-conserved functional.
    """
    if len(traj.snapshots) < 2:
        raise ValueError("conservation report needs at least two snapshots")
    e0, drift, rel = _drift(traj.snapshots)
    out = {
        "E0": e0,
        "max_drift": drift,
        "rel_drift": rel,
        "t_span": (traj.snapshots[0].t, traj.snapshots[-1].t),
        "terminated_early": traj.terminated_early,
        "series": tuple((s.t, s.E_total) for s in traj.snapshots),
    }
    if paired is not None:
        if len(paired.snapshots) < 2:
            raise ValueError("paired trajectory needs at least two snapshots")
        ours = traj.config.to_dict()
        theirs = paired.config.to_dict()
        exempt = {"epsilon", "checkpoint_path", "profile_path"}
        for key in ours:
            if key not in exempt and ours[key] != theirs[key]:
                raise ValueError(f"paired trajectories differ in {key!r}: "
                                 f"{ours[key]!r} vs {theirs[key]!r}")
        if ours["epsilon"] == theirs["epsilon"]:
            raise ValueError("paired trajectories share epsilon; "
                             "the quartic check needs two amplitudes")
        _, drift_b, _ = _drift(paired.snapshots)
        ratio = drift / drift_b if drift_b != 0.0 else math.nan
        out["pair"] = {
            "epsilons": (ours["epsilon"], theirs["epsilon"]),
            "drift_ratio": ratio,
            "expected_ratio": (ours["epsilon"] / theirs["epsilon"]) ** 4,
        }
    return out


def fit_loglog(x, y) -> float:
    """Least-squares slope of log y vs log x (exact on pure power laws)."""
    lx = np.log(np.asarray(x, dtype=float))
    ly_arg = np.asarray(y, dtype=float)
    if np.any(ly_arg <= 0.0) or np.any(~np.isfinite(ly_arg)):
        return math.nan
    return float(np.polyfit(lx, np.log(ly_arg), 1)[0])


def scaling_report(trajs) -> dict:
    """Fitted amplitude-scaling exponents across an epsilon sweep.

    Uses each trajectory's final snapshot for the flow-quantity norms and the
    whole trajectory for the energy drift; expected exponents are 2 for the
    quadratic coefficients, 3 for the cubic source, 4 for the drift.
    """
    trajs = sorted(trajs, key=lambda tr: -tr.config.epsilon)
    eps = [tr.config.epsilon for tr in trajs]
    if len(set(eps)) < 2:
        raise ValueError("scaling report needs at least two distinct "
                         "epsilon values")
    metrics = {"b": "b_linf", "A_minus_1": "A_minus_1_linf",
               "at_over_a": "at_over_a_linf", "G": "G_l2",
               "theta_minus_2zeta": "theta_minus_2zeta_l2"}
    values = {name: [tr.snapshots[-1].norms[key] for tr in trajs]
              for name, key in metrics.items()}
    values["energy_drift"] = [
        _drift(tr.snapshots)[1] if len(tr.snapshots) > 1 else math.nan
        for tr in trajs]
    slopes = {name: fit_loglog(eps, vals) for name, vals in values.items()}
    return {
        "epsilons": tuple(eps),
        "slopes": slopes,
        "expected": {"b": 2.0, "A_minus_1": 2.0, "at_over_a": 2.0,
                     "G": 3.0, "theta_minus_2zeta": 2.0,
                     "energy_drift": 4.0},
        "values": {name: tuple(vals) for name, vals in values.items()},
    }


# --------------------------------------------------------------------- series


def _series_columns(s_track: int) -> list:
    cols = ["t", "E_total"]
    for which in ("theta", "sigma"):
        for k in range(s_track + 1):
            cols += [f"E_{which}_{k}_re", f"E_{which}_{k}_im"]
    for field in ("zeta_alpha_minus_1", "u", "w", "theta"):
        cols += [f"{field}_L2", f"{field}_Linf"]
        cols += [f"{field}_H{k}" for k in range(1, s_track + 1)]
        cols += [f"{field}_Lambda_L2"]
    cols += ["b_linf", "A_minus_1_linf", "at_over_a_linf", "G_l2",
             "Lambda_theta_k_L2", "r_zeta", "r_u", "r_zeta_const",
             "r_u_const", "anomalous"]
    return cols


def _series_row(snap: EnergySnapshot, s_track: int) -> list:
    row = [snap.t, snap.E_total]
    for energies in (snap.E_theta, snap.E_sigma):
        for e in energies:
            row += [e.real, e.imag]
    for field in ("zeta_alpha_minus_1", "u", "w", "theta"):
        tab = snap.norms[field]
        row += [tab["L2"], tab["Linf"]]
        row += [tab[f"H{k}"] for k in range(1, s_track + 1)]
        row += [tab["Lambda_L2"]]
    row += [snap.norms["b_linf"], snap.norms["A_minus_1_linf"],
            snap.norms["at_over_a_linf"], snap.norms["G_l2"],
            snap.norms["Lambda_theta_k_L2"], snap.constraint["zeta"],
            snap.constraint["u"], snap.constraint["zeta_const"],
            snap.constraint["u_const"], float(snap.anomalous)]
    return row


def write_series(traj, path) -> None:
    """CSV of the snapshot table plus a JSONL sidecar with run metadata.

    The CSV is fully numeric (%.17g, so a reparse reproduces every value
    bit-for-bit); the sidecar at ``<path>.meta.jsonl`` holds the config and
    per-snapshot solver metadata, one sorted-key JSON object per line.
    """
    s_track = traj.config.s_track
    cols = _series_columns(s_track)
    lines = [",".join(cols)]
    for snap in traj.snapshots:
        row = _series_row(snap, s_track)
        if len(row) != len(cols):
            raise IOFormatError(f"series row width {len(row)} != header "
                                f"width {len(cols)}")
        lines.append(",".join("%.17g" % v for v in row))
    meta = [json.dumps({"config": traj.config.to_dict(),
                        "config_hash": traj.config_hash,
                        "step_count": traj.step_count,
                        "terminated_early": traj.terminated_early},
                       sort_keys=True)]
    for snap in traj.snapshots:
        meta.append(json.dumps({"t": snap.t, "solver": snap.solver,
                                "constraint": snap.constraint},
                               sort_keys=True))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8",
                              newline="\n")
        Path(str(path) + ".meta.jsonl").write_text(
            "\n".join(meta) + "\n", encoding="utf-8", newline="\n")
    except OSError as e:
        raise IOFormatError(f"cannot write series at {path}: {e}") from e


def read_series(path):
    """Parse a series CSV back into (column names, value matrix)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IOFormatError(f"cannot read series at {path}: {e}") from e
    lines = [ln for ln in text.split("\n") if ln]
    if not lines:
        raise IOFormatError(f"{path}: empty series file")
    cols = lines[0].split(",")
    try:
        data = np.array([[float(v) for v in ln.split(",")] for ln in
                         lines[1:]], dtype=float)
        data = data.reshape(len(lines) - 1, len(cols))
    except ValueError as e:
        raise IOFormatError(f"{path}: malformed series row: {e}") from e
    return cols, data


# --------------------------------------------------------- regression pinning


def load_expectations(path=None) -> dict:
    """Versioned regression thresholds (recalibrated only by explicit edit)."""
    p = Path(path) if path is not None else _EXPECTATIONS_PATH
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except OSError as e:
        raise IOFormatError(f"cannot read expectations at {p}: {e}") from e
    except json.JSONDecodeError as e:
        raise IOFormatError(f"{p}: malformed expectations JSON at line "
                            f"{e.lineno}: {e.msg}") from e


def write_expectations(data: dict, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8", newline="\n")
