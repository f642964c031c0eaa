"""Long-time diagnostics: front speed, asymptotic shift and profile convergence.

The tail window is the final ``tail_fraction`` of the run, and it must
start after ``burn_in``. Profiles are compared in the moving frame: the
snapshot u(y) is set against phi(y + delta) with delta = s - c t - x*.
phi is continued by 0 for positive arguments, and psi by 0 for negative
ones.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import TooShort
from .fbpde import Trajectory

__all__ = [
    "Trajectory",
    "SpeedFit",
    "ConvergenceReport",
    "estimate_wave_speed",
    "fit_speed",
    "estimate_shift",
    "profile_error",
    "refine_delta",
    "verify_theorem1",
    "check_speed_bound",
]

TAIL_FRACTION = 0.25
BURN_IN = 10.0
MIN_TAIL = 10
SPEED_REL_TOL = 0.01
SPEED_FLOOR = 0.05
MONO_TOL = 1e-4
FINAL_PROFILE_TOL = 1e-2


def _tail(traj, tail_fraction, burn_in=0.0):
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    t = traj.t
    if t.size == 0 or t[-1] <= burn_in:
        raise TooShort(f"run ends at t = {t[-1] if t.size else 0:g}, before the burn-in {burn_in:g}")
    start = max(t[-1] - tail_fraction * (t[-1] - t[0]), burn_in)
    mask = t >= start - 1e-12 * max(1.0, abs(start))
    if np.count_nonzero(mask) < MIN_TAIL:
        raise TooShort(f"only {np.count_nonzero(mask)} samples in the tail window (need {MIN_TAIL})")
    return mask


@dataclass
class SpeedFit:
    mean: float
    slope: float
    slope_stderr: float
    window: tuple

    @property
    def consistent(self):
        return abs(self.mean - self.slope) <= max(3.0 * self.slope_stderr, 1e-9 * max(1.0, abs(self.mean)))


def fit_speed(traj, tail_fraction=TAIL_FRACTION, burn_in=0.0):
    """Tail mean of s' together with a least-squares slope of s(t)."""
    m = _tail(traj, tail_fraction, burn_in)
    t, s = traj.t[m], traj.s[m]
    mean = float(np.mean(traj.s_prime[m]))
    A = np.column_stack([t, np.ones_like(t)])
    coef, res, *_ = np.linalg.lstsq(A, s, rcond=None)
    dof = max(t.size - 2, 1)
    resid = s - A @ coef
    sigma2 = float(resid @ resid) / dof
    var = sigma2 / float(np.sum((t - t.mean()) ** 2))
    return SpeedFit(mean, float(coef[0]), math.sqrt(var), (float(t[0]), float(t[-1])))


def estimate_wave_speed(traj, tail_fraction=TAIL_FRACTION, burn_in=0.0):
    """Mean of s' over the tail window."""
    return fit_speed(traj, tail_fraction, burn_in).mean


def estimate_shift(traj, c, tail_fraction=TAIL_FRACTION, burn_in=0.0):
    """Least-squares constant fit x* of s(t) - c t on the tail; returns ``(x_star, drift_sup)``."""
    m = _tail(traj, tail_fraction, burn_in)
    r = traj.s[m] - c * traj.t[m]
    x_star = float(np.mean(r))
    return x_star, float(np.max(np.abs(r - x_star)))


def _eval_phi(wave, z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = z <= 0
    out[inside] = wave.phi(z[inside])
    return out


def _eval_psi(wave, z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = z >= 0
    out[inside] = wave.psi(z[inside])
    return out


def profile_error(snapshot, wave, delta):
    """Sup-norm distances of the snapshot fields from the wave shifted by ``delta``."""
    err_u = float(np.max(np.abs(snapshot.u - _eval_phi(wave, snapshot.y_left + delta))))
    err_v = float(np.max(np.abs(snapshot.v - _eval_psi(wave, snapshot.y_right + delta))))
    return err_u, err_v


def refine_delta(snapshot, wave, delta0, span=None):
    """Golden-section search for the delta minimising err_u + err_v near ``delta0``."""
    span = 2.0 * snapshot.dy if span is None else span

    def cost(d):
        return sum(profile_error(snapshot, wave, d))

    res = minimize_scalar(cost, bracket=(delta0 - span, delta0 + span), method="golden", tol=1e-8)
    return float(res.x)


def _non_increasing(values, tol):
    v = np.asarray(values, dtype=float)
    return bool(v.size < 2 or np.all(np.diff(v) <= tol))


@dataclass
class ConvergenceReport:
    c_wave: float
    c_est: float
    c_slope: float
    speed_err: float
    x_star: float
    drift_sup: float
    snapshot_times: list
    drift: list
    profile_err_u: list
    profile_err_v: list
    refined_delta_gap: list = field(default_factory=list)
    sprime_discrepancy: float = 0.0
    verdicts: dict = field(default_factory=dict)

    @property
    def verdict(self):
        return all(self.verdicts.values())

    def to_dict(self):
        d = asdict(self)
        d["verdict"] = self.verdict
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "drift", "err_u", "err_v"))
            for row in zip(self.snapshot_times, self.drift, self.profile_err_u, self.profile_err_v):
                w.writerow([repr(float(x)) for x in row])


def verify_theorem1(
    traj,
    snapshots,
    wave,
    tail_fraction=TAIL_FRACTION,
    burn_in=BURN_IN,
    refine=False,
    mono_tol=MONO_TOL,
    final_tol=FINAL_PROFILE_TOL,
):
    """Check speed, shift and profile convergence of a run against a wave.

    The speed is fitted from the tail and compared with the wave speed.
    The fitted speed also defines the moving frame for the shift and the
    profile comparison, so a small speed bias of the discretisation does
    not show up as a linear drift. Monotonicity is checked over the last
    half of the snapshots (those past the burn-in) with slack ``mono_tol``.
    """
    fit = fit_speed(traj, tail_fraction, burn_in)
    c_est = fit.mean
    speed_err = abs(c_est - wave.c)
    x_star, drift_sup = estimate_shift(traj, c_est, tail_fraction, burn_in)

    late = [s for s in snapshots if s.t >= burn_in]
    times, drift, eu, ev, gaps = [], [], [], [], []
    for snap in late:
        delta = snap.s - c_est * snap.t - x_star
        a, b = profile_error(snap, wave, delta)
        times.append(float(snap.t))
        drift.append(abs(delta))
        eu.append(a)
        ev.append(b)
        if refine:
            gaps.append(abs(refine_delta(snap, wave, delta) - delta))

    # centred differences of s against the stored Stefan speeds
    t, s, sp = traj.t, traj.s, traj.s_prime
    if t.size >= 3:
        centred = (s[2:] - s[:-2]) / (t[2:] - t[:-2])
        disc = float(np.max(np.abs(centred - sp[1:-1])))
    else:
        disc = 0.0

    half = len(times) // 2
    verdicts = {
        "speed": speed_err <= SPEED_REL_TOL * max(abs(wave.c), SPEED_FLOOR),
        "drift_non_increasing": _non_increasing(drift[half:], mono_tol),
        "profile_u_non_increasing": _non_increasing(eu[half:], mono_tol),
        "profile_v_non_increasing": _non_increasing(ev[half:], mono_tol),
        "final_profile": bool(eu and max(eu[-1], ev[-1]) <= final_tol),
    }
    if refine:
        dy = late[0].dy if late else 0.0
        verdicts["refined_delta"] = bool(all(g <= 2 * dy for g in gaps))
    return ConvergenceReport(
        c_wave=float(wave.c),
        c_est=float(c_est),
        c_slope=fit.slope,
        speed_err=float(speed_err),
        x_star=x_star,
        drift_sup=drift_sup,
        snapshot_times=times,
        drift=drift,
        profile_err_u=eu,
        profile_err_v=ev,
        refined_delta_gap=gaps,
        sprime_discrepancy=disc,
        verdicts=verdicts,
    )


def check_speed_bound(traj, H):
    """Return ``(ok, margin)`` with margin = H - max|s'|."""
    worst = float(np.max(np.abs(traj.s_prime))) if len(traj) else 0.0
    margin = float(H) - worst
    return margin >= 0, margin
