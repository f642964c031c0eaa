"""Finite-difference solver for the two-phase free-boundary system.

Works in the front-fixed frame y = x - s(t), where the interface sits at
y = 0 and the equations read

    u_t = d1 u_yy + s' u_y + f(u),   -L < y < 0
    v_t = d2 v_yy + s' v_y + g(v),    0 < y < L
    u(0) = v(0) = 0,   s' = -mu1 u_y(0-) - mu2 v_y(0+).

Both sides are advanced by one routine written in the outward distance
r = |y| from the interface, so the scheme is exactly mirror symmetric:
in r the drift is b = -s' on the left and b = +s' on the right. Each step
lags s', treats the reaction explicitly and the diffusion implicitly
(backward Euler, one tridiagonal solve per side).

Advection options:

``central``
    implicit centred differences; second order and monotone while the
    cell Peclet number |s'| dy / (2 d) stays below 1, with an explicit
    first-order upwind fallback on steps where it does not.
``upwind``
    explicit first-order upwind by the sign of the drift.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import BadInitialData, Blowup, CflViolation
from .nonlin import BISTABLE
from .tridiag import thomas

NEUMANN_ZERO = "neumann"
DIRICHLET_ONE = "dirichlet"
CENTRAL = "central"
UPWIND = "upwind"
MIN_NODES = 16
PIN_TOL = 1e-12
BLOWUP_FACTOR = 10.0
TRAJECTORY_COLUMNS = ("t", "s", "s_prime", "du", "dv")

_BC_ALIASES = {
    "neumann": NEUMANN_ZERO,
    "neumannzero": NEUMANN_ZERO,
    "dirichlet": DIRICHLET_ONE,
    "dirichletone": DIRICHLET_ONE,
}


@dataclass(frozen=True)
class SchemeConfig:
    """Grid, time step and boundary treatment.

    ``T_end`` must be a whole number of steps so the trajectory is uniformly
    sampled. Snapshots are taken every ``snapshot_every`` time units (and
    at t = 0 and t = T_end); explicit ``snapshot_times`` are added to that
    schedule. ``coarse_ok`` lifts the N >= 16 floor for hand-checkable
    unit grids.
    """

    L: float = 40.0
    N: int = 400
    dt: float = 0.01
    T_end: float = 10.0
    bc: str = NEUMANN_ZERO
    cfl_guard: float = 1.0
    advection: str = CENTRAL
    snapshot_every: float | None = None
    snapshot_times: tuple = ()
    coarse_ok: bool = False

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError("L must be positive")
        if self.N < (4 if self.coarse_ok else MIN_NODES):
            raise ValueError(f"N must be at least {MIN_NODES}")
        if not (self.dt > 0 and self.T_end > 0):
            raise ValueError("dt and T_end must be positive")
        if not 0 < self.cfl_guard <= 1:
            raise ValueError("cfl_guard must lie in (0, 1]")
        bc = _BC_ALIASES.get(str(self.bc).lower().replace("_", ""))
        if bc is None:
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        object.__setattr__(self, "bc", bc)
        if self.advection not in (CENTRAL, UPWIND):
            raise ValueError(f"unknown advection scheme {self.advection!r}")
        n = self.T_end / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("T_end must be an integer multiple of dt")
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))

    @property
    def dy(self):
        return self.L / self.N

    @property
    def n_steps(self):
        return int(round(self.T_end / self.dt))

    def snapshot_steps(self):
        steps = {0, self.n_steps}
        if self.snapshot_every:
            k = int(round(self.snapshot_every / self.dt))
            steps.update(range(0, self.n_steps + 1, max(k, 1)))
        for t in self.snapshot_times:
            if 0 <= t <= self.T_end:
                steps.add(int(round(t / self.dt)))
        return sorted(steps)

    def to_dict(self):
        return {
            "L": self.L,
            "N": self.N,
            "dt": self.dt,
            "T_end": self.T_end,
            "bc": self.bc,
            "cfl_guard": self.cfl_guard,
            "advection": self.advection,
            "snapshot_every": self.snapshot_every,
            "snapshot_times": list(self.snapshot_times),
        }


@dataclass
class SimState:
    """Fields on the two half-grids; ``u[-1]`` and ``v[0]`` sit on the interface."""

    u: np.ndarray
    v: np.ndarray
    s: float
    t: float
    dy: float
    s_prime: float = 0.0
    du: float = 0.0
    dv: float = 0.0
    bound: float = math.inf

    @property
    def y_left(self):
        n = self.u.size - 1
        return self.dy * np.arange(-n, 1)

    @property
    def y_right(self):
        return self.dy * np.arange(self.v.size)

    def copy(self):
        return replace(self, u=self.u.copy(), v=self.v.copy())


@dataclass
class InitialData:
    """Initial fields as functions of y on each half-line, and the interface s0."""

    u0: Callable
    v0: Callable
    s0: float = 0.0
    label: str = "custom"

    @classmethod
    def ramp(cls, width=10.0, s0=0.0, height_u=1.0, height_v=1.0):
        return cls(
            lambda y: height_u * np.minimum(1.0, -np.asarray(y) / width),
            lambda y: height_v * np.minimum(1.0, np.asarray(y) / width),
            s0,
            f"ramp({width:g})",
        )

    @classmethod
    def tanh(cls, width=1.0, s0=0.0, height_u=1.0, height_v=1.0):
        return cls(
            lambda y: height_u * np.tanh(-np.asarray(y) / width),
            lambda y: height_v * np.tanh(np.asarray(y) / width),
            s0,
            f"tanh({width:g})",
        )

    @classmethod
    def wave(cls, sol, s0=0.0):
        return cls(lambda y: sol.phi(np.asarray(y)), lambda y: sol.psi(np.asarray(y)), s0, "wave")


def _check_side(values, name, n):
    if abs(values[-1 if name == "u" else 0]) > PIN_TOL:
        raise BadInitialData(f"{name}0 must vanish at the interface")
    if not np.all(np.isfinite(values)):
        raise BadInitialData(f"{name}0 has non-finite values")
    if values.min() < -PIN_TOL:
        raise BadInitialData(f"{name}0 must be nonnegative")
    if n is None or not np.any(values):
        return
    far = values[0 if name == "u" else -1]
    floor = n.threshold if n.claimed == BISTABLE else 0.0
    if not far > floor:
        raise BadInitialData(f"far-field value {far:.3g} of {name}0 must exceed {floor:g}")


def build_initial_state(cfg, data, f=None, g=None):
    """Sample the initial data on the grid and pin the interface values.

    With ``f``/``g`` given, the far-field values are checked against the
    class of the term: positive for a monostable term, above the threshold
    for a bistable one. A side that is identically zero is allowed.
    """
    dy = cfg.dy
    y = dy * np.arange(cfg.N + 1)
    u = np.array(data.u0(-y[::-1]), dtype=float)
    v = np.array(data.v0(y), dtype=float)
    _check_side(u, "u", f)
    _check_side(v, "v", g)
    u[-1] = 0.0
    v[0] = 0.0
    if cfg.bc == DIRICHLET_ONE:
        u[0] = 1.0
        v[-1] = 1.0
    bound = BLOWUP_FACTOR * (1.0 + max(u.max(), v.max()))
    state = SimState(u, v, float(data.s0), 0.0, dy, bound=bound)
    return state


def _gradient_out(w_out_1, w_out_2, dy):
    return (4.0 * w_out_1 - w_out_2) / (2.0 * dy)


def interface_gradients(state, cfg=None):
    """One-sided second-order slopes (u_y(0-), v_y(0+)) using the pinned zero."""
    dy = state.dy
    du = -_gradient_out(state.u[-2], state.u[-3], dy)
    dv = _gradient_out(state.v[1], state.v[2], dy)
    return du, dv


def stefan_speed(du, dv, p):
    return -p.mu1 * du - p.mu2 * dv


def _advance(w, b, d, react, dt, dy, bc, advection):
    """Advance w_t = d w_rr + b w_r + react(w) one step; w[0] = 0 is the interface."""
    n = w.size - 1
    r = d / (dy * dy)
    interior = w[1:]
    rhs = interior + dt * np.asarray(react(interior), dtype=float)
    peclet = abs(b) * dy / (2.0 * d)
    if advection == CENTRAL and peclet < 1.0:
        lo = -dt * (r - 0.5 * b / dy)
        hi = -dt * (r + 0.5 * b / dy)
    else:
        lo = hi = -dt * r
        ext = np.empty(n + 2)
        ext[: n + 1] = w
        ext[n + 1] = w[n - 1] if bc == NEUMANN_ZERO else w[n]
        if b > 0:
            rhs += dt * b * (ext[2:] - ext[1:-1]) / dy
        else:
            rhs += dt * b * (ext[1:-1] - ext[:-2]) / dy
    m = n if bc == NEUMANN_ZERO else n - 1
    lower = np.full(m, lo)
    upper = np.full(m, hi)
    diag = np.full(m, 1.0 + 2.0 * dt * r)
    rhs = rhs[:m]
    if bc == NEUMANN_ZERO:
        # ghost node w[n+1] = w[n-1]: the centred drift term vanishes
        lower[-1] = -2.0 * dt * r
    else:
        rhs[-1] -= hi * 1.0
    out = np.empty_like(w)
    out[0] = 0.0
    out[1 : m + 1] = thomas(lower, diag, upper, rhs)
    if bc == DIRICHLET_ONE:
        out[n] = 1.0
    return out


def step(state, cfg, f, g, p):
    """One IMEX step, in place. Returns the state for chaining."""
    du, dv = interface_gradients(state)
    sp = stefan_speed(du, dv, p)
    state.du, state.dv, state.s_prime = du, dv, sp
    dt = cfg.dt
    courant = dt * abs(sp) / state.dy
    if courant > cfg.cfl_guard:
        raise CflViolation(
            f"dt*|s'|/dy = {courant:.3g} exceeds {cfg.cfl_guard}; try dt <= {cfg.cfl_guard * state.dy / abs(sp):.3g}"
        )
    w_left = _advance(state.u[::-1], -sp, p.d1, f, dt, state.dy, cfg.bc, cfg.advection)
    w_right = _advance(state.v, sp, p.d2, g, dt, state.dy, cfg.bc, cfg.advection)
    state.u = w_left[::-1].copy()
    state.v = w_right
    state.s += dt * sp
    state.t += dt
    peak = max(np.max(np.abs(state.u)), np.max(np.abs(state.v)))
    if not (math.isfinite(peak) and peak <= state.bound):
        raise Blowup(f"field magnitude {peak:.3g} exceeds {state.bound:.3g} at t = {state.t:.6g}")
    return state


@dataclass
class Trajectory:
    """Interface history sampled at every time step."""

    t: np.ndarray
    s: np.ndarray
    s_prime: np.ndarray
    du: np.ndarray
    dv: np.ndarray

    def __post_init__(self):
        for name in TRAJECTORY_COLUMNS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must increase strictly")
        if not all(np.all(np.isfinite(getattr(self, n))) for n in TRAJECTORY_COLUMNS):
            raise ValueError("trajectory entries must be finite")

    def __len__(self):
        return self.t.size

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_COLUMNS)
            for row in zip(*(getattr(self, n) for n in TRAJECTORY_COLUMNS)):
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(*data.T)


class _Recorder:
    def __init__(self, n):
        self.rows = np.empty((n + 1, 5))
        self.k = 0

    def add(self, st):
        self.rows[self.k] = (st.t, st.s, st.s_prime, st.du, st.dv)
        self.k += 1

    def trajectory(self):
        r = self.rows[: self.k]
        return Trajectory(r[:, 0], r[:, 1], r[:, 2], r[:, 3], r[:, 4])


def run(cfg, data, f, g, p, state=None):
    """Integrate to ``cfg.T_end``.

    Returns ``(trajectory, snapshots)``. Row k of the trajectory holds the
    state at t_k together with the s' used for the step leaving t_k; the
    last row carries the Stefan speed of the final state. On a blow-up the
    partial results travel with the raised :class:`Blowup`.
    """
    if state is None:
        state = build_initial_state(cfg, data, f, g)
    n = cfg.n_steps
    snap_steps = set(cfg.snapshot_steps())
    rec = _Recorder(n)
    snaps = []
    t0 = state.t
    for k in range(n + 1):
        if k == n:
            state.du, state.dv = interface_gradients(state)
            state.s_prime = stefan_speed(state.du, state.dv, p)
            rec.add(state)
            if k in snap_steps:
                snaps.append(state.copy())
            break
        if k in snap_steps:
            state.du, state.dv = interface_gradients(state)
            state.s_prime = stefan_speed(state.du, state.dv, p)
            snaps.append(state.copy())
        try:
            s_before, t_before = state.s, state.t
            step(state, cfg, f, g, p)
        except Blowup as exc:
            raise Blowup(str(exc), trajectory=rec.trajectory(), snapshots=snaps) from None
        except CflViolation:
            raise
        rec.rows[rec.k] = (t_before, s_before, state.s_prime, state.du, state.dv)
        rec.k += 1
        # accumulate time from the step count to avoid drift in t
        state.t = t0 + (k + 1) * cfg.dt
    return rec.trajectory(), snaps


def write_snapshot(state, directory, tag):
    """Write ``<tag>_u.csv`` (y,u), ``<tag>_v.csv`` (y,v) and ``<tag>.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, ys, vals in (("u", state.y_left, state.u), ("v", state.y_right, state.v)):
        with open(directory / f"{tag}_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("y", name))
            for y, x in zip(ys, vals):
                w.writerow((repr(float(y)), repr(float(x))))
    meta = {"t": state.t, "s": state.s, "s_prime": state.s_prime}
    (directory / f"{tag}.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def read_snapshot(directory, tag):
    directory = Path(directory)
    meta = json.loads((directory / f"{tag}.json").read_text())
    yu = np.loadtxt(directory / f"{tag}_u.csv", delimiter=",", skiprows=1, ndmin=2)
    yv = np.loadtxt(directory / f"{tag}_v.csv", delimiter=",", skiprows=1, ndmin=2)
    dy = float(yv[1, 0] - yv[0, 0])
    return SimState(yu[:, 1], yv[:, 1], meta["s"], meta["t"], dy, s_prime=meta["s_prime"])
