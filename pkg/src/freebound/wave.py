"""Traveling waves of the free-boundary competition system.

A wave is a pair of half-line profiles joined at the interface x = 0:

    d1*phi'' + c*phi' + f(phi) = 0,  x <= 0,  phi(-inf) = 1, phi(0) = 0
    d2*psi'' + c*psi' + g(psi) = 0,  x >= 0,  psi(+inf) = 1, psi(0) = 0
    c = mu1*alpha - mu2*beta,        alpha = -phi'(0), beta = psi'(0)

Each half problem is a shot along the one-dimensional invariant manifold of
the saddle (1, 0) in the (state, slope) phase plane. The trajectory is
integrated in the x parametrisation (state' = q, q' = -(c*q + f)/d), which
traces the same phase-plane curve as dq/dstate but stays regular where q
vanishes. The right problem is the left problem mirrored in x with speed
-c, so beta_g(c) = alpha_g(-c) exactly.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BPoly

from .errors import NoBracket, NoConnection, SingularSlope
from .nonlin import Nonlinearity, ProblemParams, beta_tilde, parse_nonlinearity

log = logging.getLogger(__name__)

LAUNCH_EPS = 1e-6
RTOL = 1e-10
ATOL = 1e-14
INTERFACE_TOL = 1e-8
SAMPLE_DX = 0.005
TAIL_CUTOFF = 1e-10
X_MAX = 1e4
H_TOL = 1e-10
WIDTH_TOL = 1e-12
MAX_EXPANSIONS = 60
BRACKET_STEP = 0.25


def launch_rate(n, d, c):
    """Positive root of d*lam^2 + c*lam + n'(1) = 0."""
    fp1 = float(n.derivative(1.0))
    if fp1 >= 0:
        raise ValueError("the equilibrium 1 must be stable (f'(1) < 0)")
    return (-c + math.sqrt(c * c - 4.0 * d * fp1)) / (2.0 * d)


@dataclass
class PhaseTrajectory:
    """Phase-plane samples from the saddle end (state 1 - eps) to the interface.

    ``state`` and ``slope`` are ordered from the equilibrium end toward the
    interface crossing; ``x`` holds the matching positions with the
    interface at x = 0. The right side is stored in its own orientation
    (x >= 0, slope > 0).
    """

    state: np.ndarray
    slope: np.ndarray
    x: np.ndarray
    side: str
    speed: float
    d: float
    nonlinearity: Nonlinearity
    tail_rate: float
    eps: float
    grazing: bool = False

    @property
    def samples(self):
        return np.column_stack([self.state, self.slope])

    @property
    def interface_slope(self):
        return abs(float(self.slope[-1]))


def _shoot_left(n, d, c, eps=LAUNCH_EPS, max_step=np.inf):
    lam = launch_rate(n, d, c)

    def rhs(x, y):
        return (y[1], -(c * y[1] + n(y[0])) / d)

    def cross(x, y):
        return y[0]

    cross.terminal = True
    cross.direction = -1

    def turn(x, y):
        return y[1]

    turn.terminal = True
    turn.direction = 1

    y0 = (1.0 - eps, -lam * eps)
    sol = solve_ivp(
        rhs,
        (0.0, X_MAX),
        y0,
        method="DOP853",
        rtol=RTOL,
        atol=ATOL,
        events=(cross, turn),
        max_step=max_step,
    )
    if sol.status < 0:
        raise NoConnection(f"phase-plane integration failed at c={c}: {sol.message}", speed=c)

    grazing = False
    if sol.t_events[0].size:
        x_end = float(sol.t_events[0][0])
        q_end = float(sol.y_events[0][0][1])
    elif sol.t_events[1].size:
        x_end = float(sol.t_events[1][0])
        level = float(sol.y_events[1][0][0])
        if level > INTERFACE_TOL:
            raise NoConnection(
                f"slope vanishes at state {level:.3g} before the interface (c={c})",
                speed=c,
                turning_level=level,
            )
        q_end = 0.0
        grazing = True
    else:
        # tangential approach to the origin: the connection is only reached as x -> inf
        x_end = float(sol.t[-1])
        level = float(sol.y[0, -1])
        if level > INTERFACE_TOL:
            raise NoConnection(f"trajectory stalls at state {level:.3g} (c={c})", speed=c)
        q_end = min(float(sol.y[1, -1]), 0.0)
        grazing = True
    return sol, x_end, q_end, lam, grazing


def _left_samples(sol, x_end, q_end):
    # accepted step points carry a smooth global error, unlike dense output,
    # so the Hermite table built on them has a clean second derivative
    keep = sol.t < x_end - 0.05 * SAMPLE_DX
    state = np.append(sol.y[0, keep], 0.0)
    slope = np.append(sol.y[1, keep], q_end)
    x = np.append(sol.t[keep], x_end) - x_end
    return state, slope, x


def shoot_alpha(f, d1, c, eps=LAUNCH_EPS, check=False):
    """Interface slope alpha = -phi'(0) of the left profile at speed ``c``.

    Returns ``(alpha, trajectory)``; raises :class:`NoConnection` when the
    trajectory turns back before reaching phi = 0. With ``check=True`` the
    shot is repeated from eps/2 and the two slopes must agree to 1e-8.
    """
    sol, x_end, q_end, lam, grazing = _shoot_left(f, d1, c, eps, SAMPLE_DX)
    alpha = 0.0 - q_end
    if check:
        _richardson_check(lambda e: -_shoot_left(f, d1, c, e)[2], alpha, eps)
    state, slope, x = _left_samples(sol, x_end, q_end)
    traj = PhaseTrajectory(state, slope, x, "left", c, d1, f, lam, eps, grazing)
    return alpha, traj


def shoot_beta(g, d2, c, eps=LAUNCH_EPS, check=False):
    """Interface slope beta = psi'(0) of the right profile at speed ``c``."""
    sol, x_end, q_end, lam, grazing = _shoot_left(g, d2, -c, eps, SAMPLE_DX)
    beta = 0.0 - q_end
    if check:
        _richardson_check(lambda e: -_shoot_left(g, d2, -c, e)[2], beta, eps)
    state, slope, x = _left_samples(sol, x_end, q_end)
    traj = PhaseTrajectory(state, -slope, -x, "right", c, d2, g, lam, eps, grazing)
    return beta, traj


def _richardson_check(shoot, value, eps):
    other = shoot(0.5 * eps)
    if abs(other - value) > 1e-8:
        raise NoConnection(
            f"launch-offset sensitivity {abs(other - value):.2e} exceeds 1e-8"
        )


@dataclass
class WaveProfile:
    """Tabulated half-line profile with an exponential tail toward 1.

    Inside the table the profile is a quintic Hermite interpolant through
    the exact nodal value, slope and curvature (the latter from the ODE).
    Beyond the far node the linearised tail ``1 - gap*exp(-rate*|x - x_far|)``
    is used.
    """

    side: str
    x: np.ndarray
    value: np.ndarray
    slope: np.ndarray
    curvature: np.ndarray
    tail_rate: float
    _poly: BPoly = field(default=None, repr=False)

    def __post_init__(self):
        order = np.argsort(self.x)
        self.x = np.asarray(self.x, dtype=float)[order]
        self.value = np.asarray(self.value, dtype=float)[order]
        self.slope = np.asarray(self.slope, dtype=float)[order]
        self.curvature = np.asarray(self.curvature, dtype=float)[order]
        yi = np.column_stack([self.value, self.slope, self.curvature])
        self._poly = BPoly.from_derivatives(self.x, yi, extrapolate=True)

    @property
    def far_x(self):
        return self.x[0] if self.side == "left" else self.x[-1]

    @property
    def far_gap(self):
        return 1.0 - (self.value[0] if self.side == "left" else self.value[-1])

    def __call__(self, x, nu=0):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self._poly(x, nu), dtype=float)
        if self.side == "left":
            beyond = x < self.x[0]
            dist = self.x[0] - x
            sign = 1.0
        else:
            beyond = x > self.x[-1]
            dist = x - self.x[-1]
            sign = -1.0
        if np.any(beyond):
            lam = self.tail_rate
            e = self.far_gap * np.exp(-lam * dist[beyond])
            tail = 1.0 - e if nu == 0 else -e * (sign * lam) ** nu
            out = np.array(out, copy=True)
            out[beyond] = tail
        return float(out) if out.ndim == 0 else out

    def inverse(self, level):
        """Position where the profile equals ``level`` in (0, 1)."""
        if not 0.0 <= level < 1.0:
            raise ValueError("inverse defined for levels in [0, 1)")
        if level == 0.0:
            return 0.0
        if level > self.value.max():
            lam = self.tail_rate
            dist = math.log(self.far_gap / (1.0 - level)) / lam
            return self.far_x - dist if self.side == "left" else self.far_x + dist
        if self.side == "left":
            xs, vs = self.x[::-1], self.value[::-1]
        else:
            xs, vs = self.x, self.value
        k = int(np.searchsorted(vs, level))
        k = min(max(k, 1), len(xs) - 1)
        lo, hi = xs[k - 1], xs[k]
        if lo > hi:
            lo, hi = hi, lo
        x = float(np.interp(level, vs, xs))
        for _ in range(50):
            r = float(self._poly(x)) - level
            s = float(self._poly(x, 1))
            step = r / s
            x_new = x - step
            if not lo <= x_new <= hi:
                x_new = 0.5 * (lo + hi)
            if (float(self._poly(x_new)) - level) * (float(self._poly(lo)) - level) > 0:
                lo = x_new
            else:
                hi = x_new
            x = x_new
            if abs(step) < 1e-15 * max(1.0, abs(x)):
                break
        return x

    def to_dict(self):
        return {
            "side": self.side,
            "tail_rate": self.tail_rate,
            "x": self.x.tolist(),
            "value": self.value.tolist(),
            "slope": self.slope.tolist(),
            "curvature": self.curvature.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["side"],
            np.array(data["x"]),
            np.array(data["value"]),
            np.array(data["slope"]),
            np.array(data["curvature"]),
            float(data["tail_rate"]),
        )


def reconstruct_profile(traj):
    """Tabulate a profile from a phase-plane trajectory.

    The x positions come from the integration parameter, which equals
    x(state) = int d(state)/q. The table is extended analytically along
    the linearised tail until |value - 1| < 1e-10.
    """
    q = np.asarray(traj.slope)
    if np.any(np.abs(q[:-1]) < 1e-14):
        raise SingularSlope("slope vanishes at an interior node")
    n, d, c = traj.nonlinearity, traj.d, traj.speed
    state = np.asarray(traj.state, dtype=float)
    x = np.asarray(traj.x, dtype=float)
    curv = -(c * q + np.asarray(n(state))) / d
    lam = traj.tail_rate
    gap0 = 1.0 - state[0]
    n_tail = int(math.ceil(math.log(gap0 / TAIL_CUTOFF) / lam / SAMPLE_DX))
    dist = SAMPLE_DX * np.arange(n_tail, 0, -1)
    e = gap0 * np.exp(-lam * dist)
    if traj.side == "left":
        tx = x[0] - dist
        tslope = -lam * e
    else:
        tx = x[0] + dist
        tslope = lam * e
    tcurv = -lam * lam * e
    profile = WaveProfile(
        traj.side,
        np.concatenate([tx, x]),
        np.concatenate([1.0 - e, state]),
        np.concatenate([tslope, q]),
        np.concatenate([tcurv, curv]),
        lam,
    )
    return profile


@dataclass
class WaveSolution:
    phi: WaveProfile
    psi: WaveProfile
    c: float
    alpha: float
    beta: float
    params: ProblemParams
    f: Nonlinearity | None = None
    g: Nonlinearity | None = None
    h_residual: float = 0.0
    multiple_brackets: bool = False

    def matching_defect(self):
        p = self.params
        return abs(self.c - (p.mu1 * self.alpha - p.mu2 * self.beta))

    def to_dict(self):
        return {
            "c": self.c,
            "alpha": self.alpha,
            "beta": self.beta,
            "h_residual": self.h_residual,
            "params": self.params.to_dict(),
            "f": self.f.descriptor() if self.f is not None else None,
            "g": self.g.descriptor() if self.g is not None else None,
            "phi": self.phi.to_dict(),
            "psi": self.psi.to_dict(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        f = parse_nonlinearity(data["f"]) if data.get("f") and "[" not in data["f"] else None
        g = parse_nonlinearity(data["g"]) if data.get("g") and "[" not in data["g"] else None
        return cls(
            WaveProfile.from_dict(data["phi"]),
            WaveProfile.from_dict(data["psi"]),
            float(data["c"]),
            float(data["alpha"]),
            float(data["beta"]),
            ProblemParams(**data["params"]),
            f,
            g,
            float(data.get("h_residual", 0.0)),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def matching_residual(f, g, p, c):
    """h(c) = mu1*alpha(c) - mu2*beta(c) - c."""
    alpha = -_shoot_left(f, p.d1, c)[2]
    beta = -_shoot_left(g, p.d2, -c)[2]
    return p.mu1 * alpha - p.mu2 * beta - c


def _edge(f, g, p, good, bad, iters=30):
    """Last speed before a NoConnection edge, searching between ``good`` and ``bad``."""
    h_good = matching_residual(f, g, p, good)
    for _ in range(iters):
        mid = 0.5 * (good + bad)
        try:
            h_good = matching_residual(f, g, p, mid)
            good = mid
        except NoConnection:
            bad = mid
    return good, h_good


def speed_bracket(f, g, p, step=BRACKET_STEP, max_steps=MAX_EXPANSIONS, history=None):
    """Find ``(c_lo, c_hi)`` with h(c_lo) > 0 > h(c_hi).

    The bracket grows symmetrically from c = 0. When a shot fails, the
    search homes in on the edge of the connection window from the inside
    and stops growing on that side.
    """
    samples = {} if history is None else history
    lo_edge = hi_edge = False
    c_lo = c_hi = 0.0
    try:
        h0 = matching_residual(f, g, p, 0.0)
    except NoConnection as exc:
        raise NoBracket(f"no connection at c = 0: {exc}") from exc
    samples[0.0] = h0
    h_lo = h_hi = h0
    for k in range(1, max_steps + 1):
        if not (h_lo > 0):
            if lo_edge:
                raise NoBracket("left edge of the connection window reached with h <= 0")
            cand = -k * step
            try:
                h_lo = matching_residual(f, g, p, cand)
                c_lo = cand
            except NoConnection:
                c_lo, h_lo = _edge(f, g, p, c_lo, cand)
                lo_edge = True
            samples[c_lo] = h_lo
        if not (h_hi < 0):
            if hi_edge:
                raise NoBracket("right edge of the connection window reached with h >= 0")
            cand = k * step
            try:
                h_hi = matching_residual(f, g, p, cand)
                c_hi = cand
            except NoConnection:
                c_hi, h_hi = _edge(f, g, p, c_hi, cand)
                hi_edge = True
            samples[c_hi] = h_hi
        if h_lo > 0 and h_hi < 0:
            return c_lo, c_hi
    raise NoBracket(f"no sign change of h within {max_steps} expansion steps")


def _sign_changes(samples):
    cs = sorted(samples)
    hs = np.sign([samples[c] for c in cs])
    hs = hs[hs != 0]
    return int(np.count_nonzero(np.diff(hs)))


def solve_matching(f, g, p, check=True):
    """Solve for the wave speed by bisection on h over the bracket from :func:`speed_bracket`."""
    history = {}
    lo, hi = speed_bracket(f, g, p, history=history)
    multiple = _sign_changes(history) > 1
    if multiple:
        log.warning("h(c) changes sign more than once on the sampled speeds")
    c = 0.5 * (lo + hi)
    while True:
        c = 0.5 * (lo + hi)
        h = matching_residual(f, g, p, c)
        if h == 0.0 or hi - lo <= WIDTH_TOL:
            break
        if h > 0:
            lo = c
        else:
            hi = c
    if abs(h) > H_TOL:
        raise NoBracket(f"bisection stalled with |h| = {abs(h):.2e} > {H_TOL}")
    alpha, traj_l = shoot_alpha(f, p.d1, c, check=check)
    beta, traj_r = shoot_beta(g, p.d2, c, check=check)
    sol = WaveSolution(
        reconstruct_profile(traj_l),
        reconstruct_profile(traj_r),
        c,
        alpha,
        beta,
        p,
        f,
        g,
        h_residual=p.mu1 * alpha - p.mu2 * beta - c,
        multiple_brackets=multiple,
    )
    return sol


def sweep(f, g, p, speeds):
    """Tabulate (c, alpha, beta, h); entries are NaN where a side has no connection."""
    rows = []
    for c in sorted(speeds):
        try:
            a = -_shoot_left(f, p.d1, c)[2]
        except NoConnection:
            a = math.nan
        try:
            b = -_shoot_left(g, p.d2, -c)[2]
        except NoConnection:
            b = math.nan
        rows.append((c, a, b, p.mu1 * a - p.mu2 * b - c))
    return rows


def sign_equivalence(sol):
    """Return ``(c > 0, beta < beta_tilde)`` at a matched solution."""
    bt = beta_tilde(sol.f, sol.g, sol.alpha)
    return sol.c > 0, sol.beta < bt
