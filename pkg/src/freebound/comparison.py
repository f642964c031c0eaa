"""Ordering machinery: comparison runs, the explicit lower triple, the
stationary slope bound and the far-field convergence scan.

Lower triple
------------
In the moving coordinate z = x - c t the lower triple is

    u_(z, t) = max{0, phi(z - xi(t) + a(t)) - p(t)}
    v^(z, t) = psi_ext(z + eta(t) - b(t)) + q(t)
    z_(t)   = xi(t) - eta(t)

with p = p0 exp(-varrho t), q = q0 exp(-vartheta t),
xi = z1 + z2 exp(-varrho t), eta = z3 - z4 exp(-vartheta t),
a = eta + phi^{-1}(p) and b = xi + (lambda0/beta) log(1 + q/lambda0).
psi_ext continues psi to negative arguments by
lambda0 - lambda0 exp(-beta x / lambda0). Time in the triple is measured from
the anchor time at which it is laid under the PDE solution. The envelopes
decay like exp(-vartheta t); a growing exponent would not give a bound.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import BadOrdering, ConstraintViolation, Infeasible, NoSolution
from .fbpde import InitialData, build_initial_state, run
from .nonlin import BISTABLE, _integral, energy_speed, theta_bar

FD_STEP = 1e-4
KINK_WIDTH = 10
DENSE = 4001
ORDER_TOL = 1e-8
SLOPE_TOL = 1e-8
LOG_E_MIN = math.log(1e-300)
GL_NODES = 32
TAYLOR_RADIUS = 1e-5


# ---------------------------------------------------------------- extension

def extend_psi(wave, lambda0):
    """psi on x >= 0 continued exponentially to x < 0 with matching value and slope."""
    beta = wave.beta
    if not lambda0 > 0:
        raise ConstraintViolation("lambda0 must be positive")
    if not lambda0 * wave.c < beta * wave.params.d2:
        raise ConstraintViolation(
            f"lambda0*c = {lambda0 * wave.c:.4g} must be below psi'(0)*d2 = {beta * wave.params.d2:.4g}"
        )
    return _PsiExt(wave.psi, beta, lambda0)


class _PsiExt:
    def __init__(self, psi, beta, lambda0):
        self.psi, self.beta, self.lambda0 = psi, beta, lambda0

    def __call__(self, x, nu=0):
        x = np.asarray(x, dtype=float)
        k = self.beta / self.lambda0
        neg = x < 0
        xn = np.where(neg, x, 0.0)
        e = np.exp(-k * xn)
        if nu == 0:
            ext = self.lambda0 - self.lambda0 * e
        else:
            ext = -self.lambda0 * (-k) ** nu * e
        out = np.where(neg, ext, 0.0)
        if np.any(~neg):
            out = np.array(out, dtype=float)
            out[~neg] = self.psi(x[~neg], nu)
        return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- parameters

@dataclass
class SubSuperParams:
    p0: float
    q0: float
    varrho: float
    vartheta: float
    delta: float
    nu: float
    gamma: float
    lam: float
    tau: float
    r: float
    lambda0: float
    l0: float
    xi0: float
    eta0: float
    z1: float = 0.0
    z2: float = 0.0
    z3: float = 0.0
    z4: float = 0.0
    rho_star: float = 0.0
    varrho_star: float = 0.0
    Sigma: float = 0.0
    rho1: float = 0.0
    rho2: float | None = None
    T_anchor: float = 0.0
    phi_inv_p0: float = 0.0
    lam_bound: float = math.inf
    q0_bound: float = math.inf
    checks: dict = field(default_factory=dict)

    @property
    def feasible(self):
        return all(self.checks.values())

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and math.isinf(v):
                d[k] = "inf"
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _near_one_rate(n, width_factor, min_fraction=0.5, candidates=(0.4, 0.3, 0.25, 0.2, 0.15, 0.125, 0.1, 0.05, 0.025, 0.01)):
    """Largest width w with -n' >= min_fraction*|n'(1)| on [1 - width_factor*w, 1 + w].

    Returns ``(w, rate)`` where rate = min(-n') on that interval.
    """
    target = min_fraction * abs(float(n.derivative(1.0)))
    for w in candidates:
        u = np.linspace(1.0 - width_factor * w, 1.0 + w, DENSE)
        rate = float(np.min(-np.asarray(n.derivative(u))))
        if rate >= target:
            return w, rate
    raise Infeasible("no neighbourhood of 1 with a uniform negative derivative", constraint="f'(1)<0")


def _max_abs_derivative(n, lo, hi):
    u = np.linspace(lo, hi, DENSE)
    return float(np.max(np.abs(n.derivative(u))))


def _profile_min_slope(prof, lo, hi, sign):
    x = np.union1d(np.linspace(lo, hi, DENSE), prof.x[(prof.x >= lo) & (prof.x <= hi)])
    return float(np.min(sign * np.asarray(prof(x, 1))))


def _lambda_bound(p, beta, q0, lambda0, vartheta, tau, dphi):
    """Upper bound for lam from the free-boundary inequality (inf when non-binding)."""
    denom = p.mu2 * beta * q0 + lambda0 * p.mu1 * dphi
    if denom <= 0:
        return math.inf
    return (vartheta + tau) * q0 * lambda0 / denom


def select_subsolution_params(
    wave,
    f,
    g,
    p,
    T_anchor=0.0,
    p0=None,
    q0=None,
    vartheta=None,
    lambda0=None,
    lam=None,
    xi0=-1.0,
    eta0=1.0,
    strict=True,
):
    """Choose constants for the lower triple and check every constraint.

    delta and varrho come from a neighbourhood of 1 on which -f' stays above
    half of |f'(1)|, and likewise nu and vartheta from g (vartheta is capped
    at varrho/2 so that vartheta < varrho). gamma and lam are the smallest
    slopes of phi and psi where the profiles sit below 1 - delta and 1 - nu.
    Any constant may be overridden; with ``strict=False`` a violated
    constraint is recorded in ``checks`` instead of raising
    :class:`Infeasible`.
    """
    c, alpha, beta = wave.c, wave.alpha, wave.beta
    delta, varrho = _near_one_rate(f, 2.0)
    nu, vartheta_max = _near_one_rate(g, 1.0)
    if vartheta is None:
        vartheta = min(vartheta_max, 0.5 * varrho)
    if lambda0 is None:
        lambda0 = min(1.0, 0.5 * beta * p.d2 / c) if c > 0 else 1.0
    r = float(np.max(np.asarray(f.derivative(np.linspace(0.0, 1.0, DENSE)))))
    tau = _max_abs_derivative(g, 0.0, 1.0)

    cap = 4.0 / 3.0 * (1.0 - theta_bar(g)) if g.claimed == BISTABLE else 1.0

    def q0_limit(l0):
        num = beta * beta * p.d2 - c * lambda0 * beta
        return min(num / (lambda0 * (vartheta + l0)), cap)

    if q0 is None:
        l0 = _max_abs_derivative(g, 0.0, nu)
        q0 = min(0.5 * nu, 0.5 * q0_limit(l0))
        for _ in range(5):
            l0 = _max_abs_derivative(g, 0.0, q0)
            q0 = min(0.5 * nu, 0.5 * q0_limit(l0))
    l0 = _max_abs_derivative(g, 0.0, q0) if q0 > 0 else abs(float(g.derivative(0.0)))
    q0_bound = q0_limit(l0)
    if p0 is None:
        p0 = 0.5 * delta

    x_delta = wave.phi.inverse(1.0 - delta)
    gamma = _profile_min_slope(wave.phi, x_delta, 0.0, -1.0)
    x_nu = wave.psi.inverse(1.0 - nu)
    lam_max_slope = _profile_min_slope(wave.psi, 0.0, x_nu, 1.0)
    phi_inv_p0 = wave.phi.inverse(p0) if p0 > 0 else 0.0
    dphi = float(wave.phi(phi_inv_p0, 1)) + alpha
    degenerate = p0 == 0 and q0 == 0
    lam_bound = math.inf if degenerate else _lambda_bound(p, beta, q0, lambda0, vartheta, tau, dphi)
    if lam is None:
        lam = min(lam_max_slope, 0.5 * lam_bound)

    checks = {
        "vartheta<varrho": vartheta < varrho,
        "p0<delta": p0 < delta,
        "q0<nu": q0 < nu,
        "lambda0*c<psi'(0)*d2": lambda0 * c < beta * p.d2,
        "q0<=min(bound)": q0 <= q0_bound,
        "lambda<bound": degenerate or lam < lam_bound,
        "lambda<=min psi'": lam <= lam_max_slope,
        "gamma>0": gamma > 0,
        "lambda>0": lam > 0,
    }
    if strict:
        for name, ok in checks.items():
            if not ok:
                raise Infeasible(f"constraint {name} cannot be met", constraint=name)

    z2 = (varrho + r) / (varrho * gamma) * p0
    z4 = (vartheta + tau) / (vartheta * lam) * q0
    log_term = lambda0 / beta * math.log1p(q0 / lambda0)
    sp = SubSuperParams(
        p0=p0,
        q0=q0,
        varrho=varrho,
        vartheta=vartheta,
        delta=delta,
        nu=nu,
        gamma=gamma,
        lam=lam,
        tau=tau,
        r=r,
        lambda0=lambda0,
        l0=l0,
        xi0=xi0,
        eta0=eta0,
        z1=xi0 - z2,
        z2=z2,
        z3=eta0 + z4,
        z4=z4,
        rho_star=-eta0 + xi0 - phi_inv_p0,
        varrho_star=-eta0 + xi0 + log_term,
        Sigma=xi0 - z2 - eta0 - z4,
        rho1=-eta0 + xi0 - z2 - z4,
        T_anchor=T_anchor,
        phi_inv_p0=phi_inv_p0,
        lam_bound=lam_bound,
        q0_bound=q0_bound,
        checks=checks,
    )
    return sp


def with_anchor(params, Z0):
    """Shift the constants so that z_(0) = Z0, keeping eta0."""
    xi0 = Z0 + params.eta0
    d = xi0 - params.xi0
    return replace(
        params,
        xi0=xi0,
        z1=params.z1 + d,
        rho_star=params.rho_star + d,
        varrho_star=params.varrho_star + d,
        Sigma=params.Sigma + d,
        rho1=params.rho1 + d,
    )


# ---------------------------------------------------------------- evaluation

def _envelopes(sp, t):
    t = np.asarray(t, dtype=float)
    p = sp.p0 * np.exp(-sp.varrho * t)
    q = sp.q0 * np.exp(-sp.vartheta * t)
    xi = sp.z1 + sp.z2 * np.exp(-sp.varrho * t)
    eta = sp.z3 - sp.z4 * np.exp(-sp.vartheta * t)
    return p, q, xi, eta


def _phi_zero_ext(wave, x):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0, wave.phi(np.minimum(x, 0.0)), 0.0)


def eval_lower_triple(params, wave, z, t):
    """Return ``(u_lower, v_upper, z_lower)`` at frame coordinates ``z`` and time ``t``."""
    sp = params
    t = float(t)
    p, q, xi, eta = (float(v) for v in _envelopes(sp, t))
    pinv = wave.phi.inverse(p) if p > 0 else 0.0
    a = eta + pinv
    b = xi + sp.lambda0 / wave.beta * math.log1p(q / sp.lambda0)
    z = np.asarray(z, dtype=float)
    u = np.maximum(0.0, _phi_zero_ext(wave, z - xi + a) - p)
    ext = _PsiExt(wave.psi, wave.beta, sp.lambda0)
    v = ext(z + eta - b) + q
    return u, v, xi - eta


# ---------------------------------------------------------------- residuals

@dataclass
class ResidualReport:
    maxA: float
    minB: float
    boundary_slack: float
    boundary_u: float
    boundary_v: float
    kink_maxA: float
    kink_minB: float
    richardson_gap: float
    n_points: int

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def _dt(W, z, t, h, w0):
    if t - h >= 0:
        return (W(z, t + h) - W(z, t - h)) / (2 * h)
    # second-order one-sided at the anchor time
    return (-3 * w0 + 4 * W(z, t + h) - W(z, t + 2 * h)) / (2 * h)


def _analytic_operators(sp, wave, f, g, p, z, t):
    """A[u_] and B[v^] by the chain rule through the profile derivatives."""
    c, beta = wave.c, wave.beta
    pt, qt, xi, eta = (float(v) for v in _envelopes(sp, t))
    dp, dq = -sp.varrho * pt, -sp.vartheta * qt
    dxi = -sp.varrho * sp.z2 * math.exp(-sp.varrho * t)
    deta = sp.vartheta * sp.z4 * math.exp(-sp.vartheta * t)
    pinv = wave.phi.inverse(pt) if pt > 0 else 0.0
    slope_p = float(wave.phi(pinv, 1))
    da = deta + (dp / slope_p if pt > 0 else 0.0)
    k = sp.lambda0 / beta
    db = dxi + k * dq / (sp.lambda0 + qt)
    b = xi + k * math.log1p(qt / sp.lambda0)
    xu = np.minimum(z - xi + eta + pinv, 0.0)
    u0 = np.maximum(0.0, _phi_zero_ext(wave, xu) - pt)
    u1, u2 = wave.phi(xu, 1), wave.phi(xu, 2)
    A = u1 * (-dxi + da) - dp - p.d1 * u2 - c * u1 - np.asarray(f(u0))
    ext = _PsiExt(wave.psi, beta, sp.lambda0)
    xv = z + eta - b
    v0 = ext(xv) + qt
    v1, v2 = ext(xv, 1), ext(xv, 2)
    B = v1 * (deta - db) + dq - p.d2 * v2 - c * v1 - np.asarray(g(np.maximum(v0, 0.0)))
    return A, B


def _operators(sp, wave, f, g, p, z, t, h):
    """A[u_] and B[v^] at points (z, t) by centred differences with step h."""
    c = wave.c

    def U(zz, tt):
        return eval_lower_triple(sp, wave, zz, tt)[0]

    def V(zz, tt):
        return eval_lower_triple(sp, wave, zz, tt)[1]

    u0 = U(z, t)
    ut = _dt(U, z, t, h, u0)
    uz = (U(z + h, t) - U(z - h, t)) / (2 * h)
    uzz = (U(z + h, t) - 2 * u0 + U(z - h, t)) / (h * h)
    A = ut - p.d1 * uzz - c * uz - np.asarray(f(u0))

    v0 = V(z, t)
    vt = _dt(V, z, t, h, v0)
    vz = (V(z + h, t) - V(z - h, t)) / (2 * h)
    vzz = (V(z + h, t) - 2 * v0 + V(z - h, t)) / (h * h)
    B = vt - p.d2 * vzz - c * vz - np.asarray(g(np.maximum(v0, 0.0)))
    return A, B


def _boundary_terms(sp, wave, p, t, h):
    """Slack RHS - z_' of the free-boundary inequality and the two boundary values."""
    c = wave.c
    _, _, zl = eval_lower_triple(sp, wave, 0.0, t)
    zl_p = eval_lower_triple(sp, wave, 0.0, t + h)[2]
    if t - h >= 0:
        zl_m = eval_lower_triple(sp, wave, 0.0, t - h)[2]
        dz = (zl_p - zl_m) / (2 * h)
    else:
        zl_2 = eval_lower_triple(sp, wave, 0.0, t + 2 * h)[2]
        dz = (-3 * zl + 4 * zl_p - zl_2) / (2 * h)
    uL = lambda zz: eval_lower_triple(sp, wave, zz, t)[0]
    vR = lambda zz: eval_lower_triple(sp, wave, zz, t)[1]
    # one-sided second-order slopes from inside each phase
    uz = (3 * uL(zl) - 4 * uL(zl - h) + uL(zl - 2 * h)) / (2 * h)
    vz = (-3 * vR(zl) + 4 * vR(zl + h) - vR(zl + 2 * h)) / (2 * h)
    rhs = -p.mu1 * uz - p.mu2 * vz - c
    return rhs - dz, float(uL(zl)), float(vR(zl))


def residuals(params, wave, f, g, p, grid=None, h=FD_STEP, method="fd"):
    """Worst values of A[u_] (should be <= 0), B[v^] (>= 0) and the boundary slack (>= 0).

    ``grid`` is ``(z_values, t_values)`` in the moving frame with t measured
    from the anchor; the default is 200 z-points spanning the front and 50
    times on [0, 20]. Points within 10h of the free boundary (the kink of
    max{0, .}) and of the psi-extension junction are reported separately.
    ``method="analytic"`` replaces the finite differences of the operators by
    the chain rule through the profile derivatives; centred second
    differences with h = 1e-4 carry about 4e-8 of rounding on O(1) fields.
    """
    if method not in ("fd", "analytic"):
        raise ValueError("method must be 'fd' or 'analytic'")
    if grid is None:
        zc = params.xi0 - params.eta0
        grid = (np.linspace(zc - 25.0, zc + 25.0, 200), np.linspace(0.0, 20.0, 50))
    zs, ts = (np.asarray(v, dtype=float) for v in grid)
    maxA = kinkA = -math.inf
    minB = kinkB = math.inf
    slack = math.inf
    bu = bv = 0.0
    gap = 0.0
    for t in ts:
        _, q, xi, eta = (float(v) for v in _envelopes(params, t))
        zl = xi - eta
        junction = xi + params.lambda0 / wave.beta * math.log1p(q / params.lambda0) - eta
        if method == "fd":
            A, B = _operators(params, wave, f, g, p, zs, t, h)
        else:
            A, B = _analytic_operators(params, wave, f, g, p, zs, t)
        left = zs < zl
        right = zs > zl
        near_kink = np.abs(zs - zl) <= KINK_WIDTH * h
        near_junction = np.abs(zs - junction) <= KINK_WIDTH * h
        okA = left & ~near_kink
        okB = right & ~near_kink & ~near_junction
        if np.any(okA):
            maxA = max(maxA, float(np.max(A[okA])))
        if np.any(okB):
            minB = min(minB, float(np.min(B[okB])))
        if np.any(left & near_kink):
            kinkA = max(kinkA, float(np.max(A[left & near_kink])))
        if np.any(right & (near_kink | near_junction)):
            kinkB = min(kinkB, float(np.min(B[right & (near_kink | near_junction)])))
        s_t, u_b, v_b = _boundary_terms(params, wave, p, t, h)
        slack = min(slack, s_t)
        bu = max(bu, abs(u_b))
        bv = max(bv, abs(v_b))
    # one h/2 Richardson check on a coarse subset
    sub_z, sub_t = zs[::20], ts[:: max(len(ts) // 5, 1)]
    for t in sub_t:
        _, q, xi, eta = (float(v) for v in _envelopes(params, t))
        zl = xi - eta
        junction = xi + params.lambda0 / wave.beta * math.log1p(q / params.lambda0) - eta
        keep = (np.abs(sub_z - zl) > KINK_WIDTH * h) & (np.abs(sub_z - junction) > KINK_WIDTH * h)
        A1, B1 = _operators(params, wave, f, g, p, sub_z, t, h)
        A2, B2 = _operators(params, wave, f, g, p, sub_z, t, 0.5 * h)
        if np.any(keep):
            gap = max(gap, float(np.max(np.abs(A1 - A2)[keep & (sub_z < zl)], initial=0.0)))
            gap = max(gap, float(np.max(np.abs(B1 - B2)[keep & (sub_z > zl)], initial=0.0)))
    return ResidualReport(
        maxA=maxA,
        minB=minB,
        boundary_slack=slack,
        boundary_u=bu,
        boundary_v=bv,
        kink_maxA=kinkA,
        kink_minB=kinkB,
        richardson_gap=gap,
        n_points=int(zs.size * ts.size),
    )


# ---------------------------------------------------------------- ordering runs

@dataclass
class OrderingReport:
    times: list
    u_violation: list
    v_violation: list
    s_violation: list

    @property
    def max_violation(self):
        return max(max(self.u_violation), max(self.v_violation), max(self.s_violation))

    def passed(self, tol=ORDER_TOL):
        return self.max_violation <= tol

    def to_dict(self):
        d = asdict(self)
        d["max_violation"] = self.max_violation
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _spline(x, y):
    return CubicSpline(x, y, extrapolate=False)


def compare_states(base, lower):
    """Violations of u_ <= u, v^ >= v and s_ <= s in the physical frame."""
    xl_b = base.y_left + base.s
    xr_b = base.y_right + base.s
    xl_l = lower.y_left + lower.s
    xr_l = lower.y_right + lower.s
    # u_ <= u on x <= s_; u counts as 0 beyond s
    m = (xl_l >= xl_b[0]) & (xl_l <= base.s)
    u_base = _spline(xl_b, base.u)(xl_l[m])
    du = float(np.max(lower.u[m] - u_base, initial=-math.inf))
    beyond = xl_l > base.s
    if np.any(beyond):
        du = max(du, float(np.max(lower.u[beyond])))
    # v <= v^ on x >= s
    m = (xr_b >= lower.s) & (xr_b <= xr_l[-1])
    v_low = _spline(xr_l, lower.v)(xr_b[m])
    dv = float(np.max(base.v[m] - v_low, initial=-math.inf))
    return max(du, 0.0), max(dv, 0.0), max(lower.s - base.s, 0.0)


def ordered_run_test(base, lowered, f, g, p, horizon, every=None, base_state=None, lower_state=None):
    """Run two configurations side by side and record ordering violations.

    ``base`` and ``lowered`` are ``(SchemeConfig, InitialData)`` pairs; the
    scheme settings of ``base`` are used for both runs with T_end = horizon.
    """
    cfg_b, data_b = base
    cfg_l, data_l = lowered
    every = horizon / 50 if every is None else every
    cfg_b = replace(cfg_b, T_end=horizon, snapshot_every=every)
    cfg_l = replace(cfg_l, T_end=horizon, snapshot_every=every)
    sb = base_state if base_state is not None else build_initial_state(cfg_b, data_b, f, g)
    sl = lower_state if lower_state is not None else build_initial_state(cfg_l, data_l)
    v0 = compare_states(sb, sl)
    if max(v0) > ORDER_TOL:
        raise BadOrdering(f"initial data are not ordered (u: {v0[0]:.3g}, v: {v0[1]:.3g}, s: {v0[2]:.3g})")
    with ThreadPoolExecutor(max_workers=2) as pool:
        jb = pool.submit(run, cfg_b, data_b, f, g, p, state=sb)
        jl = pool.submit(run, cfg_l, data_l, f, g, p, state=sl)
        _, snaps_b = jb.result()
        _, snaps_l = jl.result()
    rep = OrderingReport([], [], [], [])
    for a, b in zip(snaps_b, snaps_l):
        du, dv, ds = compare_states(a, b)
        rep.times.append(float(a.t))
        rep.u_violation.append(du)
        rep.v_violation.append(dv)
        rep.s_violation.append(ds)
    return rep


def triple_initial_data(params, wave, t=0.0, T_anchor=0.0):
    """The lower triple at time ``t`` as PDE initial data in the physical frame."""
    _, _, zl = eval_lower_triple(params, wave, 0.0, t)
    return InitialData(
        lambda y: eval_lower_triple(params, wave, np.asarray(y) + zl, t)[0],
        lambda y: np.maximum(eval_lower_triple(params, wave, np.asarray(y) + zl, t)[1], 0.0),
        zl + wave.c * T_anchor,
        "lower-triple",
    )


def lower_solution_test(params, wave, snapshots, T_anchor):
    """Compare the analytic lower triple with PDE snapshots taken at t >= T_anchor.

    Returns an :class:`OrderingReport` with u_ - u, v - v^ and z_ + c t - s
    violations (positive parts) in the physical frame.
    """
    rep = OrderingReport([], [], [], [])
    c = wave.c
    for snap in snapshots:
        if snap.t < T_anchor - 1e-12:
            continue
        tau = snap.t - T_anchor
        shift = snap.s - c * snap.t
        zl_grid = snap.y_left + shift
        zr_grid = snap.y_right + shift
        u_low, _, zl = eval_lower_triple(params, wave, zl_grid, tau)
        _, v_up, _ = eval_lower_triple(params, wave, zr_grid, tau)
        # u_ vanishes right of z_; v^ is only compared where it is defined
        du = float(np.max(np.where(zl_grid <= zl, u_low, 0.0) - snap.u))
        m = zr_grid >= zl
        dv = float(np.max(snap.v[m] - v_up[m], initial=0.0))
        rep.times.append(float(snap.t))
        rep.u_violation.append(max(du, 0.0))
        rep.v_violation.append(max(dv, 0.0))
        rep.s_violation.append(max(zl + c * snap.t - snap.s, 0.0))
    return rep


def anchor_lower_triple(params, wave, snapshot, step=0.25, max_shift=200.0):
    """Move z_(0) left in steps until the triple sits under the snapshot."""
    shift0 = snapshot.s - wave.c * snapshot.t
    k = 0
    while k * step <= max_shift:
        sp = with_anchor(params, shift0 - k * step)
        rep = lower_solution_test(sp, wave, [snapshot], snapshot.t)
        if rep.max_violation <= 0.0:
            return sp
        k += 1
    raise BadOrdering("no translate of the lower triple fits under the snapshot")


# ---------------------------------------------------------------- stationary bound

@dataclass
class StationaryProfile:
    """Solution of d U'' + f(U) = 0 vanishing at ``a`` and reaching the boundary value.

    Stored as the inverse table x(U) from the energy quadrature; ``side``
    says whether the profile lives left or right of ``a``.
    """

    a: float
    length: float
    slope: float
    energy_excess: float
    boundary_value: float
    side: str
    levels: np.ndarray = field(repr=False, default=None)
    distances: np.ndarray = field(repr=False, default=None)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        dist = self.a - x if self.side == "left" else x - self.a
        return np.interp(dist, self.distances, self.levels)


class _Energy:
    """Energy quadrature for d U'^2 / 2 + F(U) = d slope^2 / 2 on [0, B].

    Slopes are parametrised by the excess E = d slope^2 / 2 - max F over
    [0, B], so levels of E far below rounding of the slope stay resolved.
    Near the peak u* the integrand behaves like 1/sqrt(k w^2 + E) with
    w = |u - u*|; that stretch is integrated in log w.
    """

    def __init__(self, n, d, B):
        self.n, self.d, self.B = n, d, B
        us = np.linspace(0.0, B, DENSE)
        Fs = np.concatenate([[0.0], np.cumsum(0.5 * (n(us[1:]) + n(us[:-1])) * np.diff(us))])
        k = int(np.argmax(Fs))
        u_star = float(us[k])
        # refine to the zero of f where F peaks in the interior
        if 0 < k < us.size - 1 and n(us[k - 1]) > 0 > n(us[k + 1]):
            u_star = brentq(n, us[k - 1], us[k + 1], xtol=1e-15)
        self.u_star = u_star
        self.F_star = _integral(n, 0.0, u_star) if u_star > 0 else 0.0
        self._gl = np.polynomial.legendre.leggauss(GL_NODES)
        h = 1e-4
        self._d1 = float(n.derivative(u_star))
        self._d2 = float(n.derivative(u_star + h) - n.derivative(u_star - h)) / (2 * h) if u_star > h else 0.0

    def gap(self, u):
        """F(u*) - F(u) by Gauss-Legendre on [u, u*], accurate relative to its size near u*."""
        return self.gap_offset(u - self.u_star)

    def gap_offset(self, e):
        # Taylor expansion very close to u*, where u* + e would round
        if abs(e) < TAYLOR_RADIUS:
            return -e * (float(self.n(self.u_star)) + e * (0.5 * self._d1 + e * self._d2 / 6.0))
        x, w = self._gl
        return -0.5 * e * float(np.dot(w, self.n(self.u_star + 0.5 * e * (1.0 + x))))

    def integrand(self, u, E):
        return self.integrand_offset(u - self.u_star, E)

    def integrand_offset(self, e, E):
        return 1.0 / math.sqrt(2.0 / self.d * (max(self.gap_offset(e), 0.0) + E))

    def _quad(self, fun, a, b, *args):
        if b <= a:
            return 0.0
        return quad(fun, a, b, args=args, epsabs=1e-13, epsrel=1e-12, limit=500)[0]

    def _log_piece(self, E, side, w_hi):
        # int_0^{w_hi} integrand(u* + side w) dw with w = exp(s)
        if w_hi <= 0:
            return 0.0
        s_lo = math.log(math.sqrt(E)) + math.log(1e-12)
        s_hi = math.log(w_hi)
        if s_lo >= s_hi:
            return self._quad(lambda w: self.integrand_offset(side * w, E), 0.0, w_hi)

        def g(sv):
            w = math.exp(sv)
            return self.integrand_offset(side * w, E) * w

        return self._quad(g, s_lo, s_hi) + math.exp(s_lo) * self.integrand_offset(0.0, E)

    def distance(self, E, upper=None):
        upper = self.B if upper is None else upper
        us = self.u_star
        half = 0.5 * us
        if upper <= half or us == 0 and upper <= 0:
            return self._quad(self.integrand, 0.0, upper, E)
        total = self._quad(self.integrand, 0.0, half, E) + self._log_piece(E, -1, half)
        if upper <= us:
            return total - self._log_piece(E, -1, us - upper)
        w1 = 0.5 * (self.B - us)
        if upper - us <= w1:
            return total + self._log_piece(E, 1, upper - us)
        return total + self._log_piece(E, 1, w1) + self._quad(self.integrand, us + w1, upper, E)

    def slope(self, E):
        return math.sqrt(2.0 / self.d * (self.F_star + E))


def stationary_energy_profile(n, d, a, l, boundary_value, side="left"):
    """Stationary profile vanishing at ``a`` and reaching ``boundary_value`` at distance a + l.

    The interface slope is found by shooting on the energy relation
    d U'^2 / 2 + int_0^U f = d slope^2 / 2, bisecting in log of the energy
    excess over the peak of int_0^U f. For ``side="right"`` the profile
    lives on [a, l] (distance l - a). Returns ``(profile, slope)`` with
    slope = |U'(a)|.
    """
    if boundary_value < 1:
        raise ValueError("boundary_value must be at least 1")
    length = a + l if side == "left" else l - a
    if not length > 0:
        raise NoSolution("the interval is empty")
    en = _Energy(n, d, boundary_value)

    def miss(logE):
        return en.distance(math.exp(logE)) - length

    lo, hi = LOG_E_MIN, 0.0
    if miss(lo) < 0:
        raise NoSolution("the energy level cannot reach the boundary value within the interval")
    while miss(hi) > 0:
        hi += 5.0
        if hi > 200:
            raise NoSolution("no energy level gives the requested interval length")
    logE = brentq(miss, lo, hi, xtol=1e-13, rtol=1e-14)
    E = math.exp(logE)
    if abs(miss(logE)) > SLOPE_TOL * max(1.0, length):
        raise NoSolution("shooting on the interface slope did not converge")
    levels = np.linspace(0.0, boundary_value, 801)
    dist = np.concatenate([[0.0], [en.distance(E, u) for u in levels[1:]]])
    slope = en.slope(E)
    prof = StationaryProfile(a, length, slope, E, boundary_value, side, levels, dist)
    return prof, slope


@dataclass
class SpeedBound:
    H: float
    alpha0: float
    beta0: float
    slope_U: float
    slope_V: float
    w1: float
    w2: float


def stationary_speed_bound(f, g, p, a, l, sup_u=1.0, sup_v=1.0, init_slope_u=0.0, init_slope_v=0.0):
    """H = mu1 alpha0 + mu2 beta0 from the stationary pair with matched slopes.

    alpha0 and beta0 are the smallest slopes with mu1 alpha0 = mu2 beta0
    that dominate the two stationary slopes, the energy speeds, and the
    initial-data slopes.
    """
    U, sU = stationary_energy_profile(f, p.d1, a, l, 2.0 * max(sup_u, 0.5), "left")
    V, sV = stationary_energy_profile(g, p.d2, a, l, 2.0 * max(sup_v, 0.5), "right")
    w1, w2 = energy_speed(f, p.d1), energy_speed(g, p.d2)
    alpha_min = max(sU, w1, init_slope_u)
    beta_min = max(sV, w2, init_slope_v)
    beta0 = max(beta_min, p.mu1 * alpha_min / p.mu2)
    alpha0 = p.mu2 * beta0 / p.mu1
    return SpeedBound(p.mu1 * alpha0 + p.mu2 * beta0, alpha0, beta0, sU, sV, w1, w2)


# ---------------------------------------------------------------- converge to one

@dataclass
class ConvergeResult:
    reached: bool
    M: float | None
    T: float | None
    per_snapshot: list = field(default_factory=list)


def _margins(snap, p0, q0, c=0.0):
    shift = snap.s - c * snap.t
    xl = snap.y_left + shift
    xr = snap.y_right + shift
    ok_u = snap.u >= 1.0 - 0.75 * p0
    if not ok_u[0]:
        Mu = math.inf
    else:
        first_bad = np.argmin(ok_u) if not ok_u.all() else ok_u.size
        Mu = -float(xl[first_bad - 1])
    ok_v = snap.v <= 1.0 + 0.5 * q0
    if not ok_v[-1]:
        Mv = math.inf
    else:
        bad = np.nonzero(~ok_v)[0]
        Mv = float(xr[bad[-1] + 1]) if bad.size else float(xr[0])
    return max(Mu, Mv)


def converge_to_one_test(snapshots, p0, q0, c=0.0):
    """Smallest recorded T and the matching M with u >= 1 - 3p0/4 for x <= -M and v <= 1 + q0/2 for x >= M.

    Positions are physical (``c = 0``) or taken in the frame x - c t.
    """
    Ms = [_margins(s, p0, q0, c) for s in snapshots]
    for k in range(len(Ms)):
        tail = Ms[k:]
        if all(math.isfinite(m) for m in tail):
            return ConvergeResult(True, max(tail), float(snapshots[k].t), Ms)
    return ConvergeResult(False, None, None, Ms)
