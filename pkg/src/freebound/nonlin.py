"""Reaction terms, their classification, and the scalar functionals built on them.

Two parametric families are provided, the logistic term ``a*u*(1-u)``
(monostable) and the cubic ``u*(1-u)*(u-theta)`` (bistable for
``theta < 1/2``), plus tabulated terms interpolated by a monotone cubic.

Derived quantities:

    F(u)      = -2 * int_0^u f(s) ds                  (potential)
    theta_bar : root of F in (theta, 1)                (bistable only)
    L_m       = int_0^m ds / sqrt((F(s) - F(m)) / d)   (compact-support radius)
    w         = sqrt((2/d) * int_0^1 f)                (zero-speed interface slope)
    beta~     = alpha * sqrt(int_0^1 f / int_0^1 g)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .errors import DomainViolation, EvaluationDomain, NegativeMass, NoRoot

MONOSTABLE = "f_M"
BISTABLE = "f_B"

QUAD_TOL = 1e-12
SIGN_TOL = 1e-12
N_SAMPLES = 10_001
THETA_BAR_XTOL = 1e-12

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True)
class ProblemParams:
    """Diffusivities and interface-response coefficients of the free-boundary system."""

    d1: float = 1.0
    d2: float = 1.0
    mu1: float = 1.0
    mu2: float = 1.0

    def __post_init__(self):
        for name in ("d1", "d2", "mu1", "mu2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    def to_dict(self):
        return {"d1": self.d1, "d2": self.d2, "mu1": self.mu1, "mu2": self.mu2}


@dataclass(frozen=True)
class Nonlinearity:
    """A reaction term ``f(u)`` for ``u >= 0``.

    Use the :meth:`logistic`, :meth:`cubic` and :meth:`custom` constructors
    rather than the raw initializer.
    """

    kind: str
    rate: float = 1.0
    theta: float | None = None
    nodes: tuple = ()
    values: tuple = ()
    claimed: str | None = None
    _interp: object = field(default=None, repr=False, compare=False)

    @classmethod
    def logistic(cls, a=1.0):
        if not (math.isfinite(a) and a > 0):
            raise ValueError("logistic rate must be positive")
        return cls("logistic", rate=float(a), claimed=MONOSTABLE)

    @classmethod
    def cubic(cls, theta):
        if not 0 < theta < 1:
            raise ValueError("cubic threshold must lie in (0, 1)")
        return cls("cubic", theta=float(theta), claimed=BISTABLE)

    @classmethod
    def custom(cls, nodes, values, claimed=None, theta=None):
        """Tabulated term on a strictly increasing node grid starting at 0.

        ``f(0)`` and ``f(1)`` must vanish to 1e-12. Evaluation beyond the last
        node raises :class:`EvaluationDomain`.
        """
        u = np.asarray(nodes, dtype=float)
        fu = np.asarray(values, dtype=float)
        if u.ndim != 1 or u.shape != fu.shape or u.size < 3:
            raise ValueError("custom table needs matching 1-D node/value arrays")
        if u[0] != 0.0 or np.any(np.diff(u) <= 0):
            raise ValueError("custom nodes must start at 0 and increase strictly")
        if not np.all(np.isfinite(fu)):
            raise ValueError("custom values must be finite")
        interp = PchipInterpolator(u, fu, extrapolate=False)
        if abs(fu[0]) > SIGN_TOL or (u[-1] >= 1 and abs(float(interp(1.0))) > SIGN_TOL):
            raise ValueError("custom table must satisfy f(0) = f(1) = 0")
        if claimed not in (None, MONOSTABLE, BISTABLE):
            raise ValueError(f"unknown class {claimed!r}")
        return cls(
            "custom",
            theta=theta,
            nodes=tuple(u.tolist()),
            values=tuple(fu.tolist()),
            claimed=claimed,
            _interp=interp,
        )

    @property
    def u_max(self):
        return self.nodes[-1] if self.kind == "custom" else math.inf

    def __call__(self, u):
        if self.kind == "logistic":
            return self.rate * u * (1 - u)
        if self.kind == "cubic":
            return u * (1 - u) * (u - self.theta)
        return self._custom_eval(u, 0)

    def derivative(self, u):
        if self.kind == "logistic":
            return self.rate * (1 - 2 * u)
        if self.kind == "cubic":
            th = self.theta
            return -3 * u * u + 2 * (1 + th) * u - th
        return self._custom_eval(u, 1)

    def _custom_eval(self, u, nu):
        arr = np.asarray(u, dtype=float)
        if np.any(arr < 0) or np.any(arr > self.u_max):
            raise EvaluationDomain(f"custom term undefined outside [0, {self.u_max}]")
        out = self._interp(arr, nu)
        return float(out) if np.ndim(u) == 0 else out

    @property
    def threshold(self):
        """The sign-change level theta of a bistable term (None otherwise)."""
        if self.kind == "cubic" or self.theta is not None:
            return self.theta
        if self.claimed != BISTABLE:
            return None
        return _sign_change(self, 1e-9, 1 - 1e-9)

    def descriptor(self):
        if self.kind == "logistic":
            return f"logistic({self.rate:g})"
        if self.kind == "cubic":
            return f"cubic({self.theta:g})"
        return f"custom[{len(self.nodes)} nodes]"


def _sign_change(n, a, b):
    s = np.linspace(a, b, N_SAMPLES)
    fs = np.asarray(n(s))
    idx = np.nonzero((fs[:-1] <= 0) & (fs[1:] > 0))[0]
    if idx.size == 0:
        return None
    lo, hi = s[idx[0]], s[idx[0] + 1]
    while hi - lo > THETA_BAR_XTOL:
        mid = 0.5 * (lo + hi)
        if n(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class ClassReport:
    kind_claimed: str | None
    checks_passed: list
    checks_failed: list
    theta: float | None = None
    mass: float | None = None

    @property
    def ok(self):
        return not self.checks_failed


def _integral(n, a, b):
    if n.kind == "custom":
        # piecewise cubic: the interpolant's own antiderivative is exact
        if b > n.u_max:
            raise EvaluationDomain(f"custom term undefined beyond {n.u_max}")
        return float(n._interp.integrate(a, b))
    val, _ = quad(n, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return val


def mass(n):
    """int_0^1 f(s) ds."""
    return _integral(n, 0.0, 1.0)


def validate_nonlinearity(n):
    """Sample the axioms of the class ``n`` claims and report which fail.

    Sign conditions are checked on a uniform grid of 10^4 intervals over
    [0, 2]; nodes within 1e-9 of an interval endpoint are skipped since the
    conditions are open.
    """
    s = np.linspace(0.0, 2.0, N_SAMPLES)
    try:
        fs = np.asarray(n(s), dtype=float)
        d0 = float(n.derivative(0.0))
        d1 = float(n.derivative(1.0))
    except EvaluationDomain:
        raise
    if not np.all(np.isfinite(fs)) or not (math.isfinite(d0) and math.isfinite(d1)):
        raise EvaluationDomain("nonlinearity is not finite on [0, 2]")

    checks = []
    f0, f1 = float(n(0.0)), float(n(1.0))
    checks.append(("f(0)=0", abs(f0) <= SIGN_TOL))
    checks.append(("f(1)=0", abs(f1) <= SIGN_TOL))
    checks.append(("f'(1)<0", d1 < 0))

    def strict(lo, hi, sign):
        mask = (s > lo + 1e-9) & (s < hi - 1e-9)
        return bool(np.all(sign * fs[mask] > 0))

    theta = None
    m = None
    claimed = n.claimed
    if claimed == MONOSTABLE:
        checks.append(("f'(0)>0", d0 > 0))
        mask = (s > 1e-9) & (np.abs(s - 1) > 1e-9)
        checks.append(("(1-s)f(s)>0 for s>0, s!=1", bool(np.all((1 - s[mask]) * fs[mask] > 0))))
    elif claimed == BISTABLE:
        checks.append(("f'(0)<0", d0 < 0))
        m = mass(n)
        checks.append(("int_0^1 f>0", m > 0))
        theta = n.threshold
        if theta is None or not 0 < theta < 1:
            checks.append(("sign change theta in (0,1)", False))
        else:
            checks.append(("f<0 on (0,theta)", strict(0.0, theta, -1)))
            checks.append(("f>0 on (theta,1)", strict(theta, 1.0, 1)))
            checks.append(("f<0 on (1,inf)", strict(1.0, 2.0 + 1e-8, -1)))
            try:
                theta_bar(n)
                checks.append(("F(theta_bar)=0 for some theta_bar in (theta,1)", True))
            except NoRoot:
                checks.append(("F(theta_bar)=0 for some theta_bar in (theta,1)", False))
    passed = [name for name, ok in checks if ok]
    failed = [name for name, ok in checks if not ok]
    return ClassReport(claimed, passed, failed, theta=theta, mass=m)


def potential_F(n, u):
    """F(u) = -2 * int_0^u f(s) ds by adaptive Gauss-Kronrod quadrature."""
    if u < 0:
        raise EvaluationDomain("potential defined for u >= 0 only")
    if u == 0:
        return 0.0
    return -2.0 * _integral(n, 0.0, u)


def theta_bar(n):
    """Smallest root of F in (theta, 1), by bisection to 1e-12 in the argument."""
    theta = n.threshold
    if theta is None:
        raise NoRoot("theta_bar needs a bistable term with a threshold")
    grid = np.linspace(theta, 1.0, 401)[1:]
    Fs = [potential_F(n, u) for u in grid]
    lo = theta
    F_lo = potential_F(n, lo)
    if F_lo <= 0:
        raise NoRoot("F(theta) <= 0, no sign change on (theta, 1)")
    hi = None
    for u, Fu in zip(grid, Fs):
        if Fu <= 0:
            hi = u
            break
        lo = u
    if hi is None:
        raise NoRoot("F does not change sign on (theta, 1)")
    if potential_F(n, hi) == 0 and hi < 1:
        return hi
    while hi - lo > THETA_BAR_XTOL:
        mid = 0.5 * (lo + hi)
        if potential_F(n, mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _tail_integral(n, m, gap):
    """2 * int_{m-gap}^{m} f, accurate in relative terms for small ``gap``."""
    a = m - gap
    x = a + 0.5 * gap * (_GL_NODES + 1)
    return gap * float(np.dot(_GL_WEIGHTS, np.asarray(n(x), dtype=float)))


def support_radius_Lm(n, d1, m):
    """Half-width of the compact-support stationary bump with peak ``m``.

    The inverse square-root singularity at s = m is removed by s = m*sin(w);
    the difference F(s) - F(m) = 2 * int_s^m f is integrated directly so
    that it keeps full relative accuracy as s -> m.
    """
    if not 0 < m < 1:
        raise DomainViolation("m must lie in (0, 1)")
    probe = np.linspace(0.0, m, 2001)[:-1]
    gaps = m - probe
    G = np.array([_tail_integral(n, m, g) for g in gaps])
    if np.any(G <= 0):
        bad = probe[np.argmax(G <= 0)]
        raise DomainViolation(f"F(s) - F(m) <= 0 at s = {bad:.6g}; m below theta_bar?")

    def integrand(w):
        gap = 2.0 * m * math.sin(0.5 * (0.5 * math.pi - w)) ** 2
        G = _tail_integral(n, m, gap)
        if G <= 0:
            raise DomainViolation("F(s) - F(m) <= 0 near the peak")
        return m * math.cos(w) / math.sqrt(G / d1)

    val, _ = quad(integrand, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=1e-10, limit=400)
    return val


def energy_speed(n, d):
    """sqrt((2/d) * int_0^1 f): the interface slope of the zero-speed profile."""
    m = mass(n)
    if m <= 0:
        raise NegativeMass(f"int_0^1 f = {m:.3g} <= 0")
    return math.sqrt(2.0 * m / d)


def beta_tilde(f, g, alpha):
    mf, mg = mass(f), mass(g)
    if mf <= 0 or mg <= 0:
        raise NegativeMass("both masses must be positive")
    return alpha * math.sqrt(mf / mg)


def parse_nonlinearity(text):
    """Parse ``logistic(a)``, ``cubic(theta)`` or ``custom(path.csv)``."""
    t = text.strip()
    if "(" not in t or not t.endswith(")"):
        raise ValueError(f"bad nonlinearity descriptor {text!r}")
    name, arg = t[:-1].split("(", 1)
    name = name.strip().lower()
    arg = arg.strip()
    if name == "logistic":
        return Nonlinearity.logistic(float(arg) if arg else 1.0)
    if name == "cubic":
        return Nonlinearity.cubic(float(arg))
    if name == "custom":
        table = np.loadtxt(arg, delimiter=",", skiprows=1, ndmin=2)
        return Nonlinearity.custom(table[:, 0], table[:, 1])
    raise ValueError(f"unknown nonlinearity family {name!r}")
