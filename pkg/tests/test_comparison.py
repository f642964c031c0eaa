import json
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from freebound.comparison import (
    anchor_lower_triple,
    converge_to_one_test,
    eval_lower_triple,
    extend_psi,
    lower_solution_test,
    ordered_run_test,
    residuals,
    select_subsolution_params,
    stationary_energy_profile,
    stationary_speed_bound,
    triple_initial_data,
)
from freebound.errors import BadOrdering, ConstraintViolation, Infeasible, NoSolution
from freebound.fbpde import InitialData, SchemeConfig, build_initial_state, run
from freebound.nonlin import Nonlinearity, ProblemParams, energy_speed, theta_bar
from freebound.wave import solve_matching

LOG = Nonlinearity.logistic(1.0)
CUB = Nonlinearity.cubic(0.3)
ZERO = Nonlinearity.custom(np.linspace(0, 20, 5), np.zeros(5))
SYM = ProblemParams()
ASYM = ProblemParams(1.0, 0.5, 1.0, 0.6)
SKEW = ProblemParams(1.0, 1.0, 2.0, 1.0)


@pytest.fixture(scope="module")
def sym_wave():
    return solve_matching(LOG, LOG, SYM)


@pytest.fixture(scope="module")
def skew_wave():
    return solve_matching(LOG, LOG, SKEW)


@pytest.fixture(scope="module")
def sym_params(sym_wave):
    return select_subsolution_params(sym_wave, LOG, LOG, SYM)


# ---------------------------------------------------------------- extension

def _stub_wave(beta, c=0.0, d2=1.0):
    psi = lambda x, nu=0: np.asarray(x) * 0.0 + (beta if nu == 1 else 0.0)
    return SimpleNamespace(psi=psi, beta=beta, c=c, params=ProblemParams(d2=d2))


def test_extension_closed_form():
    ext = extend_psi(_stub_wave(1.0), 0.5)
    assert ext(-1.0) == pytest.approx(0.5 - 0.5 * math.exp(2.0), abs=1e-12)
    assert ext(-1.0) == pytest.approx(-3.1945280494653, abs=1e-10)


def test_extension_matches_at_zero(skew_wave):
    ext = extend_psi(skew_wave, 1.0)
    assert ext(0.0) == 0.0
    assert ext(-1e-300) == pytest.approx(0.0, abs=1e-15)
    assert ext(-1e-14, 1) == pytest.approx(skew_wave.beta, abs=1e-12)
    assert ext(0.0, 1) == pytest.approx(skew_wave.beta, abs=1e-10)


def test_extension_constraint(skew_wave):
    too_big = 1.01 * skew_wave.beta * SKEW.d2 / skew_wave.c
    with pytest.raises(ConstraintViolation):
        extend_psi(skew_wave, too_big)
    with pytest.raises(ConstraintViolation):
        extend_psi(skew_wave, 0.0)


# ---------------------------------------------------------------- parameters

def _recheck(sp, wave, p):
    # the four constraints, recomputed from stored fields only
    beta, c = wave.beta, wave.c
    ok = sp.lambda0 * c < beta * p.d2
    q_cap = (beta**2 * p.d2 - c * sp.lambda0 * beta) / (sp.lambda0 * (sp.vartheta + sp.l0))
    # monostable g: the second cap is 1
    ok &= sp.q0 <= min(q_cap, 1.0)
    dphi = float(wave.phi(sp.phi_inv_p0, 1)) - float(wave.phi(0.0, 1))
    denom = p.mu2 * beta * sp.q0 + sp.lambda0 * p.mu1 * dphi
    if denom > 0:
        ok &= sp.lam < (sp.vartheta + sp.tau) * sp.q0 * sp.lambda0 / denom
    ok &= math.isclose(sp.z2, (sp.varrho + sp.r) / (sp.varrho * sp.gamma) * sp.p0, rel_tol=1e-14)
    ok &= math.isclose(sp.z4, (sp.vartheta + sp.tau) / (sp.vartheta * sp.lam) * sp.q0, rel_tol=1e-14)
    ok &= sp.vartheta < sp.varrho and sp.p0 < sp.delta and sp.q0 < sp.nu
    return ok


def test_symmetric_feasible(sym_wave, sym_params):
    assert sym_params.feasible
    assert _recheck(sym_params, sym_wave, SYM)
    assert sym_params.z1 + sym_params.z2 == pytest.approx(sym_params.xi0)
    assert sym_params.z3 - sym_params.z4 == pytest.approx(sym_params.eta0)


def test_skew_feasible(skew_wave):
    sp = select_subsolution_params(skew_wave, LOG, LOG, SKEW)
    assert sp.feasible and _recheck(sp, skew_wave, SKEW)
    assert sp.lambda0 * skew_wave.c < skew_wave.beta * SKEW.d2


def test_forced_rates_infeasible(sym_wave, sym_params):
    with pytest.raises(Infeasible) as err:
        select_subsolution_params(sym_wave, LOG, LOG, SYM, vartheta=sym_params.varrho)
    assert err.value.constraint == "vartheta<varrho"


def test_params_json(sym_params):
    d = json.loads(sym_params.to_json())
    assert d["checks"]["vartheta<varrho"] is True
    assert d["p0"] == sym_params.p0


def test_bistable_cap():
    w = solve_matching(CUB, CUB, SYM)
    sp = select_subsolution_params(w, CUB, CUB, SYM)
    assert sp.q0 <= 4.0 / 3.0 * (1.0 - theta_bar(CUB))


@settings(max_examples=25, deadline=None)
@given(t1=st.floats(0.0, 30.0), dt=st.floats(0.01, 10.0))
def test_envelope_monotonicity(sym_params, sym_wave, t1, dt):
    sp = sym_params
    xi = lambda t: sp.z1 + sp.z2 * math.exp(-sp.varrho * t)
    eta = lambda t: sp.z3 - sp.z4 * math.exp(-sp.vartheta * t)
    assert xi(t1 + dt) < xi(t1) and eta(t1 + dt) > eta(t1)
    _, _, zl = eval_lower_triple(sp, sym_wave, 0.0, t1)
    assert zl == pytest.approx(xi(t1) - eta(t1), abs=1e-12)


# ---------------------------------------------------------------- triple

@settings(max_examples=25, deadline=None)
@given(t=st.floats(0.0, 40.0))
def test_boundary_identities(sym_params, sym_wave, t):
    _, _, zl = eval_lower_triple(sym_params, sym_wave, 0.0, t)
    u, v, _ = eval_lower_triple(sym_params, sym_wave, zl, t)
    assert abs(u) <= 1e-10 and abs(v) <= 1e-10


def test_degenerate_is_translate(sym_wave):
    sp = select_subsolution_params(sym_wave, LOG, LOG, SYM, p0=0.0, q0=0.0)
    z = np.linspace(-20, 5, 101)
    for t in (0.0, 3.0, 50.0):
        u, _, zl = eval_lower_triple(sp, sym_wave, z, t)
        x = z - sp.xi0 + sp.eta0
        ref = np.where(x <= 0, sym_wave.phi(np.minimum(x, 0.0)), 0.0)
        assert np.max(np.abs(u - ref)) <= 1e-14
        assert zl == pytest.approx(sp.xi0 - sp.eta0, abs=1e-14)


def test_degenerate_residuals(sym_wave):
    sp = select_subsolution_params(sym_wave, LOG, LOG, SYM, p0=0.0, q0=0.0)
    exact = residuals(sp, sym_wave, LOG, LOG, SYM, method="analytic")
    assert exact.maxA <= 1e-8 and abs(exact.minB) <= 1e-8
    assert abs(exact.boundary_slack) <= 1e-8
    # centred differences: only rounding of order eps / h^2 remains
    fd = residuals(sp, sym_wave, LOG, LOG, SYM)
    assert fd.maxA <= 1e-6 and abs(fd.minB) <= 1e-6


def test_feasible_residuals(sym_wave, sym_params):
    rep = residuals(sym_params, sym_wave, LOG, LOG, SYM)
    assert rep.n_points == 200 * 50
    assert rep.maxA <= 1e-6 and rep.minB >= -1e-6 and rep.boundary_slack >= 0
    assert rep.boundary_u <= 1e-10 and rep.boundary_v <= 1e-10
    assert rep.richardson_gap <= 1e-5
    other = residuals(sym_params, sym_wave, LOG, LOG, SYM, method="analytic")
    assert abs(other.maxA - rep.maxA) <= 1e-6 and abs(other.minB - rep.minB) <= 1e-6


def test_lambda0_violation_detected(skew_wave):
    lam0 = 2.0 * skew_wave.beta * SKEW.d2 / skew_wave.c
    sp = select_subsolution_params(skew_wave, LOG, LOG, SKEW, lambda0=lam0, q0=0.125, strict=False)
    assert not sp.feasible
    assert residuals(sp, skew_wave, LOG, LOG, SKEW).minB < 0


# ---------------------------------------------------------------- ordering

@pytest.fixture(scope="module")
def ordering_setup():
    cfg = SchemeConfig(L=40, N=400, dt=0.02, T_end=50.0)
    return cfg, InitialData.ramp(10.0)


def test_identical_runs(ordering_setup):
    cfg, base = ordering_setup
    rep = ordered_run_test((cfg, base), (cfg, base), LOG, LOG, ASYM, 50.0)
    assert rep.max_violation <= 1e-12
    assert json.loads(rep.to_json())["max_violation"] <= 1e-12


def test_lowered_runs(ordering_setup):
    cfg, base = ordering_setup
    low = InitialData(
        lambda y: 0.5 * base.u0(y),
        lambda y: np.minimum(2.0 * base.v0(y), 1.5),
        base.s0 - 1.0,
    )
    rep = ordered_run_test((cfg, base), (cfg, low), LOG, LOG, ASYM, 50.0)
    assert rep.times[-1] == pytest.approx(50.0)
    assert rep.passed(1e-8)


def test_unordered_start(ordering_setup):
    cfg, base = ordering_setup
    with pytest.raises(BadOrdering):
        ordered_run_test((cfg, base), (cfg, InitialData.ramp(10.0, s0=0.5)), LOG, LOG, ASYM, 5.0)


@pytest.mark.parametrize("params", [SYM, ASYM], ids=["symmetric", "asymmetric"])
def test_triple_as_initial_data(params):
    w = solve_matching(LOG, LOG, params)
    sp = select_subsolution_params(w, LOG, LOG, params)
    cfg = SchemeConfig(L=40, N=400, dt=0.02, T_end=40.0)
    base = InitialData.ramp(10.0)
    anchored = anchor_lower_triple(sp, w, build_initial_state(cfg, base, LOG, LOG))
    low = triple_initial_data(anchored, w)
    rep = ordered_run_test((cfg, base), (cfg, low), LOG, LOG, params, 40.0)
    assert rep.passed(1e-8)


def test_analytic_triple_under_run():
    w = solve_matching(LOG, LOG, ASYM)
    sp = select_subsolution_params(w, LOG, LOG, ASYM)
    cfg = SchemeConfig(L=40, N=400, dt=0.02, T_end=40.0, snapshot_every=2.0)
    _, snaps = run(cfg, InitialData.ramp(10.0), LOG, LOG, ASYM)
    conv = converge_to_one_test(snaps, sp.p0, sp.q0)
    k = [s.t for s in snaps].index(conv.T)
    anchored = anchor_lower_triple(sp, w, snaps[k])
    rep = lower_solution_test(anchored, w, snaps[k:], conv.T)
    assert len(rep.times) == len(snaps) - k
    assert rep.passed(1e-8)


# ---------------------------------------------------------------- stationary

def test_zero_reaction_linear():
    prof, slope = stationary_energy_profile(ZERO, 1.0, 0.0, 1.0, 1.0)
    assert slope == pytest.approx(1.0, abs=1e-10)
    x = np.linspace(-1, 0, 11)
    assert np.max(np.abs(prof(x) + x)) <= 1e-10


def _shoot(n, d, slope, length):
    sol = solve_ivp(lambda x, y: (y[1], -n(y[0]) / d), (0, length), (0.0, slope), method="DOP853", rtol=1e-12, atol=1e-14)
    return sol.y[0, -1]


@pytest.mark.parametrize("n,d,l,B", [(LOG, 1.0, 5.0, 2.0), (LOG, 0.5, 3.0, 1.5), (CUB, 1.0, 4.0, 1.5)])
def test_slope_against_ode_shot(n, d, l, B):
    # independent route: integrate the ODE outward from the interface
    _, slope = stationary_energy_profile(n, d, 0.0, l, B)
    assert _shoot(n, d, slope, l) == pytest.approx(B, abs=1e-6)
    assert slope >= energy_speed(n, d)


def test_right_side_profile():
    prof, slope = stationary_energy_profile(LOG, 0.5, 0.0, 3.0, 1.5, side="right")
    assert prof(0.0) == 0.0 and prof(3.0) == pytest.approx(1.5)
    assert _shoot(LOG, 0.5, slope, 3.0) == pytest.approx(1.5, abs=1e-6)


def test_long_interval_slope_floor():
    prof, slope = stationary_energy_profile(LOG, 1.0, 0.0, 80.0, 2.0)
    w1 = energy_speed(LOG, 1.0)
    assert slope >= w1 and slope == pytest.approx(0.57735, abs=1e-5)
    assert 0 < prof.energy_excess < 1e-20


def test_stationary_errors():
    with pytest.raises(ValueError):
        stationary_energy_profile(LOG, 1.0, 0.0, 5.0, 0.5)
    with pytest.raises(NoSolution):
        # int_0^U f keeps growing, so every level reaches 2 within a bounded distance
        stationary_energy_profile(Nonlinearity.custom([0.0, 0.5, 1.0, 1.5, 3.0], [0.0, 1.0, 0.0, 1.0, 1.0]), 1.0, 0.0, 50.0, 2.0)


def test_speed_bound():
    sb = stationary_speed_bound(LOG, LOG, ASYM, 0.0, 20.0)
    assert 0 < sb.H < math.inf
    assert ASYM.mu1 * sb.alpha0 == pytest.approx(ASYM.mu2 * sb.beta0)
    assert sb.alpha0 >= sb.w1 and sb.beta0 >= sb.w2
    assert sb.H == pytest.approx(ASYM.mu1 * sb.alpha0 + ASYM.mu2 * sb.beta0)


# ---------------------------------------------------------------- converge to one

def test_already_near_one():
    cfg = SchemeConfig(L=20, N=200)
    st0 = build_initial_state(cfg, InitialData.ramp(10.0))
    res = converge_to_one_test([st0], 0.2, 0.2)
    # u >= 0.85 needs y <= -8.5; v <= 1.1 everywhere
    assert res.reached and res.T == 0.0 and res.M == pytest.approx(8.5)


def test_not_reached():
    cfg = SchemeConfig(L=20, N=200, dt=0.01, T_end=0.1, snapshot_every=0.05)
    _, snaps = run(cfg, InitialData.ramp(10.0, height_u=0.3, height_v=0.3), LOG, LOG, SYM)
    res = converge_to_one_test(snaps, 0.2, 0.2)
    assert not res.reached and res.M is None


def test_reached_later():
    cfg = SchemeConfig(L=20, N=200, dt=0.02, T_end=20.0, snapshot_every=1.0)
    _, snaps = run(cfg, InitialData.ramp(10.0, height_u=0.3, height_v=0.3), LOG, LOG, SYM)
    res = converge_to_one_test(snaps, 0.2, 0.2)
    assert res.reached and 0 < res.T <= 20.0 and math.isfinite(res.M)
