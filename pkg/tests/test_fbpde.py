import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_banded

from freebound.errors import BadInitialData, Blowup, CflViolation
from freebound.fbpde import (
    DIRICHLET_ONE,
    UPWIND,
    InitialData,
    SchemeConfig,
    SimState,
    Trajectory,
    build_initial_state,
    interface_gradients,
    read_snapshot,
    run,
    step,
    write_snapshot,
)
from freebound.nonlin import Nonlinearity, ProblemParams
from freebound.tridiag import thomas
from freebound.wave import solve_matching

LOG = Nonlinearity.logistic(1.0)
CUB = Nonlinearity.cubic(0.3)
ZERO = Nonlinearity.custom(np.linspace(0, 20, 5), np.zeros(5))
ASYM = ProblemParams(1.0, 0.5, 1.0, 0.6)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(0, 10**6))
def test_thomas_matches_banded(n, seed):
    rng = np.random.default_rng(seed)
    lo, up = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    diag = np.abs(lo) + np.abs(up) + rng.uniform(0.1, 2.0, n)
    rhs = rng.normal(size=n)
    ab = np.zeros((3, n))
    ab[0, 1:] = up[:-1]
    ab[1] = diag
    ab[2, :-1] = lo[1:]
    assert np.allclose(thomas(lo, diag, up, rhs), solve_banded((1, 1), ab, rhs), rtol=1e-12, atol=1e-12)


def test_config_invariants():
    with pytest.raises(ValueError):
        SchemeConfig(N=8)
    with pytest.raises(ValueError):
        SchemeConfig(dt=0.03, T_end=1.0)
    with pytest.raises(ValueError):
        SchemeConfig(bc="periodic")
    assert SchemeConfig(bc="DirichletOne").bc == DIRICHLET_ONE
    assert SchemeConfig(N=4, coarse_ok=True).dy == 10.0


def test_ramp_state():
    cfg = SchemeConfig(L=20, N=40)
    st_ = build_initial_state(cfg, InitialData.ramp(10.0), LOG, LOG)
    assert st_.u[-1] == 0.0 and st_.v[0] == 0.0
    assert st_.u[0] == 1.0 and st_.v[-1] == 1.0
    assert st_.y_left[0] == -20.0 and st_.y_right[-1] == 20.0


def test_bad_pin():
    data = InitialData(lambda y: 0.5 + 0 * y, lambda y: np.minimum(1, y), 0.0)
    with pytest.raises(BadInitialData):
        build_initial_state(SchemeConfig(), data)


def test_bistable_far_field_below_threshold():
    data = InitialData.ramp(10.0, height_u=0.2)
    with pytest.raises(BadInitialData):
        build_initial_state(SchemeConfig(), data, CUB, CUB)
    build_initial_state(SchemeConfig(), InitialData.ramp(10.0, height_u=0.4), CUB, CUB)


def test_one_sided_zero_data_allowed():
    st_ = build_initial_state(SchemeConfig(), InitialData.ramp(10.0, height_u=0.0), LOG, LOG)
    assert not st_.u.any()


def test_gradients_exact_on_polynomials():
    dy = 0.1
    yl = dy * np.arange(-20, 1)
    yr = dy * np.arange(21)
    s = SimState(-yl, yr + yr**2, 0.0, 0.0, dy)
    du, dv = interface_gradients(s)
    assert du == pytest.approx(-1.0, abs=1e-12)
    assert dv == pytest.approx(1.0, abs=1e-12)


def test_gradient_second_order_on_wave():
    sol = solve_matching(LOG, LOG, ProblemParams())
    errs = []
    for dy in (0.1, 0.05):
        y = dy * np.arange(-40, 1)
        s = SimState(sol.phi(y), np.zeros(41), 0.0, 0.0, dy)
        du, _ = interface_gradients(s)
        errs.append(abs(du + sol.alpha))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_zero_dynamics():
    cfg = SchemeConfig(L=10, N=20, dt=0.1, T_end=1.0)
    data = InitialData(lambda y: 0 * y, lambda y: 0 * y)
    st_ = build_initial_state(cfg, data)
    step(st_, cfg, ZERO, ZERO, ProblemParams())
    assert st_.s_prime == 0.0 and st_.s == 0.0
    assert not st_.u.any() and not st_.v.any()


def _dense_step(w, b, d, react, dt, dy):
    # unknowns w1..wn, w0 = 0, ghost w_{n+1} = w_{n-1}
    n = w.size - 1
    r = d / dy**2
    A = np.zeros((n, n))
    for k in range(1, n + 1):
        i = k - 1
        A[i, i] = 1 + 2 * dt * r
        left = -dt * (r - b / (2 * dy))
        right = -dt * (r + b / (2 * dy))
        if k == n:
            left, right = -2 * dt * r, 0.0
        if k > 1:
            A[i, i - 1] = left
        if k < n:
            A[i, i + 1] = right
    rhs = w[1:] + dt * react(w[1:])
    return np.concatenate([[0.0], np.linalg.solve(A, rhs)])


def test_five_node_step_oracle():
    cfg = SchemeConfig(L=2.0, N=4, dt=0.1, T_end=0.1, coarse_ok=True)
    p = ProblemParams(1.0, 0.7, 1.3, 0.4)
    u = np.array([0.9, 0.8, 0.55, 0.3, 0.0])
    v = np.array([0.0, 0.45, 0.7, 0.85, 0.95])
    st_ = SimState(u.copy(), v.copy(), 0.25, 0.0, cfg.dy)
    dy = 0.5
    du = (-4 * 0.3 + 0.55) / (2 * dy)
    dv = (4 * 0.45 - 0.7) / (2 * dy)
    sp = -1.3 * du - 0.4 * dv
    step(st_, cfg, LOG, LOG, p)
    assert st_.s_prime == pytest.approx(sp, abs=1e-15)
    assert st_.s == pytest.approx(0.25 + 0.1 * sp, abs=1e-15)
    u_ref = _dense_step(u[::-1], -sp, 1.0, LOG, 0.1, dy)[::-1]
    v_ref = _dense_step(v, sp, 0.7, LOG, 0.1, dy)
    assert np.max(np.abs(st_.u - u_ref)) <= 1e-12
    assert np.max(np.abs(st_.v - v_ref)) <= 1e-12


def test_mirror_symmetry_each_step():
    cfg = SchemeConfig(L=20, N=100, dt=0.05, T_end=10.0)
    st_ = build_initial_state(cfg, InitialData.tanh(3.0, s0=1.5))
    for _ in range(cfg.n_steps):
        step(st_, cfg, LOG, LOG, ProblemParams())
        assert abs(st_.s - 1.5) <= 1e-12
        assert np.array_equal(st_.u[::-1], st_.v)


def test_symmetric_run():
    cfg = SchemeConfig(L=20, N=100, dt=0.05, T_end=10.0)
    traj, _ = run(cfg, InitialData.ramp(5.0), CUB, CUB, ProblemParams(2.0, 2.0, 0.5, 0.5))
    assert np.max(np.abs(traj.s)) <= 1e-10


@pytest.fixture(scope="module")
def asym_run():
    cfg = SchemeConfig(L=40, N=400, dt=0.02, T_end=40.0, snapshot_every=10.0)
    return cfg, run(cfg, InitialData.ramp(10.0), LOG, LOG, ASYM)


def test_trajectory_shape(asym_run):
    cfg, (traj, snaps) = asym_run
    assert len(traj) == cfg.n_steps + 1
    assert traj.t[-1] == pytest.approx(cfg.T_end)
    assert [round(s.t, 9) for s in snaps] == [0.0, 10.0, 20.0, 30.0, 40.0]
    for s in snaps:
        assert s.u[-1] == 0.0 and s.v[0] == 0.0


def test_stefan_bound_each_step(asym_run):
    _, (traj, _) = asym_run
    bound = ASYM.mu1 * np.max(np.abs(traj.du)) + ASYM.mu2 * np.max(np.abs(traj.dv))
    assert np.all(np.abs(traj.s_prime) <= bound + 1e-15)
    tail = traj.s[len(traj) // 2 :]
    assert np.all(np.diff(tail) > 0)


def test_invariant_region(asym_run):
    _, (_, snaps) = asym_run
    for s in snaps:
        assert min(s.u.min(), s.v.min()) >= -1e-8
        assert max(s.u.max(), s.v.max()) <= 1 + 1e-3


def test_temporal_order():
    data = InitialData.tanh(2.0)
    ends = []
    for dt in (0.02, 0.01, 0.005):
        traj, _ = run(SchemeConfig(L=20, N=200, dt=dt, T_end=5.0), data, LOG, LOG, ASYM)
        ends.append(traj.s[-1])
    order = math.log2(abs(ends[0] - ends[1]) / abs(ends[1] - ends[2]))
    assert order >= 0.9


def test_spatial_order_central():
    data = InitialData.tanh(2.0)
    ends = []
    for n in (400, 800, 1600):
        traj, _ = run(SchemeConfig(L=20, N=n, dt=0.005, T_end=5.0), data, LOG, LOG, ASYM)
        ends.append(traj.s[-1])
    assert math.log2(abs(ends[0] - ends[1]) / abs(ends[1] - ends[2])) >= 1.8


def test_upwind_option_runs():
    cfg = SchemeConfig(L=20, N=200, dt=0.01, T_end=2.0, advection=UPWIND)
    traj, _ = run(cfg, InitialData.ramp(5.0), LOG, LOG, ASYM)
    assert traj.s[-1] > 0


def test_dirichlet_option():
    cfg = SchemeConfig(L=20, N=200, dt=0.01, T_end=2.0, bc="dirichlet")
    _, snaps = run(cfg, InitialData.ramp(5.0), LOG, LOG, ASYM)
    assert snaps[-1].u[0] == 1.0 and snaps[-1].v[-1] == 1.0


def test_cfl_violation():
    cfg = SchemeConfig(L=2, N=20, dt=1.0, T_end=1.0, cfl_guard=0.5)
    st_ = build_initial_state(cfg, InitialData.ramp(0.2, height_v=0.0))
    with pytest.raises(CflViolation):
        step(st_, cfg, LOG, LOG, ProblemParams(mu1=5.0))


def test_blowup_carries_partial_trajectory():
    steep = Nonlinearity.custom(np.linspace(0, 1e6, 3), [0.0, 0.0, 1e9])
    grow = Nonlinearity.custom([0.0, 1.0, 2.0, 1e6], [0.0, 0.0, 50.0, 5e7])
    cfg = SchemeConfig(L=10, N=20, dt=0.1, T_end=5.0)
    data = InitialData.ramp(1.0, height_u=2.0)
    with pytest.raises(Blowup) as err:
        run(cfg, data, grow, steep, ProblemParams())
    assert err.value.trajectory is not None and len(err.value.trajectory) >= 1


def test_csv_outputs(tmp_path, asym_run):
    _, (traj, snaps) = asym_run
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,s,s_prime,du,dv"
    back = Trajectory.from_csv(path)
    assert np.array_equal(back.s, traj.s)
    write_snapshot(snaps[-1], tmp_path, "snap_0004")
    assert (tmp_path / "snap_0004_u.csv").read_text().startswith("y,u\n")
    assert (tmp_path / "snap_0004_v.csv").read_text().startswith("y,v\n")
    meta = json.loads((tmp_path / "snap_0004.json").read_text())
    assert set(meta) == {"t", "s", "s_prime"}
    again = read_snapshot(tmp_path, "snap_0004")
    assert np.array_equal(again.u, snaps[-1].u)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory([0, 0], [0, 0], [0, 0], [0, 0], [0, 0])
    with pytest.raises(ValueError):
        Trajectory([0, 1], [0, np.nan], [0, 0], [0, 0], [0, 0])
