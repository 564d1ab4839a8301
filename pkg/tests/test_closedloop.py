import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bfstab import build_gains, examples
from bfstab.closedloop import (
    ImplicitEuler,
    Plant,
    ReducedState,
    Trajectory,
    classify,
    fit_decay_rate,
    lyapunov_bound,
    lyapunov_derivative_check,
    monotone_tail,
    simulate,
    simulate_reduced,
    step_linear,
    step_nonlinear,
)
from bfstab.errors import ConfigError
from bfstab.gains import GainParameters
from bfstab.mesh import ScalarField
from bfstab.verify import random_spectrum, synthetic_basis


def _traj(t, norms, diverged=False):
    t = np.asarray(t, float)
    return Trajectory(t, np.asarray(norms, float), np.zeros((t.size, 0)), np.zeros((t.size, 0)), 0.01, diverged)


def _scalar_gains(gamma=3.0, lam=-1.0, tr=2.0):
    return build_gains(synthetic_basis([lam, 10.0], [tr, 1.0]), GainParameters(0.0, (gamma,)))


# reduced dynamics ------------------------------------------------------------


def test_reduced_zero_state_stays_zero(rod_gains):
    tr = simulate_reduced(np.zeros(3), rod_gains, 0.1, 1e-3)
    assert np.all(tr.norms == 0) and np.all(tr.modes == 0)


def test_reduced_scalar_solution_exact():
    gs = _scalar_gains(gamma=3.0)
    tr = simulate_reduced(ReducedState(np.array([2.0])), gs, 1.0, 0.01, 2)
    expected = np.abs(np.sqrt(gs.A[0, 0]) * 2.0) * np.exp(-3.0 * tr.times)
    assert np.allclose(tr.norms, expected, rtol=1e-12)
    assert np.allclose(tr.modes[:, 0], 2.0 * np.exp(-3.0 * tr.times), rtol=1e-12)
    assert fit_decay_rate(tr).mu_hat == pytest.approx(6.0, rel=1e-6)


def test_reduced_example1_pointwise_bound(rod_gains, rng):
    g1 = rod_gains.params.gammas[0]
    for _ in range(5):
        tr = simulate_reduced(rng.standard_normal(3), rod_gains, 0.5, 1e-3, 5)
        bound = np.exp(-g1 * tr.times) * tr.norms[0]
        assert np.all(tr.norms <= bound + 1e-9 * tr.norms[0])


def test_reduced_rejects_bad_input(rod_gains):
    with pytest.raises(ConfigError):
        simulate_reduced(np.zeros(2), rod_gains, 1.0, 0.1)
    with pytest.raises(ConfigError):
        simulate_reduced(np.zeros(3), rod_gains, 1.0, 0.0)


def test_lyapunov_scalar_is_exact():
    gs = _scalar_gains(gamma=4.0)
    Z = np.array([0.7])
    assert lyapunov_derivative_check(Z, gs) == pytest.approx(lyapunov_bound(Z, gs), rel=1e-12)
    assert lyapunov_derivative_check(np.zeros(1), gs) == 0.0


@given(st.integers(0, 2**32 - 1))
def test_lyapunov_bound_random(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(1, 7))
    lam, gam, rho = random_spectrum(rng, N)
    tr = rng.choice([-1.0, 1.0], N) * rng.uniform(0.5, 5.0, N)
    gs = build_gains(synthetic_basis(np.r_[lam, rho + 50], np.r_[tr, 1.0]), GainParameters(rho, tuple(gam)))
    q = rng.standard_normal(N)
    Z = gs.A_inv_sqrt @ q
    lhs, rhs = lyapunov_derivative_check(Z, gs), lyapunov_bound(Z, gs)
    assert lhs <= rhs + 1e-10 * max(abs(rhs), 1.0)


# decay fit -------------------------------------------------------------------


def test_fit_exponential():
    t = np.linspace(0, 1, 101)
    rep = fit_decay_rate(_traj(t, 5 * np.exp(-2 * t)))
    assert rep.mu_hat == pytest.approx(4.0, abs=1e-6)
    assert rep.C_hat == pytest.approx(1.0, rel=1e-6)
    assert rep.window == (0.5, 1.0) and rep.passed


def test_fit_constant_norm():
    rep = fit_decay_rate(_traj(np.linspace(0, 1, 20), np.ones(20)))
    assert rep.mu_hat == pytest.approx(0.0, abs=1e-12)
    assert not rep.passed


def test_fit_target_and_sentinels():
    t = np.linspace(0, 1, 40)
    assert not fit_decay_rate(_traj(t, np.exp(-t)), target=3.0).passed
    zeros = np.r_[np.ones(20), np.zeros(20)]
    assert fit_decay_rate(_traj(t, zeros)).mu_hat == np.inf
    rep = fit_decay_rate(_traj(t, np.exp(t), diverged=True))
    assert rep.mu_hat == -np.inf and not rep.passed


def test_fit_floor_drops_roundoff_tail():
    t = np.linspace(0, 4, 401)
    y = np.maximum(np.exp(-20 * t), 1e-13)
    assert fit_decay_rate(_traj(t, y)).mu_hat < 1.0
    assert fit_decay_rate(_traj(t, y), floor=1e-10).mu_hat == pytest.approx(40.0, rel=1e-6)


def test_fit_needs_samples():
    with pytest.raises(ConfigError):
        fit_decay_rate(_traj(np.linspace(0, 1, 6), np.ones(6)))
    with pytest.raises(ConfigError):
        fit_decay_rate(_traj(np.linspace(0, 1, 20), np.ones(20)), window_fraction=0.0)


def test_trajectory_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        _traj([0.0, 0.0], [1.0, 1.0])
    t = np.array([0.0, 0.5])
    tr = Trajectory(t, np.array([1.0, 0.5]), np.array([[1.0, 2.0], [0.1, 0.2]]), np.array([[3.0], [4.0]]), 0.5)
    text = tr.to_csv(tmp_path / "t.csv")
    lines = text.splitlines()
    assert lines[0] == "t,norm,mode_1,mode_2,u_sample"
    assert lines[2] == "0.5,0.5,0.10000000000000001,0.20000000000000001,4"
    assert (tmp_path / "t.csv").read_text() == text


def test_monotone_tail_and_classify():
    t = np.linspace(0, 1, 50)
    assert monotone_tail(_traj(t, np.exp(-t)))
    assert not monotone_tail(_traj(t, 1 + 0.5 * np.sin(40 * t)))
    assert classify(_traj(t, np.exp(-t))) == "converged"
    assert classify(_traj(t, np.ones(50))) == "stalled"
    assert classify(_traj(t, np.exp(t), diverged=True)) == "diverged"


# PDE stepping --------------------------------------------------------------


def test_zero_state_stays_zero(rod, rod_gains):
    y = ScalarField.constant(rod.grid, 0.0)
    stepper = ImplicitEuler(rod.op, 1e-4)
    for _ in range(5):
        y, u = step_linear(y, rod_gains, rod.basis, rod.op, 1e-4, stepper)
    assert np.all(y.values == 0) and np.all(u == 0)


def test_open_loop_dissipative_for_nonnegative_potential():
    p = examples.heat_rod(-2.0, 80, rho=60.0)  # a = 2 >= 0
    y = examples.initial_field(p, "random", seed=3)
    norms = [y.norm()]
    stepper = ImplicitEuler(p.op, 1e-3)
    for _ in range(50):
        y, _ = step_linear(y, None, p.basis, p.op, 1e-3, stepper)
        norms.append(y.norm())
    assert np.all(np.diff(norms) <= 1e-15)


def test_open_loop_example1_grows(rod):
    tr = simulate(rod.plant(None), examples.initial_field(rod), 0.2, 1e-4, 100)
    assert tr.norms[-1] > 10 * tr.norms[0]


def test_open_loop_flagged_divergent(rod):
    tr = simulate(rod.plant(None), examples.initial_field(rod), 2.0, 1e-4, 500)
    assert tr.diverged and tr.growth > 1e8
    assert fit_decay_rate(tr, min_samples=2).mu_hat == -np.inf


def test_single_sample_for_zero_horizon(rod, rod_gains):
    tr = simulate(rod.plant(rod_gains), examples.initial_field(rod), 0.0, 1e-4)
    assert tr.times.tolist() == [0.0] and tr.modes.shape == (1, 3)


def test_closed_loop_example1_decays(rod, rod_gains):
    tr = simulate(rod.plant(rod_gains), examples.initial_field(rod, "random", seed=1), 0.4, 1e-4, 20)
    assert not tr.diverged
    rep = fit_decay_rate(tr, floor=1e-10)
    assert rep.mu_hat > 0 and monotone_tail(tr)
    # unstable modal energy decays at least at 80% of min(2 gamma_1, 2 rho)
    energy = np.sqrt((tr.modes**2).sum(axis=1))
    modal = fit_decay_rate(Trajectory(tr.times, energy, tr.modes, tr.u, tr.dt), floor=1e-10)
    g1 = rod_gains.params.gammas[0]
    assert modal.mu_hat >= 0.8 * min(2 * g1, 2 * rod.basis.rho)


def test_recorded_feedback_matches_gain(rod, rod_gains):
    tr = simulate(rod.plant(rod_gains), examples.initial_field(rod), 1e-3, 1e-4, 1)
    # the state stored at step n carries the boundary value used to reach it
    for n in range(1, tr.times.size):
        assert tr.u[n, 0] == pytest.approx(tr.modes[n - 1] @ rod_gains.G[:, 0], rel=1e-12)


def test_equilibrium_is_fixed_point():
    p = examples.fhn(0.25, 1.0, 100, rho=30.0)
    gs = build_gains(p.basis, p.parameters(margin=5.0))
    tr = simulate(p.plant(gs), p.p_e, 0.05, 1e-4, 50)
    assert np.all(tr.norms <= 1e-12)
    pe, stepper = p.p_e, ImplicitEuler(p.op_diffusion, 1e-4)
    q, u = step_nonlinear(pe, gs, p.basis, p.reaction, pe, p.op_diffusion, 1e-4, stepper)
    assert np.abs(q.values - 0.25).max() <= 1e-12 and u[0] == 0.25


def test_fhn_small_perturbation_decays():
    p = examples.fhn(0.25, 1.0, 100, rho=30.0)
    gs = build_gains(p.basis, p.parameters(margin=5.0))
    tr = simulate(p.plant(gs), examples.initial_field(p, amplitude=1e-2), 0.3, 1e-4, 10)
    assert not tr.diverged and fit_decay_rate(tr, floor=1e-9).mu_hat > 0


def test_blow_up_reported_not_raised():
    p = examples.fhn(0.25, 1.0, 100, rho=100.0)
    gs = build_gains(p.basis, p.parameters(margin=5.0))
    tr = simulate(p.plant(gs), examples.initial_field(p, amplitude=10.0), 0.3, 1e-4, 10)
    assert tr.diverged and classify(tr) == "diverged"


def test_nonlinear_plant_requires_diffusion_operator(rod):
    plant = Plant(rod.op, rod.basis, None, reaction=lambda x, p: p)
    with pytest.raises(ConfigError):
        simulate(plant, examples.initial_field(rod), 0.01, 1e-3)
    with pytest.raises(ConfigError):
        rod.plant(None, nonlinear=True)


def test_simulate_guards(rod):
    with pytest.raises(ConfigError):
        simulate(rod.plant(None), examples.initial_field(rod), -1.0, 1e-3)
    with pytest.raises(ConfigError):
        ImplicitEuler(rod.op, 0.0)


def test_two_dimensional_catalog_without_constant_family_leaves_growth(square):
    """The twelve-mode list misses the unstable k1 = 0 family; the loop cannot settle."""
    gs = build_gains(square.basis, square.parameters("perturbed", margin=1.0))
    tr = simulate(square.plant(gs), examples.initial_field(square), 1.0, 1e-3, 10)
    assert fit_decay_rate(tr).mu_hat < 0


@pytest.mark.slow
def test_two_dimensional_closed_loop_decays():
    p = examples.heat_2d(17.0, 40, rho=1.0, include_k1_zero=True)
    assert p.N == 16
    gs = build_gains(p.basis, p.parameters("perturbed", margin=9.0))
    tr = simulate(p.plant(gs), examples.initial_field(p), 6.0, 1e-3, 50)
    assert not tr.diverged
    rep = fit_decay_rate(tr)
    assert rep.mu_hat > 2 * p.basis.rho and monotone_tail(tr)


def test_initial_field_profiles(rod):
    for kind in ("bump", "random", "mode1"):
        f = examples.initial_field(rod, kind, amplitude=2.0, seed=1)
        assert f.values[-1] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ConfigError):
        examples.initial_field(rod, "square")
