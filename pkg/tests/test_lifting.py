import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bfstab import examples
from bfstab.errors import ConfigError, ResonanceError
from bfstab.lifting import (
    lifting_norm_scan,
    moment_relation_residual,
    representation_residual,
    solve_lifted_bvp,
)
from bfstab.gains import build_gains


def test_zero_data_gives_zero_field(rod):
    sol = solve_lifted_bvp(0.0, 80.0, rod.basis, rod.op)
    assert np.all(sol.field.values == 0)
    assert np.all(moment_relation_residual(sol, rod.basis) == 0)


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(45, 1e4))
def test_linearity(a, b, gamma):
    p = _small_rod()
    A = solve_lifted_bvp(a, gamma, p.basis, p.op).field.values
    B = solve_lifted_bvp(b, gamma, p.basis, p.op).field.values
    AB = solve_lifted_bvp(a + b, gamma, p.basis, p.op).field.values
    scale = max(abs(a) + abs(b), 1.0)
    assert np.abs(AB - A - B).max() <= 1e-10 * scale


_cache = {}


def _small_rod():
    if "p" not in _cache:
        _cache["p"] = examples.heat_rod(30.0, 60, rho=40.0)
    return _cache["p"]


def test_boundary_data_imposed_and_residual_small(rod):
    sol = solve_lifted_bvp(1.0, 80.0, rod.basis, rod.op)
    assert sol.field.values[-1] == 1.0
    assert sol.residual <= 1e-10


@pytest.mark.parametrize("basis", ["numeric", "analytic"])
def test_moment_identity_second_order(basis):
    res = []
    for n in (99, 199, 399):
        p = examples.heat_rod(30.0, n, rho=40.0, basis=basis)
        sol = solve_lifted_bvp(1.0, 80.0, p.basis, p.op)
        res.append(np.abs(moment_relation_residual(sol, p.basis)).max())
    ratios = np.array(res[:-1]) / np.array(res[1:])
    assert np.all((ratios > 3.4) & (ratios < 4.6))


def test_moment_identity_exact_with_adjacent_trace():
    p = examples.heat_rod(30.0, 100, rho=40.0, trace_stencil="adjacent")
    for gamma in (41.0, 80.0, 500.0):
        sol = solve_lifted_bvp(-2.0, gamma, p.basis, p.op)
        assert np.abs(moment_relation_residual(sol, p.basis)).max() < 1e-10


def test_moment_identity_perturbed_denominators():
    p = examples.heat_rod(30.0, 100, rho=40.0, trace_stencil="adjacent")
    delta = 0.3
    sol = solve_lifted_bvp(1.0, 60.0, p.basis, p.op, delta=delta)
    assert np.all(sol.shifts == [delta, 0.0, 0.0])
    assert np.abs(moment_relation_residual(sol, p.basis)).max() < 1e-10
    # with unshifted denominators only the first mode is off, by tr*delta/(gamma-lambda)^2
    lam, tr = p.basis.lambdas[:3], p.basis.traces[:3, 0]
    naive = sol.moments + tr / (60.0 - lam)
    assert naive[0] == pytest.approx(-tr[0] * delta / ((60.0 - lam[0]) * (60.0 - delta - lam[0])), rel=1e-6)
    assert np.all(np.abs(naive[1:]) < 1e-10)


def test_moment_identity_two_dimensional():
    res = []
    for n in (20, 40, 80):
        p = examples.heat_2d(17.0, n, rho=1.0)
        alpha = np.cos(p.grid.x1.points) + 0.5
        sol = solve_lifted_bvp(alpha, 10.0, p.basis, p.op)
        res.append(np.abs(moment_relation_residual(sol, p.basis)).max())
    ratios = np.array(res[:-1]) / np.array(res[1:])
    assert np.all((ratios > 3.4) & (ratios < 4.6))


def test_representation_matches_gain_identity(rod):
    """Lifting the k-th feedback component gives moments -B_k A c."""
    p = examples.heat_rod(30.0, 200, rho=40.0, trace_stencil="adjacent")
    gs = build_gains(p.basis, p.parameters(margin=5.0))
    assert representation_residual(gs, p.basis, p.op, [1.0, -0.5, 0.25]) <= 1e-8


def test_norm_scan_decreasing():
    p = examples.heat_rod(1.0, 200, rho=3.0)
    scan = lifting_norm_scan(1.0, [10, 20, 40, 80], p.basis, p.op)
    assert scan.monotone
    assert scan.slope < 0


def test_norm_scan_large_gamma(rod):
    scan = lifting_norm_scan(1.0, [80, 160, 320, 640], rod.basis, rod.op)
    assert scan.monotone and -1.0 < scan.slope < -0.2


def test_norm_scan_guards(rod):
    with pytest.raises(ConfigError):
        lifting_norm_scan(1.0, [80.0], rod.basis, rod.op)
    with pytest.raises(ConfigError):
        lifting_norm_scan(1.0, [80.0, 40.0, 160.0], rod.basis, rod.op)
    zero = lifting_norm_scan(0.0, [80.0, 160.0, 320.0], rod.basis, rod.op)
    assert np.all(zero.norms == 0) and np.isnan(zero.slope)


def test_resonant_gamma_reported(rod):
    # -lambda_2 is an eigenvalue of L + gamma I with the shifted rows removed
    with pytest.raises(ResonanceError, match="increase gamma"):
        solve_lifted_bvp(1.0, -rod.basis.lambdas[1], rod.basis, rod.op)


def test_shift_vector_shape_checked(rod):
    with pytest.raises(ConfigError):
        solve_lifted_bvp(1.0, 80.0, rod.basis, rod.op, shifts=[0.1])
