"""Acceptance checks, one per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
(visible with ``pytest -s`` or in the ``-v`` log) and then asserts.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from bfstab import build_gains, examples
from bfstab.closedloop import fit_decay_rate, monotone_tail, simulate, simulate_reduced
from bfstab.lifting import moment_relation_residual, solve_lifted_bvp
from bfstab.verify import suite_cauchy, suite_scaling

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def report(capsys):
    def _report(num, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  criterion {num} {title}: {detail}")
        assert ok, detail

    return _report


def test_1_cauchy_determinant_oracle(report):
    t0 = time.perf_counter()
    res = suite_cauchy(np.random.default_rng(2024), 1000, rtol=1e-10)
    dt = time.perf_counter() - t0
    ok = res.passed and dt < 5.0
    report(1, "Cauchy determinant", ok, f"{res.draws} draws, {res.failures} mismatches, {dt:.2f} s")


def test_2_sum_of_bk_invertible_example1(report, rod, rod_gains):
    gs = rod_gains
    rank = np.linalg.matrix_rank(gs.B, tol=1e-10 * np.abs(gs.B).max())
    ok = gs.N == 3 and rank == 1 and gs.min_eig > 0 and gs.identity_residual <= 1e-10
    report(
        2,
        "sum B_k invertible (lam_bar = 30, N = 3)",
        ok,
        f"rank B = {rank}, min eig = {gs.min_eig:.3e}, |A sum B_k - I| = {gs.identity_residual:.1e}, cond = {gs.cond:.2e}",
    )


def test_3_moment_identity_second_order(report):
    t0 = time.perf_counter()
    res = []
    for n in (99, 199, 399):
        p = examples.heat_rod(30.0, n, rho=40.0)
        sol = solve_lifted_bvp(1.0, 2 * p.basis.rho, p.basis, p.op)
        res.append(np.abs(moment_relation_residual(sol, p.basis)).max())
    ratios = np.array(res[:-1]) / np.array(res[1:])
    dt = time.perf_counter() - t0
    ok = bool(np.all((ratios >= 3.4) & (ratios <= 4.6))) and dt < 10.0
    report(3, "moment identity O(h^2)", ok, f"residuals {np.array2string(np.array(res), precision=3)}, "
           f"ratios {np.array2string(ratios, precision=3)}, {dt:.2f} s")


def test_4_reduced_decay_example1(report, rod_gains):
    gs = rod_gains
    g1 = gs.params.gammas[0]
    rng = np.random.default_rng(4)
    worst, rates = -np.inf, []
    for _ in range(10):
        tr = simulate_reduced(rng.standard_normal(3), gs, 0.5, 1e-3, 5)
        bound = np.exp(-g1 * tr.times) * tr.norms[0]
        worst = max(worst, float(np.max((tr.norms - bound) / tr.norms[0])))
        rates.append(fit_decay_rate(tr).mu_hat)
    ok = worst <= 1e-9 and min(rates) >= 2 * g1 * 0.99
    report(4, "reduced decay", ok, f"max (|Q| - bound)/|Q0| = {worst:.2e}, min fitted rate {min(rates):.3f} "
           f"vs 2 gamma_1 * 0.99 = {2 * g1 * 0.99:.2f}")


def test_5_perturbed_construction_example3(report, square):
    params = square.parameters("perturbed", margin=1.0)
    gs = build_gains(square.basis, params)
    g1, delta = params.gammas[0], params.delta
    # ||A|| / lambda_min(A) is the condition number of A (and of sum B_k)
    target = 2 * g1 - delta * gs.cond
    tr = simulate_reduced(np.random.default_rng(5).standard_normal(gs.N), gs, 5.0, 1e-2, 1)
    rate = fit_decay_rate(tr).mu_hat
    ok = gs.min_eig > 0 and rate >= target - 0.05 * abs(target)
    report(5, "perturbed construction (mu = 17, N = 12)", ok,
           f"min eig = {gs.min_eig:.2e}, cond = {gs.cond:.2e}, fitted rate {rate:.3f}, target {target:.3e}, "
           f"spectral abscissa of generator {np.linalg.eigvals(gs.M_Q).real.max():.3f}")


def test_6_closed_loop_linear_pde(report, rod, rod_gains):
    t0 = time.perf_counter()
    y0 = examples.initial_field(rod)
    open_tr = simulate(rod.plant(None), y0, 1.0, 1e-4, 100)
    ratio = open_tr.growth
    rates, tails = [], []
    for dt in (1e-4, 5e-5):
        tr = simulate(rod.plant(rod_gains), y0, 1.0, dt, int(round(1e-2 / dt)))
        rates.append(fit_decay_rate(tr, floor=1e-10).mu_hat)
        tails.append(monotone_tail(tr))
    change = abs(rates[1] - rates[0]) / abs(rates[0])
    elapsed = time.perf_counter() - t0
    ok = ratio > 1e3 and rates[0] > 0 and tails[0] and change < 0.05 and elapsed < 60
    report(6, "closed-loop linear PDE", ok, f"open-loop growth {ratio:.2e}, mu_hat {rates[0]:.3f} (dt/2: {rates[1]:.3f}, "
           f"change {100 * change:.2f}%), monotone tail {tails[0]}, {elapsed:.1f} s")


def test_7_fhn_local_stabilization(report):
    t0 = time.perf_counter()
    p = examples.fhn(0.25, 1.0, 200, rho=100.0)
    gs = build_gains(p.basis, p.parameters(margin=5.0))
    small = simulate(p.plant(gs), examples.initial_field(p, amplitude=1e-2), 0.3, 1e-4, 10)
    mu_small = fit_decay_rate(small, floor=1e-9).mu_hat
    large = simulate(p.plant(gs), examples.initial_field(p, amplitude=10.0), 0.3, 1e-4, 10)
    flagged = large.diverged or fit_decay_rate(large, floor=1e-9).mu_hat <= 0
    elapsed = time.perf_counter() - t0
    ok = (not small.diverged) and mu_small > 0 and flagged and elapsed < 60
    report(7, "FitzHugh-Nagumo local stabilization", ok,
           f"amplitude 1e-2: mu_hat {mu_small:.2f}; amplitude 10: diverged={large.diverged} "
           f"(stopped at t={large.times[-1]:.4f}, explicit reaction step unstable at this amplitude); "
           f"N={p.N}, {elapsed:.1f} s")


def test_8_scaling_invariance(report):
    res = suite_scaling(np.random.default_rng(8), 100, rtol=1e-9)
    report(8, "feedback scaling invariance", res.passed, f"{res.draws} rescalings, {res.failures} failures")


def test_9_cli_determinism(report, tmp_path):
    blobs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        cmd = [sys.executable, "-m", "bfstab", "simulate", "--config", str(ROOT / "configs" / "heat_rod.cfg"),
               "--seed", "7", "--set", "initial=random", "--set", "T_end=0.2", "--out", str(out)]
        subprocess.run(cmd, check=True, capture_output=True)
        blobs.append((out / "trajectory.csv").read_bytes())
    ok = blobs[0] == blobs[1] and len(blobs[0]) > 0
    report(9, "deterministic CSV", ok, f"{len(blobs[0])} bytes, identical={blobs[0] == blobs[1]}")
