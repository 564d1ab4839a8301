"""Randomized invariant suites behind ``bfstab verify``.

Every suite draws its inputs from a seeded generator and reports the first
failing draw as a one-line reproduction.
"""

import warnings
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from .closedloop import lyapunov_bound, lyapunov_derivative_check
from .errors import BfstabError
from .gains import (
    GainParameters,
    build_gains,
    cauchy_determinant,
    cauchy_determinant_closed_form,
    feedback_trace,
)
from .lifting import moment_relation_residual, solve_lifted_bvp
from .mesh import ScalarField, build_grid_1d, partition_1d
from .spectral import EigenPair, SpectralBasis, assemble_operator, solve_eigenpairs

SUITES = ("cauchy", "symmetric_psd", "scaling", "moments", "lyapunov")


@dataclass
class SuiteResult:
    name: str
    draws: int
    failures: int = 0
    repro: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def fail(self, line):
        self.failures += 1
        if len(self.repro) < 3:
            self.repro.append(line)


def random_spectrum(rng, N, rho=None):
    """Distinct ``lambda < rho < gamma`` with gaps bounded away from zero."""
    rho = float(rng.uniform(0.0, 10.0)) if rho is None else rho
    lam = rho - np.cumsum(rng.uniform(0.2, 3.0, N))[::-1]
    gam = rho + np.cumsum(rng.uniform(0.2, 3.0, N))
    return lam, gam, rho


def synthetic_basis(lambdas, traces):
    """A 1D basis carrying only eigenvalues and traces (fields are zero).

    Enough for gain algebra, where the functions themselves never enter.
    """
    grid = build_grid_1d(1.0, 3)
    part = partition_1d(grid)
    zero = ScalarField.constant(grid, 0.0)
    pairs = tuple(EigenPair(float(l_), zero, np.array([t], dtype=float)) for l_, t in zip(lambdas, traces))
    return SpectralBasis(pairs, grid, part, N=len(pairs))


def suite_cauchy(rng, draws, rtol=1e-10) -> SuiteResult:
    res = SuiteResult("cauchy", draws)
    for _ in range(draws):
        N = int(rng.integers(2, 9))
        lam, gam, _ = random_spectrum(rng, N)
        det = cauchy_determinant(gam, lam)
        ref = cauchy_determinant_closed_form(gam, lam)
        if det == 0 or abs(det - ref) > rtol * abs(ref):
            res.fail(f"cauchy gammas={gam.tolist()} lambdas={lam.tolist()} det={det!r} oracle={ref!r}")
    return res


def suite_symmetric_psd(rng, draws, fault="none") -> SuiteResult:
    """Gram symmetry, PSD ``B_k``, SPD sum and ``A (sum B_k) = I``."""
    res = SuiteResult("symmetric_psd", draws)
    for _ in range(draws):
        N = int(rng.integers(1, 9))
        lam, gam, rho = random_spectrum(rng, N)
        tr = rng.choice([-1.0, 1.0], N) * rng.uniform(0.5, 5.0, N)
        basis = synthetic_basis(lam, tr)
        try:
            gs = build_gains(basis, GainParameters(rho, tuple(gam)))
        except BfstabError as exc:
            res.fail(f"symmetric_psd lambdas={lam.tolist()} gammas={gam.tolist()} traces={tr.tolist()} error={exc}")
            continue
        B = gs.B.copy()
        if fault == "asymmetric_B" and N > 1:
            B[0, 1] += 1.0
        ok = np.array_equal(B, B.T)
        for Bk in gs.B_k:
            q = rng.standard_normal(N)
            scale = np.abs(Bk).max() * (q @ q)
            ok &= q @ Bk @ q >= -1e-12 * max(scale, 1e-300)
        ok &= gs.min_eig > 0 and gs.identity_residual <= 1e-10
        if not ok:
            res.fail(f"symmetric_psd lambdas={lam.tolist()} gammas={gam.tolist()} traces={tr.tolist()} fault={fault}")
    return res


def suite_scaling(rng, draws, rtol=1e-9) -> SuiteResult:
    """Feedback is invariant under per-mode rescaling of the basis."""
    res = SuiteResult("scaling", draws)
    if draws == 0:
        return res
    grid = build_grid_1d(1.0, 60)
    op = assemble_operator(grid, -30.0)
    basis = solve_eigenpairs(op, 6).with_threshold(40.0)
    N = basis.N
    params = GainParameters(40.0, tuple(45.0 + 5.0 * k for k in range(N)))
    gs = build_gains(basis, params)
    for _ in range(draws):
        y = ScalarField(grid, rng.standard_normal(grid.shape))
        c = rng.uniform(-10.0, 10.0, N)
        c[c == 0] = 1.0
        u0 = feedback_trace(gs, basis.project(y, N))
        sb = basis.rescaled(c)
        u1 = feedback_trace(build_gains(sb, params), sb.project(y, N))
        if np.abs(u1 - u0).max() > rtol * max(np.abs(u0).max(), 1e-300):
            res.fail(f"scaling c={c.tolist()} u0={u0.tolist()} u1={u1.tolist()}")
    return res


def suite_moments(rng, draws, tol=1e-8) -> SuiteResult:
    """Moment identity with the discretely consistent trace holds to roundoff."""
    res = SuiteResult("moments", draws)
    if draws == 0:
        return res
    grid = build_grid_1d(1.0, 60)
    op = assemble_operator(grid, -30.0)
    basis = solve_eigenpairs(op, 6, "adjacent").with_threshold(40.0)
    for _ in range(draws):
        alpha = float(rng.uniform(-5, 5))
        gamma = float(rng.uniform(41.0, 400.0))
        sol = solve_lifted_bvp(alpha, gamma, basis, op)
        r = np.abs(moment_relation_residual(sol, basis)).max()
        if r > tol * max(abs(alpha), 1.0):
            res.fail(f"moments alpha={alpha!r} gamma={gamma!r} residual={r:.3e}")
    return res


def suite_lyapunov(rng, draws) -> SuiteResult:
    """``d/dt 1/2 ||A^{1/2} Z||^2 <= -gamma_1 ||A^{1/2} Z||^2`` for random gains and states."""
    res = SuiteResult("lyapunov", draws)
    for _ in range(draws):
        N = int(rng.integers(1, 7))
        lam, gam, rho = random_spectrum(rng, N)
        tr = rng.choice([-1.0, 1.0], N) * rng.uniform(0.5, 5.0, N)
        gs = build_gains(synthetic_basis(lam, tr), GainParameters(rho, tuple(gam)))
        with mp.workdps(gs.dps):
            # draw in Q coordinates so that A^{1/2} Z is O(1)
            q = rng.standard_normal(N)
            Z = np.array([float(v) for v in gs._mp.A_inv_sqrt * mp.matrix(q.tolist())])
        lhs = lyapunov_derivative_check(Z, gs)
        rhs = lyapunov_bound(Z, gs)
        if lhs > rhs + 1e-10 * max(abs(rhs), 1.0):
            res.fail(f"lyapunov lambdas={lam.tolist()} gammas={gam.tolist()} traces={tr.tolist()} lhs={lhs!r} rhs={rhs!r}")
    return res


def run_suites(seed=0, draws=100, fault="none", suites=SUITES) -> list:
    """Run the named suites with independent child generators of ``seed``."""
    if draws == 0:
        warnings.warn("zero draws requested; every suite passes vacuously", stacklevel=2)
    children = np.random.SeedSequence(seed).spawn(len(SUITES))
    rngs = {name: np.random.default_rng(s) for name, s in zip(SUITES, children)}
    out = []
    for name in suites:
        rng = rngs[name]
        if name == "cauchy":
            out.append(suite_cauchy(rng, draws))
        elif name == "symmetric_psd":
            out.append(suite_symmetric_psd(rng, draws, fault))
        elif name == "scaling":
            out.append(suite_scaling(rng, draws))
        elif name == "moments":
            out.append(suite_moments(rng, draws))
        elif name == "lyapunov":
            out.append(suite_lyapunov(rng, draws))
        else:
            raise ValueError(f"unknown suite {name!r}")
    return out
