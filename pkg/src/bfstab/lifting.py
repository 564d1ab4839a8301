"""The lifting (Dirichlet) operator ``D_gamma``.

``D_gamma alpha`` solves the nonlocal elliptic problem::

    -Δy + a y - sum_k (2 lambda_k + s_k) <y, phi_k> phi_k + gamma y = 0,   y = alpha on Γ₁

with homogeneous Neumann data on Γ₂. The sum over the first ``N`` modes is a
rank-N perturbation of a sparse (tridiagonal in 1D) matrix, handled by a
Woodbury-type update around one factorization of ``L + gamma I``.

Testing against ``phi_i`` gives the moment identity::

    <D_gamma alpha, phi_i> = -<alpha, dphi_i/dnu>_Γ₁ / (gamma - s_i - lambda_i)
"""

from dataclasses import dataclass

import mpmath as mp
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._kernels import TridiagonalLU
from .errors import ConfigError, ResonanceError
from .mesh import ScalarField, inner_product_boundary
from .spectral import DiscreteOperator, SpectralBasis

RESONANCE_COND = 1e12


@dataclass(frozen=True, eq=False)
class LiftedSolution:
    """Solution of the lifted problem and its first ``N`` modal moments."""

    field: ScalarField
    alpha: np.ndarray
    gamma: float
    delta: float
    shifts: np.ndarray
    moments: np.ndarray
    residual: float


def _shift_vector(N, delta, shifts):
    if shifts is not None:
        s = np.asarray(shifts, dtype=float)
        if s.shape != (N,):
            raise ConfigError(f"expected {N} shifts, got shape {s.shape}")
        return s
    s = np.zeros(N)
    if N and delta:
        s[0] = delta
    return s


class _ShiftedSolver:
    """Factorization of ``L + gamma I`` on the unknown nodes."""

    def __init__(self, op: DiscreteOperator, gamma):
        self.op = op
        if op.grid.ndim == 1:
            sub, diag, sup = op.tridiagonal()
            self._lu = TridiagonalLU(sub, diag + gamma, sup)
            if self._lu.singular or self._lu.rcond_estimate < 1.0 / RESONANCE_COND:
                raise ResonanceError(f"L + gamma I is singular at gamma={gamma}; increase gamma")
            self.solve = self._lu.solve
        else:
            K = sp.csc_matrix(op.L + gamma * sp.identity(op.size))
            try:
                lu = spla.splu(K)
            except RuntimeError as exc:
                raise ResonanceError(f"L + gamma I is singular at gamma={gamma}; increase gamma") from exc
            self.solve = lu.solve


def solve_lifted_bvp(
    alpha,
    gamma,
    basis: SpectralBasis,
    op: DiscreteOperator,
    N=None,
    delta=0.0,
    shifts=None,
) -> LiftedSolution:
    """Apply ``D_gamma`` to boundary data ``alpha``.

    Parameters
    ----------
    alpha : array_like or float
        Values on the Γ₁ nodes; a scalar is broadcast.
    gamma : float
    basis : SpectralBasis
        Supplies ``lambda_k`` and ``phi_k`` for the nonlocal term.
    op : DiscreteOperator
        Discretization of ``-Δ + a`` with the same partition as ``basis``.
    N : int, optional
        Number of modes in the nonlocal term; defaults to ``basis.N``.
    delta : float
        Shift of the first mode (perturbed construction).
    shifts : array_like, optional
        Full shift vector; overrides ``delta``.

    Raises
    ------
    ResonanceError
        If the shifted operator or the small capacitance system is singular
        to working accuracy.
    """
    N = basis.N if N is None else int(N)
    if N is None or N > basis.M:
        raise ConfigError("N must be set and not exceed the basis size")
    part = op.part
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (part.n_control,)).copy()
    s = _shift_vector(N, delta, shifts)
    lam = basis.lambdas[:N]

    U = np.column_stack([op.restrict(p.phi.values) for p in basis.pairs[:N]]) if N else np.zeros((op.size, 0))
    V = op.weights[:, None] * U
    C = 2.0 * lam + s

    solver = _ShiftedSolver(op, gamma)
    b = -(op.E @ alpha)
    x0 = solver.solve(b)
    if N:
        X = solver.solve(U)
        X = X.reshape(op.size, N)
        cap = np.eye(N) - C[:, None] * (V.T @ X)
        if np.linalg.cond(cap) > RESONANCE_COND:
            raise ResonanceError(f"gamma={gamma} is resonant with the shifted spectrum; increase gamma")
        z = np.linalg.solve(cap, C * (V.T @ x0))
        y = x0 + X @ z
    else:
        y = x0

    # residual of the discrete nonlocal equation
    Ky = op.L @ y + gamma * y - U @ (C * (V.T @ y))
    scale = max(np.linalg.norm(op.E @ alpha), np.finfo(float).tiny)
    res = float(np.linalg.norm(Ky - b) / scale) if np.any(alpha) else float(np.linalg.norm(Ky - b))

    field = ScalarField(op.grid, op.embed(y, alpha))
    moments = basis.project(field, N)
    return LiftedSolution(field, alpha, float(gamma), float(delta), s, moments, res)


def moment_relation_residual(sol: LiftedSolution, basis: SpectralBasis, N=None) -> np.ndarray:
    """``<D alpha, phi_i> + <alpha, dphi_i/dnu> / (gamma - s_i - lambda_i)`` for each mode."""
    N = sol.moments.size if N is None else int(N)
    lam = basis.lambdas[:N]
    part = basis.part
    pred = np.array(
        [inner_product_boundary(sol.alpha, basis.pairs[i].normal_trace, part) for i in range(N)]
    ) / (sol.gamma - sol.shifts[:N] - lam)
    return sol.moments[:N] + pred


@dataclass(frozen=True)
class NormScan:
    """L² norms of ``D_gamma alpha`` over a gamma sweep and the log-log slope."""

    gammas: np.ndarray
    norms: np.ndarray
    slope: float
    monotone: bool


def lifting_norm_scan(alpha, gammas, basis, op, N=None, delta=0.0, shifts=None) -> NormScan:
    """Norm of the lifted field for an increasing sequence of gammas.

    Requires at least three values so a trend can be fitted. ``slope`` is the
    least-squares slope of ``log||D alpha||`` against ``log gamma`` (NaN when
    ``alpha`` vanishes).
    """
    g = np.asarray(gammas, dtype=float)
    if g.size < 3:
        raise ConfigError("a norm scan needs at least three gamma values")
    if np.any(np.diff(g) <= 0):
        raise ConfigError("gammas must be increasing")
    norms = np.array(
        [solve_lifted_bvp(alpha, gi, basis, op, N, delta, shifts).field.norm() for gi in g]
    )
    if np.all(norms > 0):
        slope = float(np.polyfit(np.log(g), np.log(norms), 1)[0])
    else:
        slope = float("nan")
    monotone = bool(np.all(np.diff(norms) <= 0))
    return NormScan(g, norms, slope, monotone)


def representation_residual(gains, basis, op, coeffs) -> float:
    """Check that lifting the k-th feedback component reproduces ``-B_k A c``.

    For each ``k`` the boundary datum ``v_k = sum_i (A c)_i w_ki tr_i`` is
    lifted with ``gamma_k``; its moments are compared with ``-B_k A c``.
    Returns the largest relative deviation over ``k``.
    """
    c = np.asarray(coeffs, dtype=float)
    N = gains.N
    alg = gains._mp
    with mp.workdps(gains.dps):
        Ac_mp = alg.A * mp.matrix(c.tolist())
        Ac = np.array([float(v) for v in Ac_mp])
        worst = 0.0
        for k, gk in enumerate(gains.params.gammas):
            vk = (Ac * gains.T[k]) @ gains.traces
            sol = solve_lifted_bvp(vk, gk, basis, op, N, shifts=gains.params.shifts)
            target = -np.array([float(v) for v in alg.Bk[k] * Ac_mp])
            dev = np.abs(sol.moments - target).max() / max(np.abs(target).max(), np.finfo(float).tiny)
            worst = max(worst, dev)
    return float(worst)
