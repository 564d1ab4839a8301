"""Ready-made problems: the heated rod, FitzHugh-Nagumo and the 2D heat square.

Each factory returns a :class:`Problem` bundling grid, operators, basis with
its instability split, and the equilibrium, so callers only choose gains.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .closedloop import Plant
from .errors import ConfigError, SpectrumError
from .gains import GainParameters, GainSet, build_gains, choose_parameters
from .mesh import ScalarField, build_grid_1d, build_grid_2d, partition_1d, partition_2d
from .spectral import (
    DiscreteOperator,
    SpectralBasis,
    analytic_basis,
    assemble_operator,
    count_unstable,
    solve_eigenpairs,
)


@dataclass(eq=False)
class Problem:
    """A plant linearized about ``p_e``, with its spectral data.

    Attributes
    ----------
    name : str
    op : DiscreteOperator
        ``-Δ + a`` with ``a = f_p(x, p_e)``.
    basis : SpectralBasis
        Carries ``rho`` and ``N``.
    reaction : callable or None
        ``f(x..., p)`` of the nonlinear equation.
    p_e : ScalarField
    op_diffusion : DiscreteOperator or None
    """

    name: str
    op: DiscreteOperator
    basis: SpectralBasis
    reaction: Callable | None = None
    p_e: ScalarField | None = None
    op_diffusion: DiscreteOperator | None = None

    @property
    def grid(self):
        return self.op.grid

    @property
    def N(self) -> int:
        return self.basis.N

    def parameters(self, mode="simple", margin=1.0, gamma1=None) -> GainParameters:
        return choose_parameters(self.basis, self.basis.rho, mode, margin, gamma1)

    def gains(self, params: GainParameters, **kw) -> GainSet:
        return build_gains(self.basis, params, **kw)

    def plant(self, gains: GainSet | None, nonlinear=None) -> Plant:
        """Closed loop (or open loop with ``gains=None``)."""
        nonlinear = self.reaction is not None if nonlinear is None else nonlinear
        if nonlinear and self.reaction is None:
            raise ConfigError(f"{self.name} has no nonlinear reaction")
        if not nonlinear:
            return Plant(self.op, self.basis, gains)
        return Plant(self.op, self.basis, gains, self.reaction, self.p_e, self.op_diffusion)


def _split(basis_fn, rho, N=None, M0=8, M_max=4096):
    """Grow the basis until the threshold falls inside it.

    With ``N`` given, ``rho`` is placed halfway between ``lambda_N`` and
    ``lambda_{N+1}``.
    """
    M = max(M0, (N or 0) + 2)
    while True:
        basis = basis_fn(M)
        if N is not None:
            if basis.M <= N:
                raise SpectrumError(f"cannot resolve {N} modes")
            lam = basis.lambdas
            if lam[N] - lam[N - 1] <= 0:
                raise ConfigError(f"lambda_{N} and lambda_{N + 1} coincide; choose another N")
            rho = 0.5 * (lam[N - 1] + lam[N])
        try:
            count_unstable(basis, rho)
            return basis.with_threshold(rho)
        except SpectrumError:
            if M >= M_max:
                raise
            M *= 2


def heat_rod(lam_bar=30.0, n=200, length=1.0, rho=40.0, N=None, basis="numeric", trace_stencil="three_point") -> Problem:
    """``y_t = y_xx + lam_bar y`` on ``(0, L)``, insulated at 0, controlled at ``L``."""
    grid = build_grid_1d(length, n)
    part = partition_1d(grid, "neumann", "dirichlet")
    op = assemble_operator(grid, -float(lam_bar), part)
    if basis == "numeric":
        fn = lambda M: solve_eigenpairs(op, min(M, op.size), trace_stencil)
    elif basis == "analytic":
        fn = lambda M: analytic_basis("heat_rod", M, grid, lam_bar=float(lam_bar))
    else:
        raise ConfigError(f"unknown basis kind {basis!r}")
    b = _split(fn, rho, N)
    return Problem("heat_rod", op, b, p_e=ScalarField.constant(grid, 0.0))


def fhn_reaction(a):
    """``f(x, p) = p (p - 1)(p - a)``."""

    def f(x, p):
        return p * (p - 1.0) * (p - a)

    return f


def fhn(a=0.25, l=1.0, n=200, rho=100.0, N=None, basis="numeric", trace_stencil="three_point") -> Problem:
    """FitzHugh-Nagumo ``p_t = p_xx - p(p-1)(p-a)`` around ``p_e = a``, controlled at 0."""
    if not 0 < a < 0.5:
        raise ConfigError("the FitzHugh-Nagumo threshold must satisfy 0 < a < 1/2")
    grid = build_grid_1d(l, n)
    part = partition_1d(grid, "dirichlet", "neumann")
    op = assemble_operator(grid, a * (a - 1.0), part)
    op_diff = assemble_operator(grid, 0.0, part)
    if basis == "numeric":
        fn = lambda M: solve_eigenpairs(op, min(M, op.size), trace_stencil)
    elif basis == "analytic":
        fn = lambda M: analytic_basis("fhn", M, grid, a=float(a))
    else:
        raise ConfigError(f"unknown basis kind {basis!r}")
    b = _split(fn, rho, N)
    return Problem("fhn", op, b, fhn_reaction(a), ScalarField.constant(grid, a), op_diff)


def heat_2d(mu=17.0, n=40, rho=1.0, N=None, include_k1_zero=False, basis="analytic") -> Problem:
    """``y_t = Δy + mu y`` on ``(0, pi)^2``, controlled on ``x2 = 0``."""
    if basis != "analytic":
        raise ConfigError("the 2D example only has an analytic basis")
    grid = build_grid_2d(n)
    part = partition_2d(grid, "bottom")
    op = assemble_operator(grid, -float(mu), part)
    fn = lambda M: analytic_basis("heat_2d", M, grid, mu=float(mu), include_k1_zero=include_k1_zero)
    b = _split(fn, rho, N)
    return Problem("heat_2d", op, b, p_e=ScalarField.constant(grid, 0.0))


FACTORIES = {"heat_rod": heat_rod, "fhn": fhn, "heat_2d": heat_2d}


def initial_field(problem: Problem, kind="bump", amplitude=1.0, seed=0) -> ScalarField:
    """Initial state ``p_e + amplitude * shape``.

    ``bump`` is a smooth profile vanishing on Γ₁; ``random`` is a seeded
    combination of the first eight modes with ``1/j^2`` decay; ``mode1`` is
    the first eigenfunction.
    """
    grid = problem.grid
    basis = problem.basis
    if kind == "bump":
        if grid.ndim == 1:
            x = grid.points / grid.length
            if problem.op.part.sides["left"] == "dirichlet":
                shape = np.sin(0.5 * np.pi * x)
            else:
                shape = np.cos(0.5 * np.pi * x)
        else:
            X1, X2 = grid.points
            shape = (1.0 + 0.5 * np.cos(X1)) * np.sin(0.5 * X2)
    elif kind == "random":
        rng = np.random.default_rng(seed)
        m = min(8, basis.M)
        r = rng.standard_normal(m) / np.arange(1, m + 1) ** 2
        shape = np.tensordot(r, basis.phis[:m], axes=1)
    elif kind == "mode1":
        shape = basis.phis[0]
    else:
        raise ConfigError(f"unknown initial profile {kind!r}")
    base = problem.p_e.values if problem.p_e is not None else 0.0
    return ScalarField(grid, base + amplitude * shape)
