"""Eigenpairs of ``-Δy + a(x) y`` with Dirichlet data on Γ₁ and Neumann on Γ₂.

The discrete operator acts on the unknown nodes (all nodes off Γ₁). With
boundary values ``alpha`` on Γ₁ the full stencil reads::

    (A_h y)_u = L @ y_u + E @ alpha

``L`` is not symmetric because of the mirrored ghost node at Neumann ends,
but it is self-adjoint for the trapezoid weights ``W``; the symmetric matrix
handed to eigensolvers is ``W^{1/2} L W^{-1/2}``.
"""

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ._kernels import TridiagonalLU, smallest_eigenvalues
from .errors import ConfigError, ConvergenceError, SpectrumError
from .mesh import (
    DIRICHLET,
    BoundaryPartition,
    Grid1D,
    Grid2D,
    ScalarField,
    partition_1d,
    partition_2d,
)

TRACE_STENCILS = ("three_point", "adjacent")


def _axis_operator(axis: Grid1D, left, right):
    """Second-difference matrix of one axis, restricted to its unknown nodes.

    Returns ``(D, unknown, coupling)`` where ``coupling`` maps Dirichlet end
    values (in left, right order) into the unknown rows.
    """
    n = axis.n_interior + 2
    h2 = axis.h**2
    unknown = np.arange(n)
    if left == DIRICHLET:
        unknown = unknown[1:]
    if right == DIRICHLET:
        unknown = unknown[:-1]
    m = unknown.size
    main = np.full(m, 2.0 / h2)
    lower = np.full(m - 1, -1.0 / h2)
    upper = np.full(m - 1, -1.0 / h2)
    # mirrored ghost node doubles the inward neighbour
    if left != DIRICHLET:
        upper[0] = -2.0 / h2
    if right != DIRICHLET:
        lower[-1] = -2.0 / h2
    D = sp.diags([lower, main, upper], [-1, 0, 1], format="csr")
    cols = []
    if left == DIRICHLET:
        c = np.zeros(m)
        c[0] = -1.0 / h2
        cols.append(c)
    if right == DIRICHLET:
        c = np.zeros(m)
        c[-1] = -1.0 / h2
        cols.append(c)
    coupling = np.column_stack(cols) if cols else np.zeros((m, 0))
    return D, unknown, sp.csr_matrix(coupling)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Finite-difference realization of the operator on one grid.

    Attributes
    ----------
    grid, part, potential
        Geometry and the sampled coefficient ``a``.
    unknown : numpy.ndarray
        Flat indices of the unknown (non-Γ₁) nodes.
    L : scipy.sparse.csr_matrix
        Operator on the unknowns, including ``a``.
    E : scipy.sparse.csr_matrix
        Coupling of Γ₁ values into the unknown rows.
    weights : numpy.ndarray
        Trapezoid weights of the unknowns.
    """

    grid: object
    part: BoundaryPartition
    potential: ScalarField
    unknown: np.ndarray
    L: sp.csr_matrix
    E: sp.csr_matrix
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.unknown.size

    @property
    def matrix(self) -> sp.csr_matrix:
        """Symmetrized operator ``W^{1/2} L W^{-1/2}``."""
        s = np.sqrt(self.weights)
        return sp.csr_matrix(sp.diags(s) @ self.L @ sp.diags(1.0 / s))

    def tridiagonal(self):
        """Bands ``(sub, diag, sup)`` of ``L``; 1D only."""
        if self.grid.ndim != 1:
            raise ValueError("only 1D operators are tridiagonal")
        return self.L.diagonal(-1), self.L.diagonal(0), self.L.diagonal(1)

    def embed(self, y_unknown, boundary=None) -> np.ndarray:
        """Full nodal array from unknown values and Γ₁ values."""
        full = np.zeros(int(np.prod(self.grid.shape)))
        full[self.unknown] = y_unknown
        if boundary is not None:
            full[self.part.control_indices] = boundary
        return full.reshape(self.grid.shape)

    def restrict(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float).reshape(-1)[self.unknown]

    def apply(self, values) -> np.ndarray:
        """``A_h`` applied to a full nodal array; returns unknown-node values."""
        v = np.asarray(values, dtype=float).reshape(-1)
        return self.L @ v[self.unknown] + self.E @ v[self.part.control_indices]


def _check_symmetric(S, rtol=1e-12):
    S = sp.csr_matrix(S)
    scale = max(abs(S).max(), 1.0)
    if abs(S - S.T).max() > rtol * scale:
        raise SpectrumError("assembled operator is not symmetric after weighting")


def assemble_operator(grid, a=0.0, part: BoundaryPartition | None = None) -> DiscreteOperator:
    """Assemble the finite-difference operator.

    Parameters
    ----------
    grid : Grid1D or Grid2D
    a : ScalarField or float
        Potential; a float is taken as a constant.
    part : BoundaryPartition, optional
        Defaults to Neumann left / Dirichlet right (1D) or a controlled bottom
        edge (2D).

    Examples
    --------
    >>> from bfstab.mesh import build_grid_1d, partition_1d
    >>> g = build_grid_1d(1.0, 3)
    >>> op = assemble_operator(g, 0.0, partition_1d(g, "dirichlet", "dirichlet"))
    >>> op.matrix.toarray()[0, :2]
    array([ 32., -16.])
    """
    if part is None:
        part = partition_1d(grid) if grid.ndim == 1 else partition_2d(grid)
    if part.grid != grid:
        raise ConfigError("boundary partition belongs to a different grid")
    if not isinstance(a, ScalarField):
        a = ScalarField.constant(grid, float(a))
    elif a.grid != grid:
        raise ConfigError("potential is sampled on a different grid")
    s = part.sides
    if grid.ndim == 1:
        L, unknown, E = _axis_operator(grid, s["left"], s["right"])
    else:
        D1, u1, E1 = _axis_operator(grid.x1, s["left"], s["right"])
        D2, u2, E2 = _axis_operator(grid.x2, s["bottom"], s["top"])
        I1, I2 = sp.identity(u1.size), sp.identity(u2.size)
        L = sp.kron(D1, I2) + sp.kron(I1, D2)
        n2 = grid.shape[1]
        unknown = (u1[:, None] * n2 + u2[None, :]).ravel()
        # exactly one side couples, and its edge spans the other axis entirely
        E = sp.kron(E1, I2) if E1.shape[1] else sp.kron(I1, E2)
    unknown = np.asarray(unknown)
    L = sp.csr_matrix(L + sp.diags(a.values.reshape(-1)[unknown]))
    weights = grid.weights.reshape(-1)[unknown]
    op = DiscreteOperator(grid, part, a, unknown, L, sp.csr_matrix(E), weights)
    _check_symmetric(op.matrix)
    return op


@dataclass(frozen=True, eq=False)
class EigenPair:
    """One eigenpair with its outward normal derivative on Γ₁.

    ``phi`` is L²-normalized for the trapezoid inner product when produced by
    the solvers here; :meth:`SpectralBasis.rescaled` deliberately breaks that.
    """

    lam: float
    phi: ScalarField
    normal_trace: np.ndarray


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Ordered eigenpairs, optionally split at a threshold ``rho``.

    Attributes
    ----------
    pairs : tuple of EigenPair
    grid, part
    rho : float or None
    N : int or None
        Number of eigenvalues below ``rho``.
    labels : tuple
        Per-mode tags (wave numbers for analytic catalogs, indices otherwise).
    """

    pairs: tuple
    grid: object
    part: BoundaryPartition
    rho: float | None = None
    N: int | None = None
    labels: tuple = ()

    def __post_init__(self):
        lam = self.lambdas
        if lam.size > 1 and np.any(np.diff(lam) < 0):
            raise SpectrumError("eigenvalues must be nondecreasing")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(1, len(self.pairs) + 1)))

    def __len__(self):
        return len(self.pairs)

    @property
    def M(self) -> int:
        return len(self.pairs)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs], dtype=float)

    @property
    def traces(self) -> np.ndarray:
        """Normal traces, shape ``(M, n_control)``."""
        if not self.pairs:
            return np.zeros((0, self.part.n_control))
        return np.array([p.normal_trace for p in self.pairs])

    @property
    def phis(self) -> np.ndarray:
        """Eigenfunction values, shape ``(M, *grid.shape)``."""
        return np.array([p.phi.values for p in self.pairs])

    def project(self, values, n=None) -> np.ndarray:
        """Modal coefficients ``<y, phi_i>`` for the first ``n`` modes."""
        n = self.M if n is None else n
        v = values.values if isinstance(values, ScalarField) else np.asarray(values, dtype=float)
        w = self.grid.weights
        return np.array([np.sum(w * v * p.phi.values) for p in self.pairs[:n]])

    def with_threshold(self, rho):
        return replace(self, rho=float(rho), N=count_unstable(self, rho))

    def rescaled(self, c: Sequence[float]):
        """Basis with mode ``i`` multiplied by ``c[i]``; ``c`` may be shorter than M."""
        pairs = list(self.pairs)
        for i, ci in enumerate(c):
            p = pairs[i]
            pairs[i] = EigenPair(p.lam, ScalarField(self.grid, ci * p.phi.values), ci * p.normal_trace)
        return replace(self, pairs=tuple(pairs))


def _normal_trace(op: DiscreteOperator, phi_full, stencil):
    """Outward normal derivative of a field vanishing on Γ₁.

    ``three_point`` is the one-sided second-order stencil. ``adjacent`` uses
    only the first inward neighbour, which is the trace for which the discrete
    Green identity holds exactly.
    """
    if stencil not in TRACE_STENCILS:
        raise ConfigError(f"unknown trace stencil {stencil!r}")
    grid, part = op.grid, op.part
    out = []
    for side in part.dirichlet_sides:
        if grid.ndim == 1:
            axis, h, f = 0, grid.h, phi_full
        else:
            axis = 0 if side in ("left", "right") else 1
            h = grid.h[axis]
            f = phi_full
        f = np.moveaxis(f, axis, 0)
        if side in ("left", "bottom"):
            f1, f2 = f[1], f[2]
        else:
            f1, f2 = f[-2], f[-3]
        if stencil == "three_point":
            out.append(np.atleast_1d((-4.0 * f1 + f2) / (2.0 * h)))
        else:
            out.append(np.atleast_1d(-f1 / h))
    return np.concatenate(out)


def _inverse_iteration(S_bands, lam, v0, max_sweeps=8, tol=1e-10):
    sub, diag, sup = S_bands
    scale = max(np.abs(diag).max(), np.abs(sub).max(initial=0.0), 1.0)
    # nudge the shift so the factorization is never exactly singular
    shift = lam + 64 * np.finfo(float).eps * scale * (1.0 + 1e-3 * np.sign(lam))
    lu = TridiagonalLU(sub, diag - shift, sup)
    if lu.singular:
        shift += 1e-9 * scale
        lu = TridiagonalLU(sub, diag - shift, sup)
    v = v0 / np.linalg.norm(v0)
    for _ in range(max_sweeps):
        v = lu.solve(v)
        v /= np.linalg.norm(v)
        Sv = diag * v
        Sv[:-1] += sup * v[1:]
        Sv[1:] += sub * v[:-1]
        if np.linalg.norm(Sv - lam * v) <= tol * scale:
            return v
    raise ConvergenceError(f"inverse iteration did not converge for eigenvalue {lam:.6g}")


def solve_eigenpairs(op: DiscreteOperator, M: int, trace_stencil="three_point") -> SpectralBasis:
    """The ``M`` smallest eigenpairs of a 1D operator.

    Eigenvalues come from Sturm-sequence bisection, eigenvectors from inverse
    iteration on the symmetrized tridiagonal matrix followed by Gram-Schmidt,
    so the returned functions are orthonormal for the trapezoid weights. Each
    function is signed so its first nonzero nodal value is positive.

    Raises
    ------
    NotImplementedError
        For 2D operators; use the analytic catalog there.
    ConvergenceError
        If inverse iteration stalls.
    """
    if op.grid.ndim != 1:
        raise NotImplementedError("numeric eigenpairs are provided for 1D operators only")
    M = int(M)
    if M < 0 or M > op.size:
        raise ConfigError(f"M must lie in [0, {op.size}], got {M}")
    S = op.matrix
    bands = (S.diagonal(-1), S.diagonal(0), S.diagonal(1))
    lam = smallest_eigenvalues(bands[1], bands[0], M)
    sw = np.sqrt(op.weights)
    m = op.size
    # deterministic start vector with components in every mode
    v0 = 1.0 + 0.1 * np.sin(np.arange(1, m + 1) * 1.2345)
    vecs = []
    for k in range(M):
        v = _inverse_iteration(bands, lam[k], v0)
        for u in vecs:
            v -= (u @ v) * u
        v /= np.linalg.norm(v)
        vecs.append(v)
    pairs = []
    for k, v in enumerate(vecs):
        phi_u = v / sw
        nz = np.flatnonzero(np.abs(phi_u) > 1e-12 * np.abs(phi_u).max())
        if phi_u[nz[0]] < 0:
            phi_u = -phi_u
        full = op.embed(phi_u, 0.0)
        tr = _normal_trace(op, full, trace_stencil)
        pairs.append(EigenPair(float(lam[k]), ScalarField(op.grid, full), tr))
    return SpectralBasis(tuple(pairs), op.grid, op.part)


def count_unstable(basis: SpectralBasis, rho) -> int:
    """Number of eigenvalues strictly below ``rho``.

    Raises
    ------
    SpectrumError
        When every computed eigenvalue is below ``rho``, since the split point
        may lie beyond the computed part of the spectrum.
    """
    lam = basis.lambdas
    N = int(np.sum(lam < rho))
    if N == lam.size:
        raise SpectrumError(
            f"all {lam.size} computed eigenvalues lie below rho={rho}; compute more modes"
        )
    return N


@dataclass(frozen=True)
class MultiplicityReport:
    """Clusters of (0-based) mode indices with coincident eigenvalues."""

    clusters: tuple
    eps: float

    @property
    def simple_spectrum(self) -> bool:
        return all(len(c) == 1 for c in self.clusters)

    @property
    def repeated(self) -> tuple:
        return tuple(c for c in self.clusters if len(c) > 1)


def detect_multiplicity(basis: SpectralBasis, N=None, eps_mult=None) -> MultiplicityReport:
    """Group the first ``N`` eigenvalues into clusters closer than ``eps_mult``.

    Sorted input makes the transitive closure a single sweep over neighbours.
    The default tolerance is ``1e-8 * max|lambda|``.
    """
    N = (basis.N if basis.N is not None else basis.M) if N is None else int(N)
    lam = basis.lambdas[:N]
    if eps_mult is None:
        eps_mult = 1e-8 * max(np.abs(lam).max(initial=0.0), 1e-300)
    clusters, cur = [], []
    for i in range(N):
        if cur and lam[i] - lam[cur[-1]] > eps_mult:
            clusters.append(tuple(cur))
            cur = []
        cur.append(i)
    if cur:
        clusters.append(tuple(cur))
    return MultiplicityReport(tuple(clusters), float(eps_mult))


# analytic catalogs ---------------------------------------------------------

EXAMPLES = ("heat_rod", "fhn", "heat_2d")


def _rod_catalog(grid, M, lam_bar=0.0):
    L = grid.length
    j = np.arange(1, M + 1)
    k = (2 * j - 1) * np.pi / (2 * L)
    lam = k**2 - lam_bar
    c = np.sqrt(2.0 / L)
    x = grid.points
    phis = [c * np.cos(kj * x) for kj in k]
    traces = [np.array([c * (-1.0) ** jj * kj]) for jj, kj in zip(j, k)]
    return lam, phis, traces, tuple(j)


def _fhn_catalog(grid, M, a=0.25):
    l = grid.length
    j = np.arange(1, M + 1)
    k = (2 * j - 1) * np.pi / (2 * l)
    lam = k**2 - a * (1 - a)
    c = np.sqrt(2.0 / l)
    x = grid.points
    phis = [c * np.sin(kj * x) for kj in k]
    traces = [np.array([-c * kj]) for kj in k]
    return lam, phis, traces, tuple(j)


def _heat2d_catalog(grid, M, mu=0.0, include_k1_zero=False):
    if not np.allclose([grid.x1.length, grid.x2.length], np.pi):
        raise ConfigError("the 2D catalog lives on (0, pi)^2")
    kmax = M + 1
    k1_start = 0 if include_k1_zero else 1
    modes = [
        (k1**2 + ((2 * k2 + 1) / 2) ** 2 - mu, k2, k1)
        for k1 in range(k1_start, k1_start + kmax)
        for k2 in range(kmax)
    ]
    # ties keep the lower x2 wave number first
    modes.sort()
    X1, X2 = grid.points
    x1 = grid.x1.points
    lam, phis, traces, labels = [], [], [], []
    for val, k2, k1 in modes[:M]:
        c = 2.0 / np.pi if k1 else np.sqrt(2.0) / np.pi
        nu = (2 * k2 + 1) / 2
        lam.append(val)
        phis.append(c * np.cos(k1 * X1) * np.sin(nu * X2))
        traces.append(-c * nu * np.cos(k1 * x1))
        labels.append((k1, k2))
    return np.array(lam), phis, traces, tuple(labels)


def analytic_basis(example: str, M: int, grid, **params) -> SpectralBasis:
    """Closed-form eigenpairs of the three worked examples, sampled on ``grid``.

    Parameters
    ----------
    example : {"heat_rod", "fhn", "heat_2d"}
        ``heat_rod`` takes ``lam_bar`` (potential ``-lam_bar``, Neumann at 0,
        control at ``L``); ``fhn`` takes ``a`` (control at 0, Neumann at ``l``);
        ``heat_2d`` takes ``mu`` and ``include_k1_zero`` (control on ``x2 = 0``).
    M : int
        Number of modes, at least 1.

    Notes
    -----
    Traces are exact derivatives of the closed forms. The 2D catalog skips
    the ``k1 = 0`` family by default, matching the twelve-mode list that
    serves as the reference ordering; pass ``include_k1_zero=True`` for the
    complete spectrum.
    """
    if example not in EXAMPLES:
        raise ConfigError(f"unknown example {example!r}; expected one of {EXAMPLES}")
    if int(M) < 1:
        raise ConfigError("analytic catalogs need M >= 1")
    M = int(M)
    if example == "heat_2d":
        if not isinstance(grid, Grid2D):
            raise ConfigError("heat_2d needs a Grid2D")
        lam, phis, traces, labels = _heat2d_catalog(grid, M, **params)
        part = partition_2d(grid, "bottom")
    else:
        if not isinstance(grid, Grid1D):
            raise ConfigError(f"{example} needs a Grid1D")
        if example == "heat_rod":
            lam, phis, traces, labels = _rod_catalog(grid, M, **params)
            part = partition_1d(grid, "neumann", "dirichlet")
        else:
            lam, phis, traces, labels = _fhn_catalog(grid, M, **params)
            part = partition_1d(grid, "dirichlet", "neumann")
    pairs = tuple(
        EigenPair(float(l_), ScalarField(grid, p), np.asarray(t, dtype=float))
        for l_, p, t in zip(lam, phis, traces)
    )
    return SpectralBasis(pairs, grid, part, labels=labels)


def example_partition(example: str, grid) -> BoundaryPartition:
    """Boundary partition used by each worked example."""
    if example == "heat_rod":
        return partition_1d(grid, "neumann", "dirichlet")
    if example == "fhn":
        return partition_1d(grid, "dirichlet", "neumann")
    if example == "heat_2d":
        return partition_2d(grid, "bottom")
    raise ConfigError(f"unknown example {example!r}")
