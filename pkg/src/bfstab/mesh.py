"""Uniform grids, boundary partitions and trapezoid quadrature.

Fields live on every grid point, boundary points included. In 1D the point
array is ``x_0 = 0, ..., x_{n+1} = L``; in 2D values are stored with shape
``(n1 + 2, n2 + 2)`` and index order ``[i1, i2]``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
SIDES_1D = ("left", "right")
SIDES_2D = ("left", "right", "bottom", "top")


def trapezoid_weights(n_points, h):
    w = np.full(n_points, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True, eq=True)
class Grid1D:
    """Uniform grid on ``(0, length)`` with ``n_interior`` interior nodes."""

    length: float
    n_interior: int

    def __post_init__(self):
        if not np.isfinite(self.length) or self.length <= 0:
            raise ConfigError(f"grid length must be positive, got {self.length}")
        if int(self.n_interior) != self.n_interior or self.n_interior < 3:
            raise ConfigError(f"need at least 3 interior nodes, got {self.n_interior}")
        object.__setattr__(self, "n_interior", int(self.n_interior))

    ndim = 1

    @property
    def h(self) -> float:
        return self.length / (self.n_interior + 1)

    @property
    def shape(self):
        return (self.n_interior + 2,)

    @cached_property
    def points(self) -> np.ndarray:
        """All node coordinates, both endpoints included."""
        return np.arange(self.n_interior + 2) * self.h

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates."""
        return self.points[1:-1]

    @cached_property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.n_interior + 2, self.h)

    def refine(self):
        """Grid with half the spacing."""
        return Grid1D(self.length, 2 * self.n_interior + 1)


@dataclass(frozen=True, eq=True)
class Grid2D:
    """Tensor product grid; ``x1`` runs along the first array axis."""

    x1: Grid1D
    x2: Grid1D

    ndim = 2

    @property
    def shape(self):
        return self.x1.shape + self.x2.shape

    @cached_property
    def points(self):
        """Coordinate arrays ``(X1, X2)`` of shape :attr:`shape`."""
        return tuple(np.meshgrid(self.x1.points, self.x2.points, indexing="ij"))

    @cached_property
    def weights(self) -> np.ndarray:
        return np.outer(self.x1.weights, self.x2.weights)

    @property
    def h(self):
        return (self.x1.h, self.x2.h)

    def refine(self):
        return Grid2D(self.x1.refine(), self.x2.refine())


def build_grid_1d(L, n) -> Grid1D:
    """Uniform grid on ``(0, L)`` with ``n`` interior nodes, ``h = L/(n+1)``.

    Examples
    --------
    >>> build_grid_1d(1.0, 3).nodes
    array([0.25, 0.5 , 0.75])
    """
    return Grid1D(float(L), n)


def build_grid_2d(n1, n2=None, L1=np.pi, L2=np.pi) -> Grid2D:
    return Grid2D(Grid1D(float(L1), n1), Grid1D(float(L2), n1 if n2 is None else n2))


@dataclass(frozen=True)
class BoundaryPartition:
    """Assignment of each side of the domain to Γ₁ (Dirichlet control) or Γ₂.

    Parameters
    ----------
    grid : Grid1D or Grid2D
    sides : mapping
        Side name to ``"dirichlet"`` or ``"neumann"``. Sides are ``left`` and
        ``right`` in 1D, plus ``bottom`` (``x2 = 0``) and ``top`` in 2D.

    Notes
    -----
    In 2D exactly one side may be Dirichlet. That keeps the controlled nodes on
    a single straight edge, where the boundary integral is a 1D trapezoid rule.
    """

    grid: object
    sides: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        names = SIDES_1D if self.grid.ndim == 1 else SIDES_2D
        sides = dict(self.sides)
        if set(sides) != set(names):
            raise ConfigError(f"boundary partition must label exactly {names}, got {sorted(sides)}")
        for k, v in sides.items():
            if v not in (DIRICHLET, NEUMANN):
                raise ConfigError(f"side {k!r}: unknown boundary kind {v!r}")
        dirichlet = [s for s in names if sides[s] == DIRICHLET]
        if not dirichlet:
            raise ConfigError("controlled boundary is empty (no dirichlet side)")
        if self.grid.ndim == 2 and len(dirichlet) != 1:
            raise ConfigError("2D partitions support exactly one dirichlet side")
        object.__setattr__(self, "sides", sides)

    @property
    def dirichlet_sides(self):
        names = SIDES_1D if self.grid.ndim == 1 else SIDES_2D
        return tuple(s for s in names if self.sides[s] == DIRICHLET)

    def measure(self, side) -> float:
        """Boundary measure of one side (counting measure in 1D)."""
        if self.grid.ndim == 1:
            return 1.0
        g = self.grid
        return g.x1.length if side in ("bottom", "top") else g.x2.length

    @property
    def control_measure(self) -> float:
        return sum(self.measure(s) for s in self.dirichlet_sides)

    @property
    def total_measure(self) -> float:
        return sum(self.measure(s) for s in self.sides)

    @cached_property
    def control_mask(self) -> np.ndarray:
        """Boolean array over grid points, true on Γ₁ nodes."""
        mask = np.zeros(self.grid.shape, dtype=bool)
        index = {"left": (0, 0), "right": (0, -1), "bottom": (1, 0), "top": (1, -1)}
        for s in self.dirichlet_sides:
            axis, pos = index[s]
            sl = [slice(None)] * self.grid.ndim
            sl[axis] = pos
            mask[tuple(sl)] = True
        return mask

    @cached_property
    def control_indices(self) -> np.ndarray:
        """Flat (C-order) indices of the Γ₁ nodes, in boundary order."""
        return np.flatnonzero(self.control_mask.ravel())

    @cached_property
    def control_weights(self) -> np.ndarray:
        """Quadrature weights of Γ₁ nodes for the boundary inner product."""
        if self.grid.ndim == 1:
            return np.ones(len(self.dirichlet_sides))
        side = self.dirichlet_sides[0]
        axis = self.grid.x1 if side in ("bottom", "top") else self.grid.x2
        return axis.weights.copy()

    @property
    def n_control(self) -> int:
        return self.control_indices.size


def partition_1d(grid, left=NEUMANN, right=DIRICHLET) -> BoundaryPartition:
    return BoundaryPartition(grid, {"left": left, "right": right})


def partition_2d(grid, control="bottom") -> BoundaryPartition:
    return BoundaryPartition(grid, {s: DIRICHLET if s == control else NEUMANN for s in SIDES_2D})


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values on every point of ``grid``."""

    grid: object
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size == np.prod(self.grid.shape) and v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape)
        if v.shape != self.grid.shape:
            raise ConfigError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, func: Callable):
        pts = grid.points if grid.ndim == 2 else (grid.points,)
        return cls(grid, np.broadcast_to(func(*pts), grid.shape).astype(float))

    @classmethod
    def constant(cls, grid, c=0.0):
        return cls(grid, np.full(grid.shape, float(c)))

    def __add__(self, other):
        other = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other):
        other = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values - other)

    def norm(self) -> float:
        return float(np.sqrt(max(inner_product_domain(self, self), 0.0)))


def inner_product_domain(f: ScalarField, g: ScalarField) -> float:
    """Trapezoid approximation of the L² product of two fields on one grid."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    return float(np.sum(f.grid.weights * (f.values * g.values)))


def inner_product_boundary(f, g, part: BoundaryPartition) -> float:
    """L² product on Γ₁ of two arrays sampled at the controlled nodes.

    In 1D Γ₁ is a set of endpoints with counting measure, so the product is a
    plain sum of pointwise products.
    """
    w = part.control_weights
    if w.size == 0:
        raise ValueError("controlled boundary is empty")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape[0] != w.size or g.shape[0] != w.size:
        raise ValueError(f"boundary arrays must have {w.size} entries")
    return float(np.sum(w * (f * g)))
