"""Closed-loop dynamics: reduced modal ODE, linear and nonlinear PDE stepping.

PDE convention::

    p_t = Δp - f(x, p)          in the domain
    p   = u                      on Γ₁ (feedback)
    dp/dnu = 0                   on Γ₂

with an equilibrium ``p_e`` and linearization potential ``a = f_p(x, p_e)``.
The linear plant is ``y_t = Δy - a y``.

Time stepping is implicit Euler for diffusion and potential, with the
boundary feedback evaluated from the state at the start of the step.
"""

import csv
import io
from dataclasses import dataclass
from typing import Callable

import mpmath as mp
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._kernels import TridiagonalLU
from .errors import ConfigError
from .gains import GainSet, feedback_trace
from .mesh import ScalarField
from .spectral import DiscreteOperator, SpectralBasis

DIVERGENCE_FACTOR = 1e8


@dataclass(frozen=True)
class ReducedState:
    """Modal coefficients ``Z`` of the reduced variable at time ``t``."""

    Z: np.ndarray
    t: float = 0.0


@dataclass(eq=False)
class Trajectory:
    """Sampled time series of a simulation.

    Attributes
    ----------
    times : (n,) ndarray
    norms : (n,) ndarray
        L² norm of the fluctuation (or ``||A^{1/2} Z||`` for reduced runs).
    modes : (n, N) ndarray
        Modal coefficients of the fluctuation.
    u : (n, n_control) ndarray
        Boundary values applied on Γ₁ (empty for reduced runs).
    dt : float
    diverged : bool
        True when the run stopped on a non-finite state or on growth beyond
        ``DIVERGENCE_FACTOR`` times the initial norm.
    """

    times: np.ndarray
    norms: np.ndarray
    modes: np.ndarray
    u: np.ndarray
    dt: float
    diverged: bool = False

    def __post_init__(self):
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def growth(self) -> float:
        """Ratio of the last to the first norm."""
        return float(self.norms[-1] / self.norms[0]) if self.norms[0] > 0 else float("nan")

    def to_csv(self, path=None) -> str:
        """CSV with header ``t,norm,mode_1..mode_N,u_sample``.

        ``u_sample`` is the feedback at the first Γ₁ node. Floats use 17
        significant digits so reruns can be compared byte for byte.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        N = self.modes.shape[1]
        w.writerow(["t", "norm"] + [f"mode_{i + 1}" for i in range(N)] + ["u_sample"])
        for k in range(self.times.size):
            us = self.u[k, 0] if self.u.size else 0.0
            row = [self.times[k], self.norms[k], *self.modes[k], us]
            w.writerow([f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True)
class DecayReport:
    """Exponential fit ``||y(t)||^2 ~ C exp(-mu t) ||y_0||^2`` on a trailing window."""

    mu_hat: float
    C_hat: float
    window: tuple
    passed: bool
    n_samples: int


def simulate_reduced(Z0, gains: GainSet, T_end, dt, record_every=1) -> Trajectory:
    """Integrate the reduced modal ODE exactly with a matrix exponential.

    The system is propagated in ``Q = A^{1/2} Z`` coordinates, whose generator
    is well scaled even when ``A`` is not. ``norms`` records ``||Q(t)||``.
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if isinstance(Z0, ReducedState):
        Z0 = Z0.Z
    Z0 = np.asarray(Z0, dtype=float)
    if Z0.shape != (gains.N,):
        raise ConfigError(f"Z0 must have {gains.N} entries")
    with mp.workdps(gains.dps):
        Q = np.array([float(v) for v in gains._mp.A_sqrt * mp.matrix(Z0.tolist())])
    P = sla.expm(dt * gains.M_Q)
    steps = int(round(T_end / dt))
    times, norms, modes = [], [], []
    for n in range(steps + 1):
        if n % record_every == 0 or n == steps:
            times.append(n * dt)
            norms.append(np.linalg.norm(Q))
            modes.append(gains.A_inv_sqrt @ Q)
        Q = P @ Q
    return Trajectory(
        np.array(times), np.array(norms), np.array(modes), np.zeros((len(times), 0)), float(dt)
    )


def lyapunov_derivative_check(Z, gains: GainSet) -> float:
    """``d/dt (1/2)||A^{1/2} Z||^2`` along the reduced dynamics.

    For the simple construction this never exceeds ``-gamma_1 ||A^{1/2} Z||^2``.
    """
    if isinstance(Z, ReducedState):
        Z = Z.Z
    Z = np.asarray(Z, dtype=float)
    with mp.workdps(gains.dps):
        Q = np.array([float(v) for v in gains._mp.A_sqrt * mp.matrix(Z.tolist())])
    return float(Q @ gains.M_Q @ Q)


def lyapunov_bound(Z, gains: GainSet) -> float:
    """``-gamma_1 ||A^{1/2} Z||^2``."""
    if isinstance(Z, ReducedState):
        Z = Z.Z
    with mp.workdps(gains.dps):
        Q = np.array([float(v) for v in gains._mp.A_sqrt * mp.matrix(np.asarray(Z, float).tolist())])
    return float(-gains.params.gammas[0] * (Q @ Q))


class ImplicitEuler:
    """Factorized ``I + dt L`` for repeated implicit Euler steps."""

    def __init__(self, op: DiscreteOperator, dt):
        if dt <= 0:
            raise ConfigError("dt must be positive")
        self.op = op
        self.dt = float(dt)
        if op.grid.ndim == 1:
            sub, diag, sup = op.tridiagonal()
            lu = TridiagonalLU(dt * sub, 1.0 + dt * diag, dt * sup)
            self._solve = lu.solve
        else:
            K = sp.csc_matrix(sp.identity(op.size) + dt * op.L)
            self._solve = spla.splu(K).solve

    def step(self, values, alpha, source=None) -> np.ndarray:
        """Advance full nodal ``values`` one step with boundary data ``alpha``.

        ``source`` (unknown-node values) is added explicitly to the right-hand side.
        """
        op, dt = self.op, self.dt
        b = op.restrict(values) - dt * (op.E @ alpha)
        if source is not None:
            b = b + dt * source
        y = self._solve(b)
        return op.embed(y, alpha)


def step_linear(y: ScalarField, gains: GainSet | None, basis: SpectralBasis, op: DiscreteOperator, dt, stepper=None):
    """One step of ``y_t = Δy - a y`` under the feedback.

    The boundary value is computed from the current state; ``gains=None``
    applies zero Dirichlet data (open loop).

    Returns
    -------
    ScalarField
        State at ``t + dt``.
    numpy.ndarray
        Boundary values used during the step.
    """
    stepper = ImplicitEuler(op, dt) if stepper is None else stepper
    if gains is None:
        alpha = np.zeros(op.part.n_control)
    else:
        alpha = feedback_trace(gains, basis.project(y, gains.N))
    return ScalarField(op.grid, stepper.step(y.values, alpha)), alpha


def step_nonlinear(
    p: ScalarField,
    gains: GainSet | None,
    basis: SpectralBasis,
    f: Callable,
    p_e: ScalarField,
    op_diffusion: DiscreteOperator,
    dt,
    stepper=None,
):
    """One step of ``p_t = Δp - f(x, p)`` stabilized around ``p_e``.

    Diffusion is implicit, the reaction ``f(x, p)`` explicit, and the boundary
    value is the feedback on ``p - p_e`` plus the equilibrium trace. The state
    is returned as computed even if it is non-finite; the caller decides how
    to report blow-up.
    """
    op = op_diffusion
    stepper = ImplicitEuler(op, dt) if stepper is None else stepper
    pe_gamma = p_e.values.reshape(-1)[op.part.control_indices]
    if gains is None:
        alpha = pe_gamma.copy()
    else:
        alpha = feedback_trace(gains, basis.project(p.values - p_e.values, gains.N), pe_gamma)
    pts = op.grid.points if op.grid.ndim == 2 else (op.grid.points,)
    with np.errstate(over="ignore", invalid="ignore"):
        react = np.asarray(f(*pts, p.values), dtype=float)
        source = -op.restrict(np.broadcast_to(react, op.grid.shape))
        new = stepper.step(p.values, alpha, source)
    return ScalarField(op.grid, new), alpha


@dataclass(eq=False)
class Plant:
    """Closed-loop system description for :func:`simulate`.

    Attributes
    ----------
    op : DiscreteOperator
        Linearized operator ``-Δ + a``.
    basis : SpectralBasis
        Modes used for the feedback (first ``gains.N``).
    gains : GainSet or None
        ``None`` runs the open loop.
    reaction : callable, optional
        ``f(x..., p)``; when given the nonlinear equation is stepped with
        ``op_diffusion``.
    p_e : ScalarField, optional
        Equilibrium; zero for the linear plant.
    op_diffusion : DiscreteOperator, optional
        Pure diffusion operator on the same partition.
    """

    op: DiscreteOperator
    basis: SpectralBasis
    gains: GainSet | None = None
    reaction: Callable | None = None
    p_e: ScalarField | None = None
    op_diffusion: DiscreteOperator | None = None

    @property
    def nonlinear(self) -> bool:
        return self.reaction is not None

    @property
    def n_modes(self) -> int:
        if self.gains is not None:
            return self.gains.N
        return self.basis.N or 0


def simulate(plant: Plant, initial: ScalarField, T_end, dt, record_every=1, divergence_factor=DIVERGENCE_FACTOR) -> Trajectory:
    """Run a plant from ``initial`` to ``T_end`` or until divergence.

    ``norms`` holds ``||p - p_e||``; samples are kept every ``record_every``
    steps plus the final one. With ``T_end = 0`` the trajectory has a single
    sample.
    """
    if T_end < 0:
        raise ConfigError("T_end must be nonnegative")
    grid = plant.op.grid
    p_e = plant.p_e if plant.p_e is not None else ScalarField.constant(grid, 0.0)
    if plant.nonlinear:
        op_step = plant.op_diffusion
        if op_step is None:
            raise ConfigError("nonlinear plants need op_diffusion")
    else:
        op_step = plant.op
    stepper = ImplicitEuler(op_step, dt)
    N = plant.n_modes
    steps = int(round(T_end / dt))
    y = initial
    norm0 = (y - p_e).norm()
    limit = divergence_factor * max(norm0, np.finfo(float).tiny)
    times, norms, modes, us = [], [], [], []
    diverged = False
    ctrl = plant.op.part.control_indices
    for n in range(steps + 1):
        w = y - p_e
        nrm = w.norm() if np.all(np.isfinite(w.values)) else float("inf")
        record = n % record_every == 0 or n == steps
        if not np.isfinite(nrm) or nrm > limit:
            diverged = True
            record = True
        if record:
            times.append(n * dt)
            norms.append(nrm)
            modes.append(plant.basis.project(w, N) if np.isfinite(nrm) else np.full(N, np.nan))
            us.append(y.values.reshape(-1)[ctrl].copy())
        if diverged or n == steps:
            break
        if plant.nonlinear:
            y, _ = step_nonlinear(y, plant.gains, plant.basis, plant.reaction, p_e, op_step, dt, stepper)
        else:
            y, _ = step_linear(y, plant.gains, plant.basis, op_step, dt, stepper)
    return Trajectory(
        np.array(times), np.array(norms), np.array(modes).reshape(len(times), N), np.array(us), float(dt), diverged
    )


def fit_decay_rate(traj: Trajectory, window_fraction=0.5, target=None, min_samples=10, floor=None) -> DecayReport:
    """Least-squares fit of ``log||y||`` over the trailing ``window_fraction`` of time.

    ``mu_hat = -2 * slope`` follows the squared-norm convention. A window
    containing nonpositive norms (decay to roundoff) yields ``mu_hat = inf``.
    ``passed`` compares against ``target`` when given, else requires
    ``mu_hat > 0``.

    Parameters
    ----------
    floor : float, optional
        Relative noise floor. Samples from the first one below
        ``floor * norms[0]`` onward are dropped before windowing, so a run
        that has already decayed to roundoff is fitted on its decaying part.

    Examples
    --------
    >>> import numpy as np
    >>> t = np.linspace(0, 1, 101)
    >>> tr = Trajectory(t, 5 * np.exp(-2 * t), np.zeros((101, 0)), np.zeros((101, 0)), 0.01)
    >>> round(fit_decay_rate(tr).mu_hat, 6)
    4.0
    """
    if not 0 < window_fraction <= 1:
        raise ConfigError("window_fraction must lie in (0, 1]")
    t, norms = traj.times, traj.norms
    if floor is not None and norms[0] > 0:
        below = np.flatnonzero(norms < floor * norms[0])
        if below.size:
            t, norms = t[: below[0]], norms[: below[0]]
    if t.size == 0:
        raise ConfigError("no samples above the noise floor")
    t0 = t[-1] - window_fraction * (t[-1] - t[0])
    sel = t >= t0 - 1e-12 * max(abs(t0), 1.0)
    if sel.sum() < min_samples:
        raise ConfigError(f"need at least {min_samples} samples in the fit window, got {sel.sum()}")
    y = norms[sel]
    window = (float(t[sel][0]), float(t[sel][-1]))
    if traj.diverged or not np.all(np.isfinite(y)):
        return DecayReport(float("-inf"), float("nan"), window, False, int(sel.sum()))
    if np.any(y <= 0):
        mu = float("inf")
        passed = target is None or mu >= target
        return DecayReport(mu, float("nan"), window, bool(passed), int(sel.sum()))
    slope, intercept = np.polyfit(t[sel], np.log(y), 1)
    mu = float(-2.0 * slope)
    n0 = norms[0]
    C = float(np.exp(2.0 * intercept) / n0**2) if n0 > 0 else float("nan")
    passed = mu > 0 if target is None else mu >= target
    return DecayReport(mu, C, window, bool(passed), int(sel.sum()))


def monotone_tail(traj: Trajectory, fraction=0.5, blocks=5) -> bool:
    """True when block maxima of the trailing norms strictly decrease."""
    t = traj.times
    sel = t >= t[-1] - fraction * (t[-1] - t[0])
    y = traj.norms[sel]
    if y.size < blocks:
        return False
    maxima = np.array([b.max() for b in np.array_split(y, blocks)])
    return bool(np.all(np.diff(maxima) < 0))


def classify(traj: Trajectory, report: DecayReport | None = None) -> str:
    """``"converged"``, ``"diverged"`` or ``"stalled"``."""
    if traj.diverged:
        return "diverged"
    report = fit_decay_rate(traj) if report is None else report
    return "converged" if report.mu_hat > 0 else "stalled"
