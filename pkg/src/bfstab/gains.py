"""Gain synthesis for finite-dimensional Dirichlet boundary feedback.

For unstable eigenvalues ``lambda_i`` with normal traces ``tr_i`` on Γ₁ and a
ladder ``gamma_1 < ... < gamma_N`` the construction is::

    B[i, j]      = <tr_i, tr_j>_Γ₁
    w[k, i]      = 1 / (gamma_k - s_i - lambda_i)
    B_k          = diag(w[k]) B diag(w[k])
    A            = (B_1 + ... + B_N)^{-1}
    u(x)         = sum_k sum_i (A c)_i w[k, i] tr_i(x) + p_e(x)

where ``c`` holds the modal coefficients of the fluctuation and ``s`` is the
shift vector (zero in the simple mode).

The sum of the ``B_k`` is a Cauchy-type matrix and is badly conditioned even
for moderate ``N`` (condition numbers of 1e7 to 1e16 are typical), so the
inversion, the square root and every product involving ``A`` are carried out
in multiprecision arithmetic. Only well-scaled derived quantities are rounded
to float64: the gain ``G`` with ``u = c @ G`` and the reduced generator in
``A^{1/2}`` coordinates.
"""

from dataclasses import dataclass, field
from pathlib import Path
import mpmath as mp
import numpy as np

from .errors import ConfigError, ResonanceError, SingularGainError
from .mesh import inner_product_boundary
from .spectral import SpectralBasis, count_unstable, detect_multiplicity

MODES = ("simple", "perturbed")
DEFAULT_DPS = 40
MAX_DPS = 320


@dataclass(frozen=True)
class GainParameters:
    """Ladder, shift and mode of a gain construction.

    Attributes
    ----------
    rho : float
        Instability threshold.
    gammas : tuple of float
        Strictly increasing, all above ``rho``.
    delta : float
        Perturbation size, 0 in the simple mode.
    mode : {"simple", "perturbed"}
    shifts : tuple of float
        Per-mode shift ``s_i`` entering the denominators ``gamma_k - s_i - lambda_i``.
    """

    rho: float
    gammas: tuple
    delta: float = 0.0
    mode: str = "simple"
    shifts: tuple = ()

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ConfigError("need at least one gamma")
        if not np.all(np.isfinite(g)) or not np.isfinite(self.rho):
            raise ConfigError("gammas and rho must be finite")
        if np.any(np.diff(g) <= 0):
            raise ConfigError(f"gammas must be strictly increasing, got {g.tolist()}")
        if g[0] <= self.rho:
            raise ConfigError(f"gamma_1={g[0]} must exceed rho={self.rho}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "perturbed" and not self.delta > 0:
            raise ConfigError("perturbed mode needs delta > 0")
        if self.mode == "simple" and self.delta != 0:
            raise ConfigError("simple mode has delta = 0")
        shifts = tuple(float(s) for s in self.shifts) or (0.0,) * g.size
        if len(shifts) != g.size:
            raise ConfigError("one shift per gamma is required")
        object.__setattr__(self, "gammas", tuple(float(x) for x in g))
        object.__setattr__(self, "shifts", shifts)

    @property
    def N(self) -> int:
        return len(self.gammas)


def perturbed_ladder(gamma1, N):
    """``gamma_k = gamma_1 + 1/(N - k + 1)`` for ``k >= 2``; ends at ``gamma_1 + 1``."""
    return tuple([float(gamma1)] + [gamma1 + 1.0 / (N - k + 1) for k in range(2, N + 1)])


def cluster_shifts(clusters, N, delta):
    """Shift vector separating each cluster of repeated eigenvalues.

    Member ``r`` of a cluster of size ``m`` is shifted by ``(m - 1 - r) * delta``.
    With a simple spectrum only the first mode is shifted.
    """
    s = np.zeros(N)
    repeated = [c for c in clusters if len(c) > 1]
    if not repeated:
        s[0] = delta
    for c in repeated:
        m = len(c)
        for r, i in enumerate(c):
            s[i] = (m - 1 - r) * delta
    return tuple(s)


def choose_parameters(
    basis: SpectralBasis, rho, mode="simple", margin=1.0, gamma1=None, eps_mult=None
) -> GainParameters:
    """Pick the gamma ladder (and shift) for the unstable part of ``basis``.

    Parameters
    ----------
    mode : {"simple", "perturbed"}
        ``simple`` uses ``gamma_k = gamma_1 + (k-1) * margin``;
        ``perturbed`` uses the ladder of :func:`perturbed_ladder` with
        ``delta = 1 / gamma_1**4``.
    margin : float
        Spacing of the simple ladder and the default offset ``gamma_1 - rho``.
    gamma1 : float, optional
        Overrides ``rho + margin``.

    Raises
    ------
    ConfigError
        For no unstable modes, a nonpositive margin, or when the shifted
        eigenvalues collide (the remedy is a larger ``gamma_1``).
    """
    if not np.isfinite(margin) or margin <= 0:
        raise ConfigError(f"margin must be positive, got {margin}")
    N = count_unstable(basis, rho)
    if N < 1:
        raise ConfigError(f"no eigenvalue below rho={rho}; the system is already stable")
    g1 = float(rho + margin if gamma1 is None else gamma1)
    if mode == "simple":
        return GainParameters(float(rho), tuple(g1 + k * margin for k in range(N)), 0.0, "simple")
    if mode != "perturbed":
        raise ConfigError(f"unknown mode {mode!r}")
    delta = 1.0 / g1**4
    report = detect_multiplicity(basis, N, eps_mult)
    shifts = cluster_shifts(report.clusters, N, delta)
    shifted = basis.lambdas[:N] + np.asarray(shifts)
    shifted_report = detect_multiplicity(_ValuesOnly(np.sort(shifted)), N, report.eps)
    if not shifted_report.simple_spectrum:
        raise ConfigError(
            f"shifted eigenvalues collide for delta={delta:.3g}; increase gamma_1 (now {g1})"
        )
    return GainParameters(float(rho), perturbed_ladder(g1, N), delta, "perturbed", shifts)


@dataclass(frozen=True)
class _ValuesOnly:
    lambdas: np.ndarray
    N: int | None = None


def gram_matrix(basis: SpectralBasis, N=None, part=None) -> np.ndarray:
    """``B[i, j] = <tr_i, tr_j>`` on Γ₁ for the first ``N`` modes.

    Examples
    --------
    In 1D Γ₁ is one node, so ``B`` is the outer product of the traces and has
    rank one.
    """
    N = basis.N if N is None else int(N)
    part = basis.part if part is None else part
    tr = basis.traces[:N]
    B = np.empty((N, N))
    for i in range(N):
        for j in range(i, N):
            B[i, j] = B[j, i] = inner_product_boundary(tr[i], tr[j], part)
    return B


def _gram_mp(traces, weights):
    """Gram matrix in working precision; exactly PSD for the given float traces.

    Rounding ``B`` to float64 first can leave it indefinite at the 1e-16
    level, which swamps the smallest eigenvalue of ``sum B_k``.
    """
    N = traces.shape[0]
    t = [[mp.mpf(v) for v in row] for row in traces]
    wm = [mp.mpf(v) for v in weights]
    B = mp.matrix(N, N)
    for i in range(N):
        for j in range(i, N):
            B[i, j] = B[j, i] = mp.fsum(wm[x] * t[i][x] * t[j][x] for x in range(len(wm)))
    return B


def _weights_mp(gammas, lambdas, shifts):
    N = len(gammas)
    w = mp.matrix(N, len(lambdas))
    for k in range(N):
        for i in range(len(lambdas)):
            d = mp.mpf(gammas[k]) - mp.mpf(shifts[i]) - mp.mpf(lambdas[i])
            if d == 0:
                raise ResonanceError(f"gamma_{k + 1} coincides with shifted eigenvalue {i + 1}")
            w[k, i] = 1 / d
    return w


def lambda_matrices(params: GainParameters, lambdas) -> np.ndarray:
    """Stack of diagonal matrices ``Lambda_k = diag(1/(gamma_k - s_i - lambda_i))``.

    Returns
    -------
    numpy.ndarray
        Shape ``(N, N, N)``; ``out[k]`` is ``Lambda_{gamma_k}``.

    Raises
    ------
    ResonanceError
        If some ``gamma_k`` equals a shifted eigenvalue.
    """
    lam = np.asarray(lambdas, dtype=float)[: params.N]
    if lam.size != params.N:
        raise ConfigError(f"need {params.N} eigenvalues, got {lam.size}")
    with mp.workdps(DEFAULT_DPS):
        w = _weights_mp(params.gammas, lam, params.shifts)
        out = np.zeros((params.N, params.N, params.N))
        for k in range(params.N):
            for i in range(params.N):
                out[k, i, i] = float(w[k, i])
    return out


def _to_np(M):
    return np.array(M.tolist(), dtype=float)


def _mp_sym_sqrt(A):
    """Symmetric square root and inverse square root of an SPD mp matrix."""
    E, Q = mp.eigsy(A)
    n = A.rows
    if min(E[i] for i in range(n)) <= 0:
        raise SingularGainError("gain matrix is not positive definite")
    D = mp.diag([mp.sqrt(E[i]) for i in range(n)])
    Di = mp.diag([1 / mp.sqrt(E[i]) for i in range(n)])
    return Q * D * Q.T, Q * Di * Q.T


@dataclass
class _Algebra:
    B: object
    w: object
    Bk: list
    S: object
    A: object
    A_sqrt: object
    A_inv_sqrt: object
    eig_min: object
    eig_max: object


def _gain_algebra(B, w, cond_cap):
    """Core multiprecision computation shared by :func:`gain_matrix` and :func:`build_gains`."""
    N = B.rows
    Bk = []
    for k in range(w.rows):
        Dk = mp.diag([w[k, i] for i in range(N)])
        Bk.append(Dk * B * Dk)
    S = mp.zeros(N, N)
    for M_ in Bk:
        S += M_
    S = (S + S.T) / 2
    E = mp.eigsy(S, eigvals_only=True)
    lo = min(E[i] for i in range(N))
    hi = max(E[i] for i in range(N))
    if lo <= 0 or hi / lo > cond_cap:
        cond = mp.inf if lo <= 0 else hi / lo
        raise SingularGainError(
            f"sum of B_k is numerically singular (cond={mp.nstr(cond, 3)}, cap={cond_cap:.1e}); "
            "increase gamma spacing or check that the traces do not vanish"
        )
    A = mp.inverse(S)
    # one step of iterative refinement
    A = A + A * (mp.eye(N) - S * A)
    A = (A + A.T) / 2
    A_sqrt, A_inv_sqrt = _mp_sym_sqrt(A)
    return _Algebra(B, w, Bk, S, A, A_sqrt, A_inv_sqrt, lo, hi)


def _default_cap(dps):
    return 10.0 ** (dps // 2)


def _adaptive(compute, dps, max_dps, cond_cap):
    """Run ``compute(cap)`` at increasing precision until the cap is met.

    With an explicit ``cond_cap`` the precision is not raised.
    """
    while True:
        cap = _default_cap(dps) if cond_cap is None else cond_cap
        with mp.workdps(dps):
            try:
                return compute(cap), dps
            except SingularGainError:
                if cond_cap is not None or 2 * dps > max_dps:
                    raise
        dps *= 2


def gain_matrix(B, Lambda_k, dps=DEFAULT_DPS, cond_cap=None, max_dps=MAX_DPS):
    """``B_k = Lambda_k B Lambda_k``, ``A = (sum B_k)^{-1}`` and ``A^{1/2}``.

    Parameters
    ----------
    B : (N, N) array_like
        Symmetric Gram matrix.
    Lambda_k : (N, N, N) array_like
        Diagonal matrices from :func:`lambda_matrices`.
    dps : int
        Starting number of decimal digits for the inversion and square root.
        It is doubled (up to ``max_dps``) while ``sum B_k`` is too badly
        conditioned for the current precision.
    cond_cap : float, optional
        Largest accepted condition number of ``sum B_k``. By default the cap
        is ``10**(dps // 2)``, so half the working digits survive; a fixed
        cap also disables the precision increase.

    Returns
    -------
    B_k : (N, N, N) ndarray
    A, A_sqrt : (N, N) ndarray
        Rounded to float64.

    Raises
    ------
    SingularGainError
        If ``sum B_k`` is not positive definite or exceeds the cap.
    """
    B = np.asarray(B, dtype=float)
    Lk = np.asarray(Lambda_k, dtype=float)
    N = B.shape[0]

    def compute(cap):
        Bm = mp.matrix(B.tolist())
        w = mp.matrix([[Lk[k, i, i] for i in range(N)] for k in range(Lk.shape[0])])
        alg = _gain_algebra(Bm, w, cap)
        return np.array([_to_np(M_) for M_ in alg.Bk]), _to_np(alg.A), _to_np(alg.A_sqrt)

    out, _ = _adaptive(compute, dps, max_dps, cond_cap)
    return out


@dataclass(frozen=True, eq=False)
class GainSet:
    """Everything needed to evaluate the feedback and its reduced dynamics.

    Float64 attributes are rounded from the multiprecision computation.
    ``A`` itself can be huge and badly conditioned; consumers should prefer
    ``G`` (feedback gain) and ``M_Q`` (reduced generator in ``A^{1/2}``
    coordinates), which are well scaled.

    Attributes
    ----------
    params : GainParameters
    lambdas : (N,) ndarray
    traces : (N, n_control) ndarray
    weights : (n_control,) ndarray
        Boundary quadrature weights.
    B, A, A_sqrt, A_inv_sqrt, sum_Bk, T, Lambda : ndarray
    B_k, Lambda_k, G_k : (N, N, N) ndarray
        ``G_k = A^{1/2} B_k A^{1/2}``; these are PSD and sum to the identity.
    G : (N, n_control) ndarray
        ``u = c @ G + p_e``.
    M_Q : (N, N) ndarray
        Generator of ``Q = A^{1/2} Z``.
    cond, min_eig : float
        Condition number and smallest eigenvalue of ``sum_Bk``.
    identity_residual : float
        ``max |A sum_Bk - I|`` evaluated in working precision.
    """

    params: GainParameters
    lambdas: np.ndarray
    traces: np.ndarray
    weights: np.ndarray
    B: np.ndarray
    Lambda_k: np.ndarray
    B_k: np.ndarray
    sum_Bk: np.ndarray
    A: np.ndarray
    A_sqrt: np.ndarray
    A_inv_sqrt: np.ndarray
    G_k: np.ndarray
    T: np.ndarray
    G: np.ndarray
    M_Q: np.ndarray
    cond: float
    min_eig: float
    identity_residual: float
    sqrt_residual: float
    dps: int
    _mp: _Algebra = field(repr=False, default=None)

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def Lambda(self) -> np.ndarray:
        return np.diag(self.lambdas)

    @property
    def tau(self) -> np.ndarray:
        """Column sums of ``T``: the total weight of each trace."""
        return self.T.sum(axis=0)

    def reduced_generator_Z(self) -> np.ndarray:
        """Generator of the modal coordinates ``Z`` (badly scaled; for inspection)."""
        with mp.workdps(self.dps):
            return _to_np(self._mp_generator_Z())

    def _mp_generator_Z(self):
        alg = self._mp
        g = [mp.mpf(x) for x in self.params.gammas]
        N = self.N
        M = -g[0] * mp.eye(N)
        for k in range(1, N):
            M += (g[0] - g[k]) * alg.Bk[k] * alg.A
        for i in range(N):
            M[i, i] += mp.mpf(self.params.shifts[i])
        return M

    def save(self, outdir) -> list:
        """Write the matrices as text files; returns the written paths."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        items = {
            "B": self.B,
            "A": self.A,
            "A_sqrt": self.A_sqrt,
            "sum_Bk": self.sum_Bk,
            "T": self.T,
            "G": self.G,
            "Lambda": self.Lambda,
        }
        for k in range(self.N):
            items[f"B_{k + 1}"] = self.B_k[k]
        paths = []
        for name, M in items.items():
            p = outdir / f"{name}.txt"
            write_matrix(p, M)
            paths.append(p)
        return paths


def build_gains(basis: SpectralBasis, params: GainParameters, dps=DEFAULT_DPS, cond_cap=None, max_dps=MAX_DPS) -> GainSet:
    """Assemble a :class:`GainSet` for the first ``params.N`` modes of ``basis``.

    Precision handling follows :func:`gain_matrix`; the digits finally used
    are stored in ``GainSet.dps``.
    """
    N = params.N
    if basis.M < N:
        raise ConfigError(f"basis has {basis.M} modes, gains need {N}")
    lam = basis.lambdas[:N]
    tr = basis.traces[:N]
    B = gram_matrix(basis, N)

    wb = basis.part.control_weights

    def compute(cap):
        w = _weights_mp(params.gammas, lam, params.shifts)
        return w, _gain_algebra(_gram_mp(tr, wb), w, cap)

    (w, alg), used = _adaptive(compute, dps, max_dps, cond_cap)
    with mp.workdps(used):
        I = mp.eye(N)
        ident_res = mp.mnorm(alg.A * alg.S - I, 1)
        sqrt_res = mp.mnorm(alg.A_sqrt * alg.A_sqrt - alg.A, 1) / mp.mnorm(alg.A, 1)
        Gk = [alg.A_sqrt * M_ * alg.A_sqrt for M_ in alg.Bk]
        tau = [sum(w[k, i] for k in range(N)) for i in range(N)]
        Ttr = mp.matrix([[tau[i] * mp.mpf(tr[i, x]) for x in range(tr.shape[1])] for i in range(N)])
        G = alg.A * Ttr
        g = [mp.mpf(x) for x in params.gammas]
        MQ = -g[0] * I
        for k in range(1, N):
            MQ += (g[0] - g[k]) * Gk[k]
        MQ += alg.A_sqrt * mp.diag([mp.mpf(s) for s in params.shifts]) * alg.A_inv_sqrt
        Lk = np.zeros((N, N, N))
        for k in range(N):
            for i in range(N):
                Lk[k, i, i] = float(w[k, i])
        return GainSet(
            params=params,
            lambdas=lam.copy(),
            traces=tr.copy(),
            weights=basis.part.control_weights.copy(),
            B=B,
            Lambda_k=Lk,
            B_k=np.array([_to_np(M_) for M_ in alg.Bk]),
            sum_Bk=_to_np(alg.S),
            A=_to_np(alg.A),
            A_sqrt=_to_np(alg.A_sqrt),
            A_inv_sqrt=_to_np(alg.A_inv_sqrt),
            G_k=np.array([_to_np(M_) for M_ in Gk]),
            T=_to_np(w),
            G=_to_np(G),
            M_Q=_to_np(MQ),
            cond=float(alg.eig_max / alg.eig_min),
            min_eig=float(alg.eig_min),
            identity_residual=float(ident_res),
            sqrt_residual=float(sqrt_res),
            dps=used,
            _mp=alg,
        )


def feedback_trace(gains: GainSet, coeffs, p_e=None) -> np.ndarray:
    """Boundary value ``u`` on Γ₁ for modal coefficients ``coeffs``.

    Parameters
    ----------
    coeffs : (N,) array_like
        ``<y - p_e, phi_i>`` for the unstable modes.
    p_e : array_like or float, optional
        Equilibrium values on Γ₁, added to the feedback.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (gains.N,):
        raise ConfigError(f"expected {gains.N} modal coefficients, got shape {c.shape}")
    u = c @ gains.G
    if p_e is not None:
        u = u + p_e
    return u


def cauchy_determinant(gammas, lambdas, dps=DEFAULT_DPS) -> float:
    """Determinant of ``[1/(gamma_i - lambda_j)]`` by multiprecision LU.

    Raises
    ------
    ResonanceError
        If some ``gamma_i`` equals some ``lambda_j``.
    """
    g = np.asarray(gammas, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    if g.shape != lam.shape:
        raise ConfigError("gammas and lambdas must have the same length")
    with mp.workdps(dps):
        C = _weights_mp(g, lam, np.zeros(lam.size))
        return float(mp.det(C))


def cauchy_determinant_closed_form(gammas, lambdas) -> float:
    """Product formula for the Cauchy determinant, used as a test oracle."""
    g = np.asarray(gammas, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    n = g.size
    num = 1.0
    for i in range(n):
        for j in range(i + 1, n):
            num *= (g[i] - g[j]) * (lam[j] - lam[i])
    return float(num / np.prod(np.subtract.outer(g, lam)))


def write_matrix(path, M) -> None:
    """Plain-text matrix: a ``# rows cols`` header, then one row per line."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"# {M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_matrix(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        rows, cols = int(header[1]), int(header[2])
        data = np.loadtxt(fh, ndmin=2) if rows else np.zeros((0, cols))
    return data.reshape(rows, cols)
