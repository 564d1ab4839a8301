"""Hot numeric kernels.

Each kernel has two implementations: a loop version compiled with numba
(``*_nb``) and a numpy/LAPACK reference version (``*_np``). The public names
(``TridiagonalLU``, ``smallest_eigenvalues``) dispatch on ``USE_NUMBA``; the
benchmark and the parity tests call both variants directly.
"""

import numpy as np
from scipy.linalg import lapack

from ._compat import USE_NUMBA, jit


@jit(nopython=True, cache=True)
def gttrf_nb(dl, d, du):
    """LU factorization of a tridiagonal matrix with partial pivoting.

    Mirrors LAPACK ``dgttrf`` but with 0-based pivots. Inputs are copied.

    Returns
    -------
    dl, d, du, du2 : numpy.ndarray
        Factor bands; ``du2`` is the second superdiagonal of ``U`` created by
        row interchanges.
    ipiv : numpy.ndarray
        ``ipiv[i]`` is ``i`` or ``i + 1``.
    info : int
        0 on success, otherwise 1 + index of the first zero pivot.
    """
    n = d.shape[0]
    dl = dl.copy()
    d = d.copy()
    du = du.copy()
    du2 = np.zeros(max(n - 2, 0))
    ipiv = np.arange(n)
    for i in range(n - 1):
        if abs(d[i]) >= abs(dl[i]):
            if d[i] != 0.0:
                fact = dl[i] / d[i]
                dl[i] = fact
                d[i + 1] -= fact * du[i]
        else:
            fact = d[i] / dl[i]
            d[i] = dl[i]
            dl[i] = fact
            temp = du[i]
            du[i] = d[i + 1]
            d[i + 1] = temp - fact * d[i + 1]
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
            ipiv[i] = i + 1
    info = 0
    for i in range(n):
        if d[i] == 0.0:
            info = i + 1
            break
    return dl, d, du, du2, ipiv, info


@jit(nopython=True, cache=True)
def gttrs_nb(dl, d, du, du2, ipiv, b):
    """Solve with the factors from :func:`gttrf_nb`. ``b`` has shape (n, k)."""
    n = d.shape[0]
    x = b.copy()
    for j in range(x.shape[1]):
        for i in range(n - 1):
            ip = ipiv[i]
            temp = x[2 * i + 1 - ip, j] - dl[i] * x[ip, j]
            x[i, j] = x[ip, j]
            x[i + 1, j] = temp
        x[n - 1, j] = x[n - 1, j] / d[n - 1]
        if n > 1:
            x[n - 2, j] = (x[n - 2, j] - du[n - 2] * x[n - 1, j]) / d[n - 2]
        for i in range(n - 3, -1, -1):
            x[i, j] = (x[i, j] - du[i] * x[i + 1, j] - du2[i] * x[i + 2, j]) / d[i]
    return x


def gttrf_np(dl, d, du):
    if d.shape[0] < 3:
        # the scipy wrapper rejects n < 3; append decoupled identity rows
        pad = 3 - d.shape[0]
        dl = np.concatenate([dl, np.zeros(pad)])
        du = np.concatenate([du, np.zeros(pad)])
        d = np.concatenate([d, np.ones(pad)])
    dl2, d2, du2_, du2, ipiv, info = lapack.dgttrf(dl, d, du)
    if info < 0:  # pragma: no cover
        raise ValueError(f"dgttrf: illegal argument {-info}")
    return dl2, d2, du2_, du2, ipiv, info


def gttrs_np(dl, d, du, du2, ipiv, b):
    n = b.shape[0]
    if d.shape[0] > n:
        b = np.concatenate([b, np.zeros((d.shape[0] - n,) + b.shape[1:])])
    x, info = lapack.dgttrs(dl, d, du, du2, ipiv, b)
    if info != 0:  # pragma: no cover
        raise ValueError(f"dgttrs: illegal argument {-info}")
    return x[:n]


class TridiagonalLU:
    """Reusable factorization of a (generally nonsymmetric) tridiagonal matrix.

    Parameters
    ----------
    sub, diag, sup : array_like
        Subdiagonal (n-1), diagonal (n), superdiagonal (n-1).
    backend : {"numba", "numpy", None}
        ``None`` follows the package-wide flag.
    """

    def __init__(self, sub, diag, sup, backend=None):
        if backend is None:
            backend = "numba" if USE_NUMBA else "numpy"
        if backend not in ("numba", "numpy"):
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        sub = np.ascontiguousarray(sub, dtype=float)
        diag = np.ascontiguousarray(diag, dtype=float)
        sup = np.ascontiguousarray(sup, dtype=float)
        self.n = diag.shape[0]
        if sub.shape[0] != self.n - 1 or sup.shape[0] != self.n - 1:
            raise ValueError("band lengths do not match the diagonal")
        factor = gttrf_nb if backend == "numba" else gttrf_np
        *self._factors, info = factor(sub, diag, sup)
        self.singular = info != 0
        # pivot-growth proxy used by callers to detect near-resonance
        u = np.abs(self._factors[1][: self.n])
        self.rcond_estimate = 0.0 if self.singular else float(u.min() / max(u.max(), np.abs(diag).max()))

    def solve(self, b):
        if self.singular:
            raise np.linalg.LinAlgError("tridiagonal matrix is singular")
        b = np.asarray(b, dtype=float)
        vector = b.ndim == 1
        rhs = np.ascontiguousarray(b.reshape(self.n, -1))
        solve = gttrs_nb if self.backend == "numba" else gttrs_np
        x = solve(*self._factors, rhs)
        return x[:, 0] if vector else x


@jit(nopython=True, cache=True)
def sturm_count_nb(d, e2, x, pivmin):
    """Number of eigenvalues of the symmetric tridiagonal (d, e) below ``x``."""
    count = 0
    q = d[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0.0:
        count += 1
    for i in range(1, d.shape[0]):
        q = d[i] - x - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


def sturm_count_np(d, e2, x, pivmin):
    """Vectorized Sturm count: ``x`` may be an array of shifts."""
    x = np.asarray(x, dtype=float)
    q = d[0] - x
    q = np.where(np.abs(q) < pivmin, -pivmin, q)
    count = (q < 0).astype(np.int64)
    for i in range(1, d.shape[0]):
        q = d[i] - x - e2[i - 1] / q
        q = np.where(np.abs(q) < pivmin, -pivmin, q)
        count += q < 0
    return count


def _gershgorin(d, e):
    r = np.zeros_like(d)
    r[:-1] += np.abs(e)
    r[1:] += np.abs(e)
    return float(np.min(d - r)), float(np.max(d + r))


@jit(nopython=True, cache=True)
def bisect_smallest_nb(d, e2, m, lo, hi, pivmin, tol):
    out = np.empty(m)
    for k in range(m):
        a = lo
        b = hi
        while b - a > tol * max(1.0, abs(a) + abs(b)):
            mid = 0.5 * (a + b)
            if mid == a or mid == b:
                break
            if sturm_count_nb(d, e2, mid, pivmin) > k:
                b = mid
            else:
                a = mid
        out[k] = 0.5 * (a + b)
    return out


def bisect_smallest_np(d, e2, m, lo, hi, pivmin, tol):
    a = np.full(m, lo)
    b = np.full(m, hi)
    k = np.arange(m)
    for _ in range(200):
        mid = 0.5 * (a + b)
        above = sturm_count_np(d, e2, mid, pivmin) > k
        b = np.where(above, mid, b)
        a = np.where(above, a, mid)
        if np.all(b - a <= tol * np.maximum(1.0, np.abs(a) + np.abs(b))):
            break
    return 0.5 * (a + b)


def smallest_eigenvalues(d, e, m, backend=None):
    """The ``m`` smallest eigenvalues of a symmetric tridiagonal matrix by bisection."""
    if backend is None:
        backend = "numba" if USE_NUMBA else "numpy"
    d = np.ascontiguousarray(d, dtype=float)
    e = np.ascontiguousarray(e, dtype=float)
    if m == 0:
        return np.empty(0)
    lo, hi = _gershgorin(d, e)
    scale = max(abs(lo), abs(hi), 1.0)
    pivmin = np.finfo(float).tiny * max(1.0, float(np.max(e * e, initial=0.0)))
    span = hi - lo
    lo -= 1e-12 * scale + 1e-300
    hi += 1e-12 * scale + span * 1e-12
    e2 = e * e
    tol = 4 * np.finfo(float).eps
    bisect = bisect_smallest_nb if backend == "numba" else bisect_smallest_np
    return bisect(d, e2, int(m), lo, hi, pivmin, tol)
