"""Dense complex linear algebra: DFT matrices, operator norms and spectra.

Matrices are plain ``numpy`` complex128 arrays.  The eigensolver
(Householder-Hessenberg reduction, shifted QR with complex Wilkinson
shifts, inverse iteration for eigenvectors) and the Jacobi SVD oracle live
in :mod:`fuplab._kernels`; this module validates inputs and turns kernel
status codes into :class:`NonConvergenceError`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from fuplab import _kernels

DEFAULT_SEED = 20170801
EIG_DIMENSION_CAP = 4096
DEFLATION_TOL = 1e-14
JACOBI_CROSSCHECK_DIM = 64
JACOBI_FALLBACK_DIM = 512

log = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    """An iterative kernel stopped before meeting its tolerance.

    ``last_iterate`` holds whatever the method had when it gave up (a
    vector, an eigenvalue array, or a scalar estimate) and ``detail`` is a
    mapping with method-specific diagnostics such as the stuck QR window.
    """

    def __init__(self, message, last_iterate=None, detail=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.detail = dict(detail or {})


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    spectral_radius: float
    residual_max: float
    eigenvectors: np.ndarray | None = field(default=None, repr=False)
    # number of leading eigenpairs for which vectors/residuals were computed
    n_vectors: int = 0


def as_matrix(a, square=False):
    """Coerce ``a`` to a finite, nonempty 2-D complex128 array."""
    arr = np.ascontiguousarray(np.asarray(a, dtype=np.complex128))
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a nonempty 2-D matrix, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


def unit_roots(N):
    """``exp(-2 pi i m / N)`` for ``m = 0..N-1`` with symmetric angle reduction."""
    m = np.arange(N)
    # map m/N to (-1/2, 1/2] so the angle stays small
    frac = np.where(2 * m > N, m - N, m) / N
    ang = -2.0 * np.pi * frac
    return np.cos(ang) + 1j * np.sin(ang)


def dft_matrix(N):
    """Unitary DFT matrix with entry ``(j, l) = exp(-2 pi i j l / N) / sqrt(N)``.

    The exponent is reduced exactly as ``j*l mod N`` so the result is
    symmetric bit for bit.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    idx = np.arange(N, dtype=np.int64)
    powers = np.outer(idx, idx) % N
    return unit_roots(N)[powers] / np.sqrt(N)


def jacobi_singular_values(a, tol=1e-15, max_sweeps=80):
    """All singular values of ``a`` in descending order (one-sided Jacobi)."""
    arr = as_matrix(a)
    if arr.shape[1] > arr.shape[0]:
        arr = np.ascontiguousarray(arr.conj().T)
    vals, sweeps = _kernels.jacobi_svd_values(arr.copy(), tol, max_sweeps)
    if sweeps > max_sweeps:
        raise NonConvergenceError(
            "Jacobi SVD did not converge", last_iterate=np.sort(vals)[::-1],
            detail={"sweeps": max_sweeps},
        )
    return np.sort(vals)[::-1]


def operator_norm(a, tol=1e-13, max_iter=200_000, seed=DEFAULT_SEED, fallback=True):
    """Largest singular value of ``a`` by power iteration on the Gram matrix.

    Iterates on ``A^H A`` or ``A A^H``, whichever is smaller, from a seeded
    random start, and stops once the Rayleigh-quotient residual is below
    ``tol`` relative to the quotient.  For the Hermitian Gram matrix this
    bounds the relative error of the returned norm by ``tol``.  Matrices
    with at most 64 rows and columns are cross-checked against
    :func:`jacobi_singular_values`.

    A nearly repeated top singular value can stall the iteration.  With
    ``fallback`` set and the smaller side at most 512, the answer then
    comes from :func:`jacobi_singular_values` and a warning is logged.

    Raises
    ------
    NonConvergenceError
        If ``max_iter`` is exhausted and no fallback applies;
        ``last_iterate`` is the current norm estimate.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    arr = as_matrix(a)
    if not np.any(arr):
        return 0.0
    gram = arr.conj().T @ arr if arr.shape[1] <= arr.shape[0] else arr @ arr.conj().T
    n = gram.shape[0]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    rq = 0.0
    converged = False
    for _ in range(max_iter):
        y = gram @ x
        rq = float(np.vdot(x, y).real)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            # start vector in the null space; a random start makes this a
            # zero-measure event, so just reseed
            x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            x /= np.linalg.norm(x)
            continue
        resid = np.linalg.norm(y - rq * x)
        x = y / ny
        if resid <= tol * rq:
            converged = True
            break
    if not converged and fallback and min(arr.shape) <= JACOBI_FALLBACK_DIM:
        log.warning("power iteration stalled after %d steps; using Jacobi SVD", max_iter)
        return float(jacobi_singular_values(arr)[0])
    if not converged:
        raise NonConvergenceError(
            f"power iteration did not reach tol={tol} in {max_iter} steps",
            last_iterate=float(np.sqrt(max(rq, 0.0))),
        )
    value = float(np.sqrt(rq))
    if max(arr.shape) <= JACOBI_CROSSCHECK_DIM:
        oracle = float(jacobi_singular_values(arr)[0])
        if abs(value - oracle) > max(10 * tol, 1e-12) * max(oracle, 1.0):
            raise NonConvergenceError(
                "power iteration disagrees with the Jacobi oracle",
                last_iterate=value, detail={"jacobi": oracle},
            )
    return value


def _hessenberg_eigvals(arr, max_iter_per_eig):
    h = arr.copy()
    q = _kernels.hessenberg_reduce(h, True)
    h0 = h.copy()
    w, status, lo, hi = _kernels.hessenberg_qr_eigvals(h, DEFLATION_TOL, max_iter_per_eig)
    if status != 0:
        raise NonConvergenceError(
            f"shifted QR stalled on the active block [{lo}, {hi}]",
            last_iterate=w, detail={"block": (int(lo), int(hi))},
        )
    return w, h0, q


def eig(a, tol=1e-8, n_vectors=None, max_iter_per_eig=100, cap=EIG_DIMENSION_CAP,
        seed=DEFAULT_SEED):
    """Full spectrum of a square complex matrix.

    Parameters
    ----------
    a : array_like
        Square matrix, dimension at most ``cap``.
    tol : float
        Largest acceptable eigenpair residual ``|Av - lv| / |v|``.
    n_vectors : int, optional
        Compute eigenvectors (and residuals) only for this many leading
        eigenvalues.  ``None`` means all of them.

    Returns
    -------
    SpectrumReport
        Eigenvalues sorted by descending modulus; ``eigenvectors`` holds
        unit columns for the first ``n_vectors`` of them.

    Raises
    ------
    NonConvergenceError
        If QR stalls on some block, or an eigenpair residual exceeds
        ``tol`` after inverse iteration.
    """
    arr = as_matrix(a, square=True)
    n = arr.shape[0]
    if n > cap:
        raise ValueError(f"dimension {n} exceeds the eigensolver cap {cap}")
    w, h0, q = _hessenberg_eigvals(arr, max_iter_per_eig)
    order = np.lexsort((np.angle(w), -np.abs(w)))
    w = w[order]
    k = n if n_vectors is None else min(int(n_vectors), n)
    vecs = np.zeros((n, k), dtype=np.complex128)
    anorm = max(np.abs(arr).max(), np.finfo(float).tiny)
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x0 /= np.linalg.norm(x0)
    residual_max = 0.0
    for i in range(k):
        lam = w[i]
        best = None
        for steps, nudge in ((2, 0.0), (4, 1e-12), (6, 1e-10)):
            shift = lam + nudge * anorm
            y = _kernels.hessenberg_inverse_iteration(h0, shift, x0, steps, 1e-300 + 1e-17 * anorm)
            v = q @ y
            nv = np.linalg.norm(v)
            if not np.isfinite(nv) or nv == 0.0:
                continue
            v /= nv
            r = float(np.linalg.norm(arr @ v - lam * v))
            if best is None or r < best[0]:
                best = (r, v)
            if r <= tol:
                break
        if best is None:
            raise NonConvergenceError(
                f"inverse iteration failed for eigenvalue {lam}", last_iterate=w,
                detail={"index": i},
            )
        residual_max = max(residual_max, best[0])
        vecs[:, i] = best[1]
    if residual_max > tol:
        raise NonConvergenceError(
            f"eigenpair residual {residual_max:.3e} exceeds tol={tol:.1e}",
            last_iterate=w, detail={"residual_max": residual_max},
        )
    return SpectrumReport(
        eigenvalues=w,
        spectral_radius=float(abs(w[0])),
        residual_max=residual_max,
        eigenvectors=vecs,
        n_vectors=k,
    )


def power_iteration(a, x0, max_iter=20_000, tol=1e-12):
    """Dominant eigenvalue estimate by plain power iteration.

    Returns ``(rayleigh_quotient, vector, converged)``; convergence means
    the eigen-residual fell below ``tol`` times the quotient modulus.
    """
    arr = as_matrix(a, square=True)
    x = np.asarray(x0, dtype=np.complex128)
    x = x / np.linalg.norm(x)
    lam = 0.0 + 0.0j
    for _ in range(max_iter):
        y = arr @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0 + 0.0j, x, True
        lam = np.vdot(x, y)
        if np.linalg.norm(y - lam * x) <= tol * max(abs(lam), np.finfo(float).tiny):
            return lam, x, True
        x = y / ny
    return lam, x, False


def spectral_radius(a, tol=1e-10, restarts=5, max_iter=20_000, seed=DEFAULT_SEED):
    """Spectral radius from seeded power-iteration restarts, with QR fallback.

    When the restarts fail to converge or disagree by more than ``tol``
    (typical for several eigenvalues of equal modulus) the answer comes
    from :func:`eig` instead.
    """
    arr = as_matrix(a, square=True)
    n = arr.shape[0]
    rng = np.random.default_rng(seed)
    moduli = []
    for _ in range(restarts):
        x0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        lam, _, ok = power_iteration(arr, x0, max_iter=max_iter, tol=tol * 1e-2)
        if not ok:
            moduli = None
            break
        moduli.append(abs(lam))
    if moduli and max(moduli) - min(moduli) <= tol:
        return float(max(moduli))
    return eig(arr, n_vectors=0).spectral_radius
