"""Open quantum baker's maps, their spectra and eigenstate localization."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from fuplab.fractal_sets import IndexSet, _check_alphabet, cantor_set, depth_for, dilated_cantor
from fuplab.numerics import NonConvergenceError, dft_matrix, eig

GAP_N_CAP = 2187
DEFAULT_TOL_FACTOR = 10.0
N_TOP = 10


def bump_cutoff(x):
    """``exp(1 - 1/(4x(1-x)))`` on ``(0, 1)`` and ``0`` elsewhere."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    return np.where(inside, np.exp(1.0 - 1.0 / (4.0 * xs * (1.0 - xs))), 0.0)


CUTOFFS = {
    "one": lambda x: np.ones(np.shape(x)),
    "bump": bump_cutoff,
}


@dataclass(frozen=True)
class BakerSpec:
    M: int
    A: tuple
    N: int
    chi: str = "bump"

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"M must be an integer >= 2, got {self.M!r}")
        object.__setattr__(self, "A", tuple(sorted(set(int(a) for a in self.A))))
        _check_alphabet(self.M, self.A)
        if int(self.N) != self.N or self.N < self.M or self.N % self.M:
            raise ValueError(f"N must be a positive multiple of M={self.M}, got {self.N!r}")
        if self.chi not in CUTOFFS:
            raise ValueError(f"unknown cutoff {self.chi!r}; expected one of {sorted(CUTOFFS)}")

    @property
    def k(self):
        return depth_for(self.M, self.N)

    def cutoff_samples(self):
        n = self.N // self.M
        return CUTOFFS[self.chi](np.arange(n) / n)

    def mask(self):
        """0/1 diagonal of the alphabet projector."""
        n = self.N // self.M
        return np.isin(np.arange(self.N) // n, self.A).astype(float)


def build_baker(spec):
    """``F_N^* diag(chi F_{N/M} chi, ..., chi F_{N/M} chi) I_A`` as a dense matrix."""
    M, N = spec.M, spec.N
    n = N // M
    chi = spec.cutoff_samples()
    block = chi[:, None] * dft_matrix(n) * chi[None, :]
    mid = np.zeros((N, N), dtype=complex)
    for a in spec.A:
        mid[a * n:(a + 1) * n, a * n:(a + 1) * n] = block
    return dft_matrix(N).conj() @ mid


def active_columns(spec):
    """Columns of ``B_N`` that can be nonzero: masked-in and ``chi != 0``."""
    chi = np.tile(spec.cutoff_samples(), spec.M)
    return np.flatnonzero((spec.mask() > 0) & (chi != 0))


@dataclass
class BakerSpectrum:
    spec: BakerSpec
    eigenvalues: np.ndarray  # nonzero-block spectrum, descending modulus
    spectral_radius: float
    residual_max: float
    eigenvectors: np.ndarray | None
    n_zero: int  # eigenvalues contributed by the annihilated columns

    def top(self, n=N_TOP):
        vals = list(self.eigenvalues[:n])
        vals += [0j] * (n - len(vals))
        return np.array(vals[:n])


def baker_spectrum(spec, n_vectors=N_TOP, tol=1e-8, B=None):
    """Spectrum of ``B_N`` through its compression to the active columns.

    With ``S`` the active columns, ``B = B[:, S] P_S`` so the nonzero
    spectrum of ``B`` is that of ``B[S, S]``; an eigenvector ``w`` of the
    compression lifts to ``B[:, S] w``.  Lifted residuals are measured
    against the full matrix.
    """
    if B is None:
        B = build_baker(spec)
    S = active_columns(spec)
    if S.size == 0:
        return BakerSpectrum(spec, np.zeros(0, complex), 0.0, 0.0, None, spec.N)
    C = np.ascontiguousarray(B[np.ix_(S, S)])
    rep = eig(C, tol=tol, n_vectors=n_vectors)
    vecs = None
    resid = 0.0
    if rep.n_vectors:
        W = rep.eigenvectors
        U = B[:, S] @ W
        nrm = np.linalg.norm(U, axis=0)
        keep = nrm > 0
        U[:, keep] /= nrm[keep]
        lam = rep.eigenvalues[:rep.n_vectors]
        if np.any(~keep & (np.abs(lam) > 0)):
            raise NonConvergenceError("eigenvector lifted to zero", last_iterate=rep.eigenvalues)
        r = np.linalg.norm(B @ U - U * lam[None, :], axis=0)
        resid = float(r[keep].max()) if keep.any() else 0.0
        if resid > tol:
            raise NonConvergenceError(
                f"lifted eigenpair residual {resid:.3e} exceeds tol={tol:.1e}",
                last_iterate=rep.eigenvalues, detail={"residual_max": resid},
            )
        vecs = U
    return BakerSpectrum(spec, rep.eigenvalues, rep.spectral_radius, resid, vecs, spec.N - S.size)


@dataclass
class GapRow:
    N: int
    k: int
    radius: float
    top: np.ndarray

    def csv_row(self):
        row = [self.N, self.k, self.radius]
        for lam in self.top:
            row += [lam.real, lam.imag, abs(lam)]
        return row


def gap_csv_header(n_top=N_TOP):
    cols = ["N", "k", "radius"]
    for i in range(1, n_top + 1):
        cols += [f"lambda{i}_re", f"lambda{i}_im", f"lambda{i}_abs"]
    return cols


def default_gap_Ns(M, cap=GAP_N_CAP):
    """Powers of ``M`` up to ``cap`` and the multiples of ``M`` adjacent to them."""
    out = set()
    p = M
    while p <= cap:
        out.update(n for n in (p - M, p, p + M) if M <= n <= cap)
        p *= M
    return sorted(out)


def gap_experiment(M, A, chi="bump", N_list=None, cap=GAP_N_CAP, workers=1, tol=1e-8):
    """Spectral radius of ``B_N`` for each ``N`` (sorted ascending)."""
    Ns = default_gap_Ns(M, cap) if N_list is None else sorted(set(int(n) for n in N_list))
    for N in Ns:
        if N > cap:
            raise ValueError(f"N={N} exceeds the cap {cap}")
    specs = [BakerSpec(M, A, N, chi) for N in Ns]

    def one(spec):
        sp = baker_spectrum(spec, n_vectors=N_TOP, tol=tol)
        return GapRow(spec.N, spec.k, sp.spectral_radius, sp.top())

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, specs))
    return [one(s) for s in specs]


def localization_radius(spec, rho):
    return math.floor((spec.M + 2) * spec.N ** (1.0 - rho))


def localization_set(spec, rho):
    """``C_k(N)`` thickened by all shifts ``|m| <= (M + 2) N**(1 - rho)``, modulo ``N``."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    M, N, k = spec.M, spec.N, spec.k
    C = cantor_set(M, spec.A, k) if N == M**k else dilated_cantor(M, spec.A, k, N)
    base = C.as_array()
    R = localization_radius(spec, rho)
    if 2 * R + 1 >= N:
        return IndexSet(N, tuple(range(N)))
    shifts = np.arange(-R, R + 1)
    members = np.unique((base[:, None] + shifts[None, :]) % N)
    return IndexSet(N, tuple(int(m) for m in members))


@dataclass
class EigenLocalization:
    eigenvalue: complex
    position_mass: float
    fourier_mass: float
    bound: float
    violated: bool


@dataclass
class LocalizationReport:
    spec: BakerSpec
    rho: float
    nu: float
    tol_N: float
    X_rho: IndexSet
    pairs: list

    @property
    def violations(self):
        return [p for p in self.pairs if p.violated]

    def to_json(self):
        return {
            "M": self.spec.M, "A": list(self.spec.A), "N": self.spec.N, "chi": self.spec.chi,
            "k": self.spec.k, "rho": self.rho, "nu": self.nu, "tol_N": self.tol_N,
            "X_rho": self.X_rho.to_json(),
            "pairs": [
                {"re": p.eigenvalue.real, "im": p.eigenvalue.imag, "abs": abs(p.eigenvalue),
                 "position_mass": p.position_mass, "fourier_mass": p.fourier_mass,
                 "bound": p.bound, "violated": p.violated}
                for p in self.pairs
            ],
            "n_violations": len(self.violations),
        }


def concentration_check(spec, rho, nu, spectrum=None, tol_N=None):
    """Check ``||u|| <= M**nu |lam|**(-rho k) ||1_X u|| + tol_N`` on eigenpairs with ``|lam| >= M**-nu``.

    ``tol_N`` stands in for the rapidly decaying remainder and defaults to
    ``10 N**-2``.  Violations are reported, not raised.
    """
    if not nu > 0:
        raise ValueError("nu must be positive")
    M, N, k = spec.M, spec.N, spec.k
    if tol_N is None:
        tol_N = DEFAULT_TOL_FACTOR * N**-2.0
    floor = float(M) ** -nu
    if spectrum is None:
        full = baker_spectrum(spec, n_vectors=0)
        n_keep = int(np.sum(np.abs(full.eigenvalues) >= floor))
        spectrum = baker_spectrum(spec, n_vectors=n_keep)
    X = localization_set(spec, rho)
    ind = X.indicator().astype(bool)
    F = dft_matrix(N)
    pairs = []
    for i in range(spectrum.eigenvectors.shape[1] if spectrum.eigenvectors is not None else 0):
        lam = complex(spectrum.eigenvalues[i])
        if abs(lam) < floor:
            continue
        u = spectrum.eigenvectors[:, i]
        u = u / np.linalg.norm(u)
        pos = float(np.linalg.norm(u[ind]))
        four = float(np.linalg.norm((F @ u)[ind]))
        bound = float(M) ** nu * abs(lam) ** (-rho * k) * pos + tol_N
        pairs.append(EigenLocalization(lam, pos, four, bound, bool(1.0 > bound)))
    return LocalizationReport(spec, rho, nu, tol_N, X, pairs)
