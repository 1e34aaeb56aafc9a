"""Fractal uncertainty operators, exponent formulas and decay experiments."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import mpmath
import numpy as np

from fuplab.fractal_sets import (
    AtomicMeasure,
    IndexSet,
    cantor_dimension,
    cantor_set,
    depth_for,
    dilated_cantor,
)
from fuplab.numerics import dft_matrix, operator_norm, unit_roots

BOUNDS_PREC = 256
MAX_DECAY_N = 4096


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def _one(x, y):
    return np.ones(np.broadcast(x, y).shape)


@dataclass(frozen=True)
class PhaseKernel:
    """Phase ``phi`` and amplitude ``amp`` with analytic derivatives.

    All callables take broadcastable arrays ``(x, y)``.  ``domain`` is the
    rectangle ``((x0, x1), (y0, y1))`` on which the mixed derivative is
    required to keep one sign and stay away from zero.
    """

    name: str
    phi: Callable
    dphi_dx: Callable
    d2phi_dxdy: Callable
    amp: Callable = _one
    damp_dx: Callable = _zero
    domain: tuple = ((-np.inf, np.inf), (-np.inf, np.inf))
    # minimal |x - y| allowed; None when the phase is smooth everywhere
    diagonal_guard: float | None = None
    amplitude: str = "one"

    def check_point_pairs(self, xs, ys):
        (x0, x1), (y0, y1) = self.domain
        eps = 1e-12
        if self.diagonal_guard is not None:
            gap = np.abs(xs[:, None] - ys[None, :])
            i, j = np.unravel_index(np.argmin(gap), gap.shape)
            if gap[i, j] <= self.diagonal_guard:
                raise ValueError(
                    f"pair (x={xs[i]!r}, y={ys[j]!r}) is within {self.diagonal_guard} of the diagonal"
                )
        bad_x = np.flatnonzero((xs < x0 - eps) | (xs > x1 + eps))
        if bad_x.size:
            raise ValueError(f"x = {xs[bad_x[0]]!r} lies outside the {self.name} domain {self.domain[0]}")
        bad_y = np.flatnonzero((ys < y0 - eps) | (ys > y1 + eps))
        if bad_y.size:
            raise ValueError(f"y = {ys[bad_y[0]]!r} lies outside the {self.name} domain {self.domain[1]}")

    def mixed_derivative_range(self, samples=64):
        """(min, max) of ``d2phi/dxdy`` on a ``samples x samples`` domain grid."""
        (x0, x1), (y0, y1) = _finite_domain(self.domain)
        xs = np.linspace(x0, x1, samples)
        ys = np.linspace(y0, y1, samples)
        vals = self.d2phi_dxdy(xs[:, None], ys[None, :]) * np.ones((samples, samples))
        return float(vals.min()), float(vals.max())


def _finite_domain(domain):
    (x0, x1), (y0, y1) = domain
    if not all(np.isfinite([x0, x1, y0, y1])):
        return ((0.0, 1.0), (0.0, 1.0))
    return domain


def bump_profile(center=0.5, radius=1.0):
    """``psi(t) = exp(1 - 1/(1 - u**2))``, ``u = (t - center)/radius``, and its derivative."""

    def psi(t):
        u = (np.asarray(t, dtype=float) - center) / radius
        inside = np.abs(u) < 1
        uu = np.where(inside, u, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - uu**2)), 0.0)

    def dpsi(t):
        u = (np.asarray(t, dtype=float) - center) / radius
        inside = np.abs(u) < 1
        uu = np.where(inside, u, 0.0)
        val = np.exp(1.0 - 1.0 / (1.0 - uu**2))
        return np.where(inside, val * (-2.0 * uu / (1.0 - uu**2) ** 2) / radius, 0.0)

    return psi, dpsi


def _amplitude(kind, center=0.5, radius=1.0):
    if kind == "one":
        return _one, _zero
    if kind == "bump":
        psi, dpsi = bump_profile(center, radius)
        return (lambda x, y: psi(x) * psi(y)), (lambda x, y: dpsi(x) * psi(y))
    raise ValueError(f"unknown amplitude {kind!r}; expected 'one' or 'bump'")


def bilinear_kernel(scale=1.0, amplitude="one", domain=((0.0, 1.0), (0.0, 1.0))):
    """``phi(x, y) = scale * x * y``."""
    if scale == 0:
        raise ValueError("bilinear scale must be nonzero")
    amp, damp = _amplitude(amplitude)
    return PhaseKernel(
        name="bilinear",
        phi=lambda x, y: scale * x * y,
        dphi_dx=lambda x, y: scale * y + 0.0 * x,
        d2phi_dxdy=lambda x, y: scale + 0.0 * x * y,
        amp=amp, damp_dx=damp, domain=domain, amplitude=amplitude,
    )


def fourier_kernel(amplitude="one", domain=((0.0, 1.0), (0.0, 1.0))):
    """``phi(x, y) = -2 pi x y``."""
    k = bilinear_kernel(-2.0 * np.pi, amplitude, domain)
    return PhaseKernel(**{**k.__dict__, "name": "fourier"})


def circle_log_kernel(domain=((0.0, 0.25), (0.5, 0.75)), amplitude="one"):
    """``phi(x, y) = 2 log|x - y|`` on a rectangle away from the diagonal."""
    (x0, x1), (y0, y1) = domain
    gap = max(y0 - x1, x0 - y1)
    if not gap > 0:
        raise ValueError("circle-log domain must be separated from the diagonal")
    amp, damp = _amplitude(amplitude)
    return PhaseKernel(
        name="circle-log",
        phi=lambda x, y: 2.0 * np.log(np.abs(x - y)),
        dphi_dx=lambda x, y: 2.0 / (x - y),
        d2phi_dxdy=lambda x, y: 2.0 / (x - y) ** 2,
        amp=amp, damp_dx=damp, domain=domain, diagonal_guard=0.5 * gap,
        amplitude=amplitude,
    )


def custom_kernel(name, phi, dphi_dx, d2phi_dxdy, domain, amp=None, damp_dx=None):
    """A user phase; all three phase callbacks are mandatory."""
    if not all(callable(f) for f in (phi, dphi_dx, d2phi_dxdy)):
        raise ValueError("custom phases need phi, dphi_dx and d2phi_dxdy callbacks")
    if (amp is None) != (damp_dx is None):
        raise ValueError("supply both amp and damp_dx or neither")
    return PhaseKernel(
        name=name, phi=phi, dphi_dx=dphi_dx, d2phi_dxdy=d2phi_dxdy,
        amp=amp or _one, damp_dx=damp_dx or _zero, domain=domain,
        amplitude="custom" if amp else "one",
    )


PHASES = {
    "bilinear": bilinear_kernel,
    "fourier": fourier_kernel,
    "circle-log": circle_log_kernel,
}


def submatrix_operator(X, Y):
    """The block of the unitary DFT with rows in ``X`` and columns in ``Y``."""
    if X.N != Y.N:
        raise ValueError(f"modulus mismatch: {X.N} vs {Y.N}")
    N = X.N
    rows = X.as_array()
    cols = Y.as_array()
    return unit_roots(N)[np.outer(rows, cols) % N] / np.sqrt(N)


def fup_norm(X, Y, **kw):
    """``||1_X F_N 1_Y||`` on ``l^2(Z_N)``."""
    if len(X) == 0 or len(Y) == 0:
        return 0.0
    return operator_norm(submatrix_operator(X, Y), **kw)


def kernel_operator(muX, muY, kernel, h):
    """Symmetrized quadrature matrix of the oscillatory integral operator.

    Entry ``(i, j)`` is ``exp(i phi(x_i, y_j)/h) G(x_i, y_j) sqrt(w_i w_j)``,
    so the matrix operator norm equals the ``L^2(muY) -> L^2(muX)`` norm.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    xs, ys = muX.points, muY.points
    kernel.check_point_pairs(xs, ys)
    X, Y = xs[:, None], ys[None, :]
    ph = kernel.phi(X, Y) / h
    return (np.exp(1j * ph) * kernel.amp(X, Y)
            * np.sqrt(muX.weights)[:, None] * np.sqrt(muY.weights)[None, :])


def apply_operator(muX, muY, kernel, h, f):
    """Values of the operator applied to ``f`` (sampled on ``muY`` atoms) at ``muX`` atoms."""
    B = kernel_operator(muX, muY, kernel, h)
    return (B @ (np.asarray(f) * np.sqrt(muY.weights))) / np.sqrt(muX.weights)


def rescale_measure(mu, sigma, delta):
    """Push ``mu`` forward by ``x -> sigma x`` and multiply masses by ``sigma**delta``."""
    a, b = mu.interval
    return AtomicMeasure(mu.points * sigma, mu.weights * sigma**delta, (a * sigma, b * sigma))


# --- exponent formulas -----------------------------------------------------

@dataclass(frozen=True)
class LogValue:
    """A positive number kept as ``mantissa * 10**exponent``."""

    log10: float
    mantissa: float
    exponent: int
    value: object = field(repr=False, compare=False, default=None)

    @classmethod
    def from_mpf(cls, x):
        lg = mpmath.log10(x)
        e = int(mpmath.floor(lg))
        return cls(log10=float(lg), mantissa=float(mpmath.power(10, lg - e)), exponent=e, value=x)

    def to_json(self):
        return {"log10": self.log10, "mantissa": self.mantissa, "exponent": self.exponent}


@dataclass
class BoundsTable:
    delta: float
    delta_p: float
    C_R: float
    entries: dict
    notes: dict

    def __getitem__(self, key):
        return self.entries[key]

    def to_json(self):
        out = {"delta": self.delta, "delta_p": self.delta_p, "C_R": self.C_R}
        for key, val in self.entries.items():
            if isinstance(val, LogValue):
                out[key] = val.to_json()
                out[f"log10_{key}"] = val.log10
            else:
                out[key] = val
        out["notes"] = dict(self.notes)
        return out


def bounds_table(delta, delta_p, C_R, M=None, A=None):
    """Every explicit exponent and constant, evaluated at 256-bit precision.

    Keys: ``eps0`` (the headline exponent), ``C_R_prime``, ``L_min``, ``theta``,
    ``eps1`` and ``eps0_prop`` (the fixed-base proposition at ``L = L_min``),
    ``hyperbolic_gain``/``hyperbolic_beta``, ``oqm_eps0`` and, when an
    alphabet is supplied, ``baker_gain``/``baker_beta``.
    """
    for name, d in (("delta", delta), ("delta'", delta_p)):
        if not 0 < d < 1:
            raise ValueError(f"{name} must lie strictly between 0 and 1, got {d}")
    if not C_R >= 1:
        raise ValueError("C_R must be >= 1")
    entries, notes = {}, {}
    with mpmath.workprec(BOUNDS_PREC):
        d, dp, c = mpmath.mpf(delta), mpmath.mpf(delta_p), mpmath.mpf(C_R)
        inv = 1 / (d * (1 - d))
        inv_p = 1 / (dp * (1 - dp))
        L = LogValue.from_mpf
        entries["eps0"] = L(mpmath.power(5 * c, -80 * (inv + inv_p)))
        cp = mpmath.power(2 * c, 2 / (1 - max(d, dp)))
        entries["C_R_prime"] = L(cp)
        lbound = mpmath.power(2 * cp * mpmath.power(6 * c, 1 / d + 1 / dp), 6)
        lmin = mpmath.ceil(lbound - mpmath.mpf(10) ** (-40) * lbound)
        entries["L_min"] = L(lmin)
        entries["theta"] = L(1 / (8 * cp**2))
        eps1 = mpmath.mpf("1e-5") * mpmath.power(mpmath.power(c, 1 / d + 1 / dp) * cp, -4) * mpmath.power(lmin, -5)
        entries["eps1"] = L(eps1)
        entries["eps0_prop"] = L(-mpmath.log1p(-eps1) / (2 * mpmath.log(lmin)))
        hyp_gain = mpmath.power(13 * c, -320 * inv)
        entries["hyperbolic_gain"] = L(hyp_gain)
        entries["hyperbolic_beta"] = float(mpmath.mpf(1) / 2 - d + hyp_gain)
        entries["oqm_eps0"] = L(mpmath.power(5 * c, -160 * inv))
        if M is not None:
            if A is None:
                raise ValueError("baker bounds need both M and the alphabet")
            nA = len(A)
            if not 1 < nA < M:
                raise ValueError("baker bounds need 1 < |A| < M")
            db = mpmath.log(nA) / mpmath.log(M)
            entries["baker_delta"] = float(db)
            entries["baker_trivial"] = float(max(mpmath.mpf(0), mpmath.mpf(1) / 2 - db))
            if db <= mpmath.mpf(1) / 2:
                # M**(3 delta) = |A|**3 exactly
                gain = mpmath.power(40 * mpmath.mpf(nA) ** 3, -160 / (db * (1 - db)))
                entries["baker_gain"] = L(gain)
                entries["baker_beta"] = float(mpmath.mpf(1) / 2 - db + gain)
                entries["baker_leading"] = float(mpmath.mpf(1) / 2 - db)
            else:
                notes["baker_beta"] = "delta above 1/2, no explicit constant"
    return BoundsTable(float(delta), float(delta_p), float(C_R), entries, notes)


# --- rescaling -------------------------------------------------------------

@dataclass
class RescaledKernel:
    kernel: PhaseKernel
    h: float
    sigma: float
    K: int
    K0: int
    m: int
    x_mass_factor: float
    y_mass_factor: float


def rescale_kernel(kernel, h, m, L, delta=0.5, delta_p=0.5, samples=64):
    """Normalize the mixed derivative to ``(1/2, 2)`` and ``h`` to ``L**-K``.

    Requires ``2**(m-1) < |d2phi| < 2**(m+1)`` on the kernel domain, checked
    on a ``samples x samples`` grid including the domain edges.  Returns the
    rescaled kernel on ``sigma * domain`` together with ``h' = L**-K``,
    ``sigma in [1, sqrt(L))`` and the smallest ``K0 >= 0`` with
    ``L**K0 >= 2**m / sigma``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    L = int(L)
    if L < 2:
        raise ValueError("L must be >= 2")
    (x0, x1), (y0, y1) = _finite_domain(kernel.domain)
    xs = np.linspace(x0, x1, samples)
    ys = np.linspace(y0, y1, samples)
    d2 = np.abs(kernel.d2phi_dxdy(xs[:, None], ys[None, :]) * np.ones((samples, samples)))
    lo, hi = 2.0 ** (m - 1), 2.0 ** (m + 1)
    bad = np.argwhere(~((d2 > lo) & (d2 < hi)))
    if bad.size:
        i, j = bad[0]
        raise ValueError(
            f"|d2phi/dxdy| = {d2[i, j]!r} at (x={xs[i]!r}, y={ys[j]!r}) is outside ({lo}, {hi}) for m={m}"
        )
    t = 2.0**m / h
    K = int(math.floor(math.log(t) / math.log(L)))
    # relative slack absorbs rounding in 2**m / h when h is an exact power of L
    slack = 1 + 1e-12
    while float(L) ** K > t * slack:
        K -= 1
    while float(L) ** (K + 1) <= t * slack:
        K += 1
    h_new = float(L) ** -K
    sigma = max(1.0, math.sqrt(t * h_new))
    K0 = 0
    while float(L) ** K0 < 2.0**m / sigma:
        K0 += 1

    c = 2.0**-m * sigma**2
    g = sigma ** (-(delta + delta_p) / 2)
    base = kernel

    new = PhaseKernel(
        name=f"{base.name}~",
        phi=lambda x, y: c * base.phi(x / sigma, y / sigma),
        dphi_dx=lambda x, y: c / sigma * base.dphi_dx(x / sigma, y / sigma),
        d2phi_dxdy=lambda x, y: 2.0**-m * base.d2phi_dxdy(x / sigma, y / sigma),
        amp=lambda x, y: g * base.amp(x / sigma, y / sigma),
        damp_dx=lambda x, y: g / sigma * base.damp_dx(x / sigma, y / sigma),
        domain=((x0 * sigma, x1 * sigma), (y0 * sigma, y1 * sigma)),
        diagonal_guard=None if base.diagonal_guard is None else base.diagonal_guard * sigma,
        amplitude=base.amplitude,
    )
    return RescaledKernel(new, h_new, sigma, K, K0, m, sigma**delta, sigma**delta_p)


def dyadic_exponent(kernel, samples=64):
    """An ``m`` with ``2**(m-1) < |d2phi| < 2**(m+1)`` on the sampled domain, or ``None``."""
    lo, hi = kernel.mixed_derivative_range(samples)
    if lo * hi <= 0:
        return None
    a, b = sorted((abs(lo), abs(hi)))
    for m in range(int(math.floor(math.log2(b))) - 1, int(math.ceil(math.log2(a))) + 2):
        if 2.0 ** (m - 1) < a and b < 2.0 ** (m + 1):
            return m
    return None


# --- decay experiments -----------------------------------------------------

@dataclass
class DecayRow:
    N: int
    k: int
    size: int
    norm: float
    trivial_bound: float

    def csv_row(self):
        return [self.N, self.k, self.norm, self.trivial_bound, math.log10(self.N),
                math.log10(self.norm) if self.norm > 0 else float("-inf")]


@dataclass
class DecayResult:
    M: int
    A: tuple
    mode: str
    rows: list
    beta_obs: float | None

    CSV_HEADER = ("N", "k", "norm", "trivial_bound", "log10N", "log10norm")


def decay_Ns(M, ks, mode, cap=MAX_DECAY_N):
    out = []
    for k in ks:
        if mode == "powers":
            if M**k <= cap:
                out.append((M**k, k))
        elif mode == "all-multiples":
            for N in range(M**k, min(M ** (k + 1) - 1, cap) + 1, M):
                out.append((N, k))
        else:
            raise ValueError(f"unknown mode {mode!r}; expected 'powers' or 'all-multiples'")
    return out


def fit_decay_exponent(rows):
    """``-slope`` of the least-squares line through ``(log N, log norm)``, excluding ``k = 1``."""
    pts = [(math.log(r.N), math.log(r.norm)) for r in rows if r.k >= 2 and r.norm > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope)


def decay_experiment(M, A, ks, mode="powers", cap=MAX_DECAY_N, workers=1, norm_tol=1e-13):
    """``||1_C F_N 1_C||`` for the dilated Cantor sets ``C = C_k(N)``."""
    A = tuple(sorted(set(A)))
    jobs = decay_Ns(M, ks, mode, cap)
    if any(N > cap for N, _ in jobs):
        raise ValueError(f"N exceeds the cap {cap}")

    def one(job):
        N, k = job
        C = cantor_set(M, A, k) if N == M**k else dilated_cantor(M, A, k, N)
        nrm = fup_norm(C, C, tol=norm_tol)
        return DecayRow(N, k, len(C), nrm, min(1.0, len(C) / math.sqrt(N)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = [one(j) for j in jobs]
    return DecayResult(M, A, mode, rows, fit_decay_exponent(rows))


def trivial_exponent(M, A):
    """The volume-bound exponent ``max(0, 1/2 - delta)``."""
    return max(0.0, 0.5 - cantor_dimension(M, A))
