"""Compiled inner loops for the dense complex eigensolver and the Jacobi SVD.

Everything here works on contiguous complex128 arrays and is called from
:mod:`fuplab.numerics`, which owns validation and error reporting.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def hessenberg_reduce(a, want_q):
    """Householder reduction of ``a`` (overwritten) to upper Hessenberg form.

    Returns the accumulated unitary ``q`` with ``a_in = q @ h @ q^H`` when
    ``want_q`` is set, otherwise a 1x1 placeholder.
    """
    n = a.shape[0]
    if want_q:
        q = np.eye(n, dtype=np.complex128)
    else:
        q = np.zeros((1, 1), dtype=np.complex128)
    v = np.zeros(n, dtype=np.complex128)
    for k in range(n - 2):
        m = n - k - 1
        xnorm2 = 0.0
        for i in range(k + 1, n):
            xnorm2 += a[i, k].real ** 2 + a[i, k].imag ** 2
        tail2 = xnorm2 - (a[k + 1, k].real ** 2 + a[k + 1, k].imag ** 2)
        if tail2 == 0.0:
            continue
        xnorm = np.sqrt(xnorm2)
        x0 = a[k + 1, k]
        ax0 = abs(x0)
        phase = x0 / ax0 if ax0 > 0.0 else 1.0 + 0.0j
        alpha = -phase * xnorm
        for i in range(m):
            v[i] = a[k + 1 + i, k]
        v[0] -= alpha
        vnorm2 = 0.0
        for i in range(m):
            vnorm2 += v[i].real ** 2 + v[i].imag ** 2
        scale = 1.0 / np.sqrt(vnorm2)
        for i in range(m):
            v[i] *= scale
        # rows k+1.. : A <- (I - 2 v v^H) A, row-major traversal
        srow = np.zeros(n - k, dtype=np.complex128)
        for i in range(m):
            cv = np.conj(v[i])
            for j in range(k, n):
                srow[j - k] += cv * a[k + 1 + i, j]
        for i in range(m):
            vi2 = 2.0 * v[i]
            for j in range(k, n):
                a[k + 1 + i, j] -= vi2 * srow[j - k]
        # columns k+1.. : A <- A (I - 2 v v^H)
        for i in range(n):
            s = 0.0 + 0.0j
            for j in range(m):
                s += a[i, k + 1 + j] * v[j]
            s *= 2.0
            for j in range(m):
                a[i, k + 1 + j] -= s * np.conj(v[j])
        for i in range(k + 2, n):
            a[i, k] = 0.0
        if want_q:
            for i in range(n):
                s = 0.0 + 0.0j
                for j in range(m):
                    s += q[i, k + 1 + j] * v[j]
                s *= 2.0
                for j in range(m):
                    q[i, k + 1 + j] -= s * np.conj(v[j])
    return q


@njit(cache=True, nogil=True)
def _givens(f, g):
    # returns (c, s) with [[c, s], [-conj(s), c]] @ [f, g] = [r, 0], c real
    af = abs(f)
    ag = abs(g)
    if ag == 0.0:
        return 1.0, 0.0 + 0.0j
    if af == 0.0:
        return 0.0, np.conj(g) / ag
    norm = np.sqrt(af * af + ag * ag)
    c = af / norm
    s = (f / af) * np.conj(g) / norm
    return c, s


@njit(cache=True, nogil=True)
def hessenberg_qr_eigvals(h, defl_tol, max_iter_per_eig):
    """Shifted QR iteration on an upper Hessenberg matrix (overwritten).

    Only the active diagonal window is updated, so ``h`` does not end up as
    a Schur form.  Returns ``(eigvals, status, stuck_lo, stuck_hi)`` where
    ``status`` is 0 on success and 1 when the per-eigenvalue iteration cap
    was exhausted on the window ``[stuck_lo, stuck_hi]``.
    """
    n = h.shape[0]
    w = np.zeros(n, dtype=np.complex128)
    anorm = 0.0
    for i in range(n):
        for j in range(max(0, i - 1), n):
            anorm = max(anorm, abs(h[i, j]))
    cs = np.zeros(n, dtype=np.float64)
    ss = np.zeros(n, dtype=np.complex128)
    hi = n - 1
    its = 0
    while hi >= 0:
        lo = hi
        while lo > 0:
            scale = abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])
            if scale == 0.0:
                scale = anorm
            if abs(h[lo, lo - 1]) <= defl_tol * scale:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            w[hi] = h[hi, hi]
            hi -= 1
            its = 0
            continue
        if its >= max_iter_per_eig:
            return w, 1, lo, hi
        its += 1
        if its % 11 == 0:
            # exceptional shift breaks rare stagnation cycles
            mu = h[hi, hi] + 0.75 * abs(h[hi, hi - 1]) * (1.0 + 0.5j)
        else:
            a = h[hi - 1, hi - 1]
            b = h[hi - 1, hi]
            c = h[hi, hi - 1]
            d = h[hi, hi]
            tr_half = 0.5 * (a + d)
            disc = np.sqrt(0.25 * (a - d) * (a - d) + b * c)
            l1 = tr_half + disc
            l2 = tr_half - disc
            mu = l1 if abs(l1 - d) <= abs(l2 - d) else l2
        for i in range(lo, hi + 1):
            h[i, i] -= mu
        # H - mu I = Q R
        for k in range(lo, hi):
            c, s = _givens(h[k, k], h[k + 1, k])
            cs[k] = c
            ss[k] = s
            for j in range(k, hi + 1):
                t1 = h[k, j]
                t2 = h[k + 1, j]
                h[k, j] = c * t1 + s * t2
                h[k + 1, j] = -np.conj(s) * t1 + c * t2
        # R Q + mu I
        for k in range(lo, hi):
            c = cs[k]
            s = ss[k]
            top = min(k + 2, hi + 1)
            for i in range(lo, top):
                t1 = h[i, k]
                t2 = h[i, k + 1]
                h[i, k] = c * t1 + np.conj(s) * t2
                h[i, k + 1] = -s * t1 + c * t2
        for i in range(lo, hi + 1):
            h[i, i] += mu
    return w, 0, 0, 0


@njit(cache=True, nogil=True)
def hessenberg_inverse_iteration(h, lam, x0, n_steps, shift_floor):
    """Inverse iteration ``(h - lam I) y = x`` on an upper Hessenberg ``h``.

    LU with adjacent-row pivoting, O(n^2) per solve.  Zero pivots are
    replaced by ``shift_floor``.  Returns the normalized last iterate.
    """
    n = h.shape[0]
    u = h.copy()
    for i in range(n):
        u[i, i] -= lam
    mult = np.zeros(n, dtype=np.complex128)
    swap = np.zeros(n, dtype=np.bool_)
    for k in range(n - 1):
        if abs(u[k + 1, k]) > abs(u[k, k]):
            for j in range(k, n):
                t = u[k, j]
                u[k, j] = u[k + 1, j]
                u[k + 1, j] = t
            swap[k] = True
        if u[k, k] == 0.0:
            u[k, k] = shift_floor
        m = u[k + 1, k] / u[k, k]
        mult[k] = m
        u[k + 1, k] = 0.0
        for j in range(k + 1, n):
            u[k + 1, j] -= m * u[k, j]
    if u[n - 1, n - 1] == 0.0:
        u[n - 1, n - 1] = shift_floor
    y = x0.copy()
    for _ in range(n_steps):
        for k in range(n - 1):
            if swap[k]:
                t = y[k]
                y[k] = y[k + 1]
                y[k + 1] = t
            y[k + 1] -= mult[k] * y[k]
        for i in range(n - 1, -1, -1):
            s = y[i]
            for j in range(i + 1, n):
                s -= u[i, j] * y[j]
            y[i] = s / u[i, i]
        nrm = 0.0
        for i in range(n):
            nrm += y[i].real ** 2 + y[i].imag ** 2
        nrm = np.sqrt(nrm)
        if nrm == 0.0 or not np.isfinite(nrm):
            break
        for i in range(n):
            y[i] /= nrm
    return y


@njit(cache=True, nogil=True)
def jacobi_svd_values(a, tol, max_sweeps):
    """One-sided (Hestenes) Jacobi: singular values of ``a`` (overwritten).

    Returns ``(values, sweeps)``; ``sweeps == max_sweeps + 1`` signals that
    the off-orthogonality never dropped below ``tol``.
    """
    m, n = a.shape
    fro2 = 0.0
    for i in range(m):
        for j in range(n):
            fro2 += a[i, j].real ** 2 + a[i, j].imag ** 2
    # columns below roundoff of the whole matrix count as zero
    negligible = 1e-30 * fro2
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0 + 0.0j
                for i in range(m):
                    alpha += a[i, p].real ** 2 + a[i, p].imag ** 2
                    beta += a[i, q].real ** 2 + a[i, q].imag ** 2
                    gamma += np.conj(a[i, p]) * a[i, q]
                ag = abs(gamma)
                if alpha <= negligible or beta <= negligible:
                    continue
                if ag == 0.0 or ag <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                phase = gamma / ag
                zeta = (beta - alpha) / (2.0 * ag)
                sgn = 1.0 if zeta >= 0.0 else -1.0
                t = sgn / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    ap = a[i, p]
                    aq = a[i, q] * np.conj(phase)
                    a[i, p] = c * ap - s * aq
                    a[i, q] = (s * ap + c * aq) * phase
        if not rotated:
            out = np.zeros(n, dtype=np.float64)
            for j in range(n):
                acc = 0.0
                for i in range(m):
                    acc += a[i, j].real ** 2 + a[i, j].imag ** 2
                out[j] = np.sqrt(acc)
            return out, sweep
    out = np.zeros(n, dtype=np.float64)
    for j in range(n):
        acc = 0.0
        for i in range(m):
            acc += a[i, j].real ** 2 + a[i, j].imag ** 2
        out[j] = np.sqrt(acc)
    return out, max_sweeps + 1
