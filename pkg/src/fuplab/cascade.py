"""Scale-by-scale contraction of oscillatory integral operators on trees.

For a ``Y``-tree node ``J`` with center ``y_J`` the normalized partial
operator is

    F_J(x) = (1/mu_Y(J)) sum_{y in J} exp(i (phi(x, y) - phi(x, y_J))/h) G(x, y) f(y) w_y

and ``E_J`` is the piecewise constant function equal to the ``C_theta(I)``
norm of ``F_J`` on each ``X``-tree node ``I`` at the complementary depth.
A step compares ``||E_J||^2`` with the ``q_b``-average of ``||E_{J_b}||^2``
over the children ``J_b`` of ``J``.

Suprema over intervals are taken over a fixed sample set: 64 equispaced
points on every ``X``-tree node plus all ``X`` atoms.  Sample positions are
exact integers over a common denominator, so the samples in a child node
are literally a subset of those in its parent.
"""

from __future__ import annotations

import bisect
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from fuplab.fup import kernel_operator

GRID_DENSITY = 64
RECONSTRUCTION_TOL = 1e-10
_CHUNK = 1 << 22


@dataclass(frozen=True)
class CThetaNorm:
    theta: float
    interval: tuple
    sup_abs: float
    sup_deriv: float
    n_points: int

    @property
    def value(self):
        a, b = self.interval
        return max(self.sup_abs, self.theta * (b - a) * self.sup_deriv)


def ctheta_norm(F, dF, interval, theta, grid_density=GRID_DENSITY, extra_points=()):
    """``max(sup |F|, theta |I| sup |F'|)`` over a grid on ``I`` and extra points in ``I``.

    ``F`` and ``dF`` are vectorized evaluators of the function and its
    derivative.
    """
    if grid_density < 33:
        raise ValueError("grid_density must be at least 33")
    a, b = interval
    xs = np.linspace(a, b, grid_density)
    extra = np.asarray(extra_points, dtype=float)
    xs = np.concatenate((xs, extra[(extra >= a) & (extra <= b)]))
    return CThetaNorm(theta, (a, b), float(np.max(np.abs(F(xs)))),
                      float(np.max(np.abs(dF(xs)))), len(xs))


def _node_atoms(tree, level, idx):
    node = tree.levels[level][idx]
    mu = tree.measure
    sl = slice(node.atom_lo, node.atom_hi)
    return node, mu.points[sl], mu.weights[sl]


def eval_FJ(f, J, kernel, h, x, treeY, derivative=False):
    """``F_J`` (and optionally ``F_J'``) at the points ``x``.

    ``J`` is a ``(level, index)`` pair in ``treeY`` and ``f`` holds values
    at all atoms of the ``Y`` measure.
    """
    node, ys, w = _node_atoms(treeY, *J)
    fw = np.asarray(f)[node.atom_lo:node.atom_hi] * w
    yJ = node.center(treeY.L)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    val = np.empty(len(x), dtype=complex)
    der = np.empty(len(x), dtype=complex) if derivative else None
    step = max(1, _CHUNK // max(len(ys), 1))
    for s in range(0, len(x), step):
        xc = x[s:s + step][:, None]
        yc = ys[None, :]
        phase = np.exp(1j * ((kernel.phi(xc, yc) - kernel.phi(xc, yJ)) / h))
        g = kernel.amp(xc, yc)
        val[s:s + step] = (phase * g) @ fw
        if derivative:
            dpsi = (kernel.dphi_dx(xc, yc) - kernel.dphi_dx(xc, yJ)) / h
            der[s:s + step] = (phase * (1j * dpsi * g + kernel.damp_dx(xc, yc))) @ fw
    val /= node.mass
    if derivative:
        der /= node.mass
        return val, der
    return val


class SampleSet:
    """Sorted sample points of an ``X``-tree with exact nesting by node."""

    def __init__(self, treeX, grid_density=GRID_DENSITY):
        L, K = treeX.L, treeX.K
        mu = treeX.measure
        q = grid_density - 1
        den = q * L**K
        if mu.denominator is not None:
            den = den * mu.denominator // math.gcd(den, mu.denominator)
        self.den = den
        nums = set()
        self._bounds = []
        for k, nodes in enumerate(treeX.levels):
            scale = den // L**k
            bounds = []
            for node in nodes:
                lo, hi = node.num * scale, (node.num + node.len_cells) * scale
                bounds.append((lo, hi))
                step = (hi - lo) // q
                nums.update(range(lo, hi + 1, step))
            self._bounds.append(bounds)
        if mu.denominator is not None:
            s = den // mu.denominator
            nums.update(int(n) * s for n in mu.numerators)
            self.atom_exact = True
        else:
            self.atom_exact = False
        nums = sorted(nums)
        self.nums = nums
        self.x = np.array(nums, dtype=float) / den
        if not self.atom_exact:
            self.x = np.unique(np.concatenate((self.x, mu.points)))

    def node_slice(self, level, idx):
        lo, hi = self._bounds[level][idx]
        if self.atom_exact:
            return slice(bisect.bisect_left(self.nums, lo), bisect.bisect_right(self.nums, hi))
        a, b = lo / self.den, hi / self.den
        return slice(int(np.searchsorted(self.x, a, "left")), int(np.searchsorted(self.x, b, "right")))


@dataclass
class CascadeRecord:
    H_I: int
    H_J: int
    I: int
    J: int
    hyp_size: bool
    hyp_deriv: bool
    lhs: float
    rhs: float
    reconstruction_error: float
    domination_gap: float  # max over samples of |F_J| - E_J (should be <= 0)

    @property
    def level(self):
        return self.H_J

    @property
    def ratio(self):
        if self.rhs > 0:
            return self.lhs / self.rhs
        return 0.0 if self.lhs == 0 else math.inf

    @property
    def flagged(self):
        return self.hyp_size and self.hyp_deriv

    CSV_HEADER = ("level", "H_I", "H_J", "hyp_size", "hyp_deriv", "lhs", "rhs", "ratio")

    def csv_row(self):
        return [self.level, self.H_I, self.H_J, int(self.hyp_size), int(self.hyp_deriv),
                self.lhs, self.rhs, self.ratio]


class _Context:
    def __init__(self, treeX, treeY, kernel, h, f, grid_density):
        if treeX.L != treeY.L:
            raise ValueError("trees must share the base L")
        if treeX.K != treeY.K:
            raise ValueError(f"tree depths differ: {treeX.K} vs {treeY.K}")
        if not h > 0:
            raise ValueError("h must be positive")
        self.treeX, self.treeY = treeX, treeY
        self.kernel, self.h = kernel, h
        self.K, self.L = treeX.K, treeX.L
        nY = len(treeY.measure)
        self.f = np.ones(nY, dtype=complex) if f is None else np.asarray(f, dtype=complex)
        if self.f.shape != (nY,):
            raise ValueError(f"f must have one value per Y atom ({nY})")
        self.samples = SampleSet(treeX, grid_density)
        self.slices = [[self.samples.node_slice(k, i) for i in range(len(nodes))]
                       for k, nodes in enumerate(treeX.levels)]

    def level_points(self, level):
        # contiguous span covering every sample in nodes of this level
        sl = self.slices[level]
        return slice(sl[0].start, sl[-1].stop)

    def psi_prime(self, xs, yb, yJ):
        return (self.kernel.dphi_dx(xs, yb) - self.kernel.dphi_dx(xs, yJ)) / self.h


def _sup_abs(a):
    return float(np.max(np.abs(a))) if a.size else 0.0


def _step_records(ctx, j, jdx, theta):
    treeX, treeY, L = ctx.treeX, ctx.treeY, ctx.L
    i_level = ctx.K - 1 - j
    Jnode = treeY.levels[j][jdx]
    kids = Jnode.children
    q = np.array([treeY.levels[j + 1][c].mass for c in kids]) / Jnode.mass
    span = ctx.level_points(i_level)
    xs = ctx.samples.x[span]
    FJ, dFJ = eval_FJ(ctx.f, (j, jdx), ctx.kernel, ctx.h, xs, treeY, derivative=True)
    yJ = Jnode.center(L)
    Fb, dFb, psi, dpsi = [], [], [], []
    for c in kids:
        v, d = eval_FJ(ctx.f, (j + 1, c), ctx.kernel, ctx.h, xs, treeY, derivative=True)
        yb = treeY.levels[j + 1][c].center(L)
        Fb.append(v)
        dFb.append(d)
        psi.append((ctx.kernel.phi(xs, yb) - ctx.kernel.phi(xs, yJ)) / ctx.h)
        dpsi.append(ctx.psi_prime(xs, yb, yJ))
    recon = sum(qb * np.exp(1j * p) * v for qb, p, v in zip(q, psi, Fb))
    recon_err_all = np.abs(FJ - recon)

    records = []
    for idx, Inode in enumerate(treeX.levels[i_level]):
        sI = ctx.slices[i_level][idx]
        loc = slice(sI.start - span.start, sI.stop - span.start)
        size_I = Inode.size(L)
        norms_b = [max(_sup_abs(v[loc]), theta * size_I * _sup_abs(d[loc])) for v, d in zip(Fb, dFb)]
        sup_dpsi = [_sup_abs(d[loc]) for d in dpsi]
        rhs = Inode.mass * float(np.dot(q, np.square(norms_b)))
        lhs = 0.0
        hyp_size = True
        hyp_deriv = True
        dom_gap = -math.inf
        for a in Inode.children:
            Ia = treeX.levels[i_level + 1][a]
            sa = ctx.slices[i_level + 1][a]
            la = slice(sa.start - span.start, sa.stop - span.start)
            size_a = Ia.size(L)
            EJ = max(_sup_abs(FJ[la]), theta * size_a * _sup_abs(dFJ[la]))
            lhs += Ia.mass * EJ**2
            hyp_size &= size_a <= size_I / 4
            hyp_deriv &= all(4 * theta * size_a * s <= 1 for s in sup_dpsi)
            if la.stop > la.start:
                dom_gap = max(dom_gap, float(np.max(np.abs(FJ[la]))) - EJ)
        records.append(CascadeRecord(
            H_I=i_level, H_J=j, I=idx, J=jdx, hyp_size=bool(hyp_size), hyp_deriv=bool(hyp_deriv),
            lhs=lhs, rhs=rhs, reconstruction_error=_sup_abs(recon_err_all[loc]),
            domination_gap=dom_gap,
        ))
    return records


def step_check(treeX, treeY, J, kernel, h, theta, f=None, grid_density=GRID_DENSITY, _ctx=None):
    """All records ``(I, J)`` with ``H(I) + H(J) = K - 1`` for one ``Y`` node ``J``.

    ``J`` is a ``(level, index)`` pair.  Hypothesis failures are reported in
    the record flags, never raised.
    """
    ctx = _ctx or _Context(treeX, treeY, kernel, h, f, grid_density)
    j, jdx = J
    if not 0 <= j < ctx.K:
        raise ValueError(f"J level {j} must lie in [0, {ctx.K})")
    return _step_records(ctx, j, jdx, theta)


def choose_theta(treeX, treeY, kernel, h, K0=0, grid_density=GRID_DENSITY, _ctx=None):
    """Half the largest ``theta`` meeting ``4 theta |I_a| sup_I |Psi_b'| <= 1`` on every step.

    Returns 1.0 when no constraint is active (every ``Psi_b'`` vanishes).
    """
    ctx = _ctx or _Context(treeX, treeY, kernel, h, None, grid_density)
    L = ctx.L
    best = math.inf
    for j in range(K0, ctx.K - K0):
        i_level = ctx.K - 1 - j
        span = ctx.level_points(i_level)
        xs = ctx.samples.x[span]
        for Jnode in treeY.levels[j]:
            yJ = Jnode.center(L)
            for c in Jnode.children:
                yb = treeY.levels[j + 1][c].center(L)
                d = np.abs(ctx.psi_prime(xs, yb, yJ))
                for idx, Inode in enumerate(treeX.levels[i_level]):
                    sI = ctx.slices[i_level][idx]
                    s = float(np.max(d[sI.start - span.start:sI.stop - span.start], initial=0.0))
                    if s == 0:
                        continue
                    amax = max(treeX.levels[i_level + 1][a].size(L) for a in Inode.children)
                    best = min(best, 1.0 / (4 * amax * s))
    return 1.0 if math.isinf(best) else 0.5 * best


@dataclass
class CascadeResult:
    K: int
    K0: int
    theta: float
    records: list
    level_max_ratio: dict
    level_eps1_emp: dict
    eps1_emp: float | None
    C_G: float
    C_0: float
    product_bound: float
    direct_norm: float
    f_norm: float
    base_ok: bool
    conditional: bool
    failed: list = field(default_factory=list)

    def summary(self):
        return {
            "K": self.K, "K0": self.K0, "theta": self.theta,
            "level_max_ratio": {str(k): v for k, v in self.level_max_ratio.items()},
            "level_eps1_emp": {str(k): v for k, v in self.level_eps1_emp.items()},
            "eps1_emp": self.eps1_emp,
            "C_G": self.C_G, "C_0": self.C_0,
            "product_bound": self.product_bound, "direct_norm": self.direct_norm,
            "f_norm": self.f_norm, "base_ok": self.base_ok,
            "status": "conditional" if self.conditional else "unconditional",
            "failed": [list(x) for x in self.failed],
            "max_reconstruction_error": max((r.reconstruction_error for r in self.records), default=0.0),
        }


def _amplitude_constant(ctx):
    xs = ctx.samples.x[:, None]
    ys = ctx.treeY.measure.points[None, :]
    G = ctx.kernel.amp(xs, ys) * np.ones((xs.shape[0], ys.shape[1]))
    dG = ctx.kernel.damp_dx(xs, ys) * np.ones_like(G)
    return max(float(np.max(np.abs(G))), float(np.max(np.abs(dG))))


def _base_check(ctx, theta, K0, C_0):
    """Base-step hypothesis and the base inequality at ``H(J) = K - K0``."""
    treeX, treeY, L = ctx.treeX, ctx.treeY, ctx.L
    jb = ctx.K - K0
    ok = True
    failed = []
    muY = treeY.measure
    for jdx, Jnode in enumerate(treeY.levels[jb]):
        yJ = Jnode.center(L)
        ys = muY.points[Jnode.atom_lo:Jnode.atom_hi]
        fJ2 = float(np.sum(np.abs(ctx.f[Jnode.atom_lo:Jnode.atom_hi]) ** 2
                           * muY.weights[Jnode.atom_lo:Jnode.atom_hi]))
        span = ctx.level_points(K0)
        xs = ctx.samples.x[span]
        FJ, dFJ = eval_FJ(ctx.f, (jb, jdx), ctx.kernel, ctx.h, xs, treeY, derivative=True)
        E2 = 0.0
        for idx, Inode in enumerate(treeX.levels[K0]):
            sI = ctx.slices[K0][idx]
            loc = slice(sI.start - span.start, sI.stop - span.start)
            size_I = Inode.size(L)
            E2 += Inode.mass * max(_sup_abs(FJ[loc]), theta * size_I * _sup_abs(dFJ[loc])) ** 2
            xi = xs[loc][:, None]
            spread = _sup_abs(ctx.kernel.dphi_dx(xi, ys[None, :]) - ctx.kernel.dphi_dx(xi, yJ)) / ctx.h
            if not (4 * theta * size_I * spread <= 1 and theta * size_I <= 0.75):
                ok = False
                failed.append(("base", K0, idx, jb, jdx))
        if E2 > C_0 * fJ2 / Jnode.mass * (1 + 1e-12) + 1e-300:
            ok = False
            failed.append(("base-inequality", K0, -1, jb, jdx))
    return ok, failed


def full_cascade(treeX, treeY, kernel, h=None, theta=None, f=None, K0=0,
                 grid_density=GRID_DENSITY, workers=1):
    """Chain the measured per-level contraction ratios into a norm bound.

    With ``rho_j`` the largest ratio over records at ``H(J) = j`` the chain
    gives ``||B f|| <= sqrt(C_0 prod_j rho_j mu_Y(Y)) ||f||`` where
    ``C_0 = C_G**2 mu_X(X)``.  The result is ``conditional`` when any step
    or base hypothesis fails; the offending nodes are listed in ``failed``.
    """
    if treeX.K != treeY.K:
        raise ValueError(f"tree depths differ: {treeX.K} vs {treeY.K}")
    K = treeX.K
    if h is None:
        h = float(treeX.L) ** -K
    if K0 < 0 or K < 2 * K0:
        raise ValueError("need 0 <= K0 and K >= 2 K0")
    ctx = _Context(treeX, treeY, kernel, h, f, grid_density)
    if theta is None:
        theta = choose_theta(treeX, treeY, kernel, h, K0, _ctx=ctx)

    records = []
    jobs = [(j, jdx) for j in range(K - K0 - 1, K0 - 1, -1) for jdx in range(len(treeY.levels[j]))]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for recs in pool.map(lambda J: _step_records(ctx, J[0], J[1], theta), jobs):
                records.extend(recs)
    else:
        for J in jobs:
            records.extend(_step_records(ctx, J[0], J[1], theta))

    level_max, level_eps = {}, {}
    for r in records:
        level_max[r.H_J] = max(level_max.get(r.H_J, 0.0), r.ratio)
    for lvl in level_max:
        flagged = [r.ratio for r in records if r.H_J == lvl and r.flagged]
        level_eps[lvl] = 1.0 - max(flagged) if flagged else None
    flagged_all = [r.ratio for r in records if r.flagged]
    eps1_emp = 1.0 - max(flagged_all) if flagged_all else None

    muX, muY = treeX.measure, treeY.measure
    C_G = _amplitude_constant(ctx)
    C_0 = C_G**2 * muX.total_mass
    base_ok, failed = _base_check(ctx, theta, K0, C_0)
    failed += [("step", r.H_I, r.I, r.H_J, r.J) for r in records if not r.flagged]

    f_norm = float(np.sqrt(np.sum(np.abs(ctx.f) ** 2 * muY.weights)))
    prod = float(np.prod(list(level_max.values()))) if level_max else 1.0
    bound = math.sqrt(C_0 * prod * muY.total_mass) * f_norm
    mat = kernel_operator(muX, muY, kernel, h)
    direct = float(np.linalg.norm(mat @ (ctx.f * np.sqrt(muY.weights))))
    return CascadeResult(
        K=K, K0=K0, theta=theta, records=records, level_max_ratio=dict(sorted(level_max.items())),
        level_eps1_emp=dict(sorted(level_eps.items())), eps1_emp=eps1_emp,
        C_G=C_G, C_0=C_0, product_bound=bound, direct_norm=direct, f_norm=f_norm,
        base_ok=base_ok, conditional=bool(failed), failed=failed,
    )


# --- scalar facts used by the contraction argument ---------------------------

def two_point_energy(omega, f):
    """``(|u_1|^2 + |u_2|^2, |f_1|^2 + |f_2|^2)`` for ``u = (1/2) exp(i omega) f``."""
    omega = np.asarray(omega, dtype=float).reshape(2, 2)
    f = np.asarray(f, dtype=complex).reshape(2)
    u = 0.5 * np.exp(1j * omega) @ f
    return float(np.sum(np.abs(u) ** 2)), float(np.sum(np.abs(f) ** 2))


def convexity_defect(p, vectors):
    """Both sides of ``||sum p_j f_j||^2 = sum p_j ||f_j||^2 - sum_{j<l} p_j p_l ||f_j - f_l||^2``."""
    p = np.asarray(p, dtype=float)
    V = np.asarray(vectors, dtype=complex)
    lhs = float(np.linalg.norm(p @ V) ** 2)
    rhs = float(np.dot(p, np.sum(np.abs(V) ** 2, axis=1)))
    n = len(p)
    for j in range(n):
        for l in range(j + 1, n):
            rhs -= p[j] * p[l] * float(np.linalg.norm(V[j] - V[l]) ** 2)
    return lhs, rhs


def four_corner(phi, I, J):
    """``phi(c1, c2) + phi(d1, d2) - phi(c1, d2) - phi(d1, c2)`` for ``I = [c1, d1]``, ``J = [c2, d2]``."""
    (c1, d1), (c2, d2) = I, J
    return float(phi(c1, c2) + phi(d1, d2) - phi(c1, d2) - phi(d1, c2))
