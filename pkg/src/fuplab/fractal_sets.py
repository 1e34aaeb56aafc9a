"""Discrete Cantor sets, atomic and fattened measures, regularity scanners.

Regularity constants are computed over finite, explicit interval families:

* discrete upper bound: every ``[a, b]`` with ``a, b`` in ``(1/2)Z`` inside
  ``[-1, N+1]`` and ``b - a >= 1``;
* discrete lower bound: every size ``s`` in ``(1/2)Z`` with ``1 <= s <= N``
  centered at every member;
* continuous upper bound: endpoints drawn from the event grid (support
  points and interval endpoints, each also shifted by ``+-h``), size ``>= h``;
* continuous lower bound: sizes ``h * 2**(i/4)`` in ``[h, 1]`` (plus the
  endpoint 1) centered at sampled support points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit

INT_LIMIT = 2**62


@dataclass(frozen=True)
class IndexSet:
    """Sorted distinct members of ``Z_N``."""

    N: int
    members: tuple

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("modulus must be positive")
        mem = tuple(int(m) for m in self.members)
        if any(b <= a for a, b in zip(mem, mem[1:])):
            raise ValueError("members must be sorted and distinct")
        if mem and (mem[0] < 0 or mem[-1] >= self.N):
            raise ValueError(f"members must lie in [0, {self.N})")
        object.__setattr__(self, "members", mem)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, j):
        i = np.searchsorted(self.as_array(), j)
        return i < len(self.members) and self.members[i] == j

    def as_array(self):
        return np.asarray(self.members, dtype=np.int64)

    def indicator(self):
        out = np.zeros(self.N, dtype=bool)
        out[list(self.members)] = True
        return out

    def shifted(self, t):
        """``{(j + t) mod N}`` as a new set."""
        return IndexSet(self.N, tuple(sorted({(j + t) % self.N for j in self.members})))

    def reflected(self):
        return IndexSet(self.N, tuple(sorted(self.N - 1 - j for j in self.members)))

    def to_json(self):
        return {"N": self.N, "members": list(self.members)}

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["N"]), tuple(int(m) for m in obj["members"]))


@dataclass(frozen=True)
class AtomicMeasure:
    """Finitely many weighted points in a bounding interval.

    When ``denominator`` is set, ``numerators[i] / denominator`` is the
    exact position of atom ``i``; tree construction uses it to avoid
    rounding at grid boundaries.
    """

    points: np.ndarray
    weights: np.ndarray
    interval: tuple
    numerators: np.ndarray | None = None
    denominator: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if pts.ndim != 1 or pts.shape != wts.shape:
            raise ValueError("points and weights must be 1-D of equal length")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("atom positions must be strictly increasing")
        if np.any(wts <= 0) or not np.all(np.isfinite(wts)):
            raise ValueError("atom weights must be positive and finite")
        a, b = self.interval
        if len(pts) and (pts[0] < a or pts[-1] > b):
            raise ValueError("atoms must lie in the bounding interval")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)
        object.__setattr__(self, "interval", (float(a), float(b)))
        if self.numerators is not None:
            object.__setattr__(self, "numerators", np.asarray(self.numerators, dtype=np.int64))

    def __len__(self):
        return len(self.points)

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def exact_points(self):
        """Atom positions as :class:`fractions.Fraction` values."""
        if self.denominator is not None:
            return [Fraction(int(n), self.denominator) for n in self.numerators]
        return [Fraction(float(p)) for p in self.points]

    def mass(self, a, b):
        """Mass of the closed interval ``[a, b]``."""
        lo = np.searchsorted(self.points, a, side="left")
        hi = np.searchsorted(self.points, b, side="right")
        return float(self.weights[lo:hi].sum())

    def to_json(self):
        return {
            "interval": list(self.interval),
            "atoms": [[float(x), float(w)] for x, w in zip(self.points, self.weights)],
        }

    @classmethod
    def from_json(cls, obj):
        atoms = np.asarray(obj["atoms"], dtype=float).reshape(-1, 2)
        return cls(atoms[:, 0], atoms[:, 1], tuple(obj["interval"]))


@dataclass(frozen=True)
class IntervalMeasure:
    """Constant density on a finite union of disjoint closed intervals."""

    intervals: tuple
    density: float

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        for (a, b), (c, _) in zip(ivs, ivs[1:]):
            if not b < c:
                raise ValueError("intervals must be sorted and disjoint")
        if any(b < a for a, b in ivs):
            raise ValueError("interval endpoints out of order")
        if not self.density > 0:
            raise ValueError("density must be positive")
        object.__setattr__(self, "intervals", ivs)

    @property
    def total_mass(self):
        return self.density * sum(b - a for a, b in self.intervals)

    def mass(self, a, b):
        """Mass of ``[a, b]`` by exact interval intersection."""
        ends = np.asarray(self.intervals)
        return float(self.density * np.clip(np.minimum(ends[:, 1], b) - np.maximum(ends[:, 0], a), 0, None).sum())


@dataclass
class RegularityReport:
    delta: float
    scale: float
    min_constant_upper: float
    min_constant_lower: float
    worst_interval: tuple
    worst_lower_interval: tuple
    delta_in_range: bool

    @property
    def constant(self):
        return max(self.min_constant_upper, self.min_constant_lower)


def _check_alphabet(M, A):
    if int(M) != M or M < 2:
        raise ValueError(f"base M must be an integer >= 2, got {M!r}")
    A = tuple(int(a) for a in A)
    if not A:
        raise ValueError("alphabet must be nonempty")
    if any(b <= a for a, b in zip(A, A[1:])):
        raise ValueError("alphabet must be sorted and distinct")
    if A[0] < 0 or A[-1] >= M:
        raise ValueError(f"alphabet letters must lie in [0, {M})")
    return int(M), A


def cantor_dimension(M, A):
    """``log|A| / log M`` in double precision."""
    return math.log(len(A)) / math.log(M)


def cantor_set(M, A, k):
    """Integers in ``[0, M**k)`` whose base-``M`` digits all lie in ``A``."""
    M, A = _check_alphabet(M, A)
    if int(k) != k or k < 1:
        raise ValueError("depth k must be a positive integer")
    if M**k > INT_LIMIT:
        raise ValueError(f"M**k = {M}**{k} overflows the integer range")
    members = np.zeros(1, dtype=np.int64)
    for j in range(k):
        members = (members[:, None] + np.asarray(A, dtype=np.int64)[None, :] * M**j).ravel()
    return IndexSet(M**k, tuple(np.sort(members).tolist()))


def depth_for(M, N):
    """The unique ``k`` with ``M**k <= N < M**(k+1)``, by integer comparison."""
    if N < 1:
        raise ValueError("N must be positive")
    k = 0
    while M ** (k + 1) <= N:
        k += 1
    return k


def dilated_cantor(M, A, k, N):
    """``{ceil(j N / M**k) : j in C_k}`` inside ``Z_N``."""
    M, A = _check_alphabet(M, A)
    if N % M != 0 or not (M**k <= N < M ** (k + 1)):
        raise ValueError(f"need N in M*Z with {M}**{k} <= N < {M}**{k + 1}, got N={N}")
    base = cantor_set(M, A, k)
    Mk = M**k
    members = [(j * N + Mk - 1) // Mk for j in base.members]
    return IndexSet(N, tuple(members))


@njit(cache=True)
def _scan_upper_halfgrid(prefix, N, delta):
    # half-integer grid on [-1, N+1]; endpoints g = t/2 - 1, t = 0..2N+4
    G = 2 * N + 5
    cnt_le = np.zeros(G, dtype=np.int64)  # members <= g
    cnt_lt = np.zeros(G, dtype=np.int64)  # members < g
    for t in range(G):
        g2 = t - 2  # 2*g
        if g2 < 0:
            le = 0
            lt = 0
        else:
            fl = g2 // 2
            le = prefix[min(fl, N - 1) + 1] if fl >= 0 else 0
            if g2 % 2 == 0:
                lt = prefix[min(fl - 1, N - 1) + 1] if fl - 1 >= 0 else 0
            else:
                lt = le
        cnt_le[t] = le
        cnt_lt[t] = lt
    inv = np.zeros(G, dtype=np.float64)
    for d in range(2, G):
        inv[d] = (d / 2.0) ** (-delta)
    best = 0.0
    ba = 0
    bb = 0
    for ta in range(G):
        base = cnt_lt[ta]
        for tb in range(ta + 2, G):
            val = (cnt_le[tb] - base) * inv[tb - ta]
            if val > best:
                best = val
                ba = ta
                bb = tb
    return best, ba, bb


def _prefix(X):
    ind = np.zeros(X.N, dtype=np.int64)
    ind[X.as_array()] = 1
    return np.concatenate(([0], np.cumsum(ind)))


def _count_closed(prefix, N, lo, hi):
    """Members in the integer range ``[lo, hi]`` clipped to ``[0, N)``."""
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, N - 1)
    return np.where(hi >= lo, prefix[np.clip(hi, -1, N - 1) + 1] - prefix[np.clip(lo, 0, N)], 0)


def min_regularity_discrete(X, delta):
    """Smallest constants making ``X`` delta-regular over the scanned families.

    Upper constant: max of ``#(J & X) / |J|**delta``; lower constant: max of
    ``|J|**delta / #(J & X)`` over intervals centered at members.
    """
    if len(X) == 0:
        raise ValueError("X must be nonempty")
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    N = X.N
    prefix = _prefix(X)
    upper, ta, tb = _scan_upper_halfgrid(prefix, N, float(delta))
    worst = (ta / 2 - 1, tb / 2 - 1)

    mem = X.as_array()
    sizes2 = np.arange(2, 2 * N + 1)  # twice the size, s = 1 .. N in steps of 1/2
    radius = sizes2 // 4  # floor(s/2)
    powers = (sizes2 / 2.0) ** delta
    lower = 0.0
    worst_lower = (float(mem[0]) - 0.5, float(mem[0]) + 0.5)
    for x in mem:
        counts = _count_closed(prefix, N, x - radius, x + radius)
        ratio = powers / counts
        i = int(np.argmax(ratio))
        if ratio[i] > lower:
            lower = float(ratio[i])
            s = sizes2[i] / 2
            worst_lower = (x - s / 2, x + s / 2)
    return RegularityReport(
        delta=float(delta), scale=1.0,
        min_constant_upper=float(upper), min_constant_lower=lower,
        worst_interval=worst, worst_lower_interval=worst_lower,
        delta_in_range=0 < delta < 1,
    )


def lift_to_unit(X, delta):
    """Atoms at ``j / N`` for ``j`` in ``X``, each of weight ``N**-delta``."""
    if len(X) == 0:
        raise ValueError("X must be nonempty")
    num = X.as_array()
    w = float(X.N) ** (-delta)
    return AtomicMeasure(
        points=num / X.N, weights=np.full(len(num), w), interval=(0.0, 1.0),
        numerators=num, denominator=X.N,
    )


def fatten(mu, h, delta):
    """``h``-neighborhood of the support with density ``h**(delta - 1)``."""
    if not h > 0:
        raise ValueError("h must be positive")
    merged = []
    for p in mu.points:
        a, b = p - h, p + h
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return IntervalMeasure(tuple(tuple(iv) for iv in merged), h ** (delta - 1.0))


def _mass_fn(mu):
    if isinstance(mu, AtomicMeasure):
        cum = np.concatenate(([0.0], np.cumsum(mu.weights)))
        pts = mu.points

        def mass(a, b):
            return cum[np.searchsorted(pts, b, side="right")] - cum[np.searchsorted(pts, a, side="left")]
        return mass
    ends = np.asarray(mu.intervals)

    def mass(a, b):
        a = np.asarray(a, dtype=float)[..., None]
        b = np.asarray(b, dtype=float)[..., None]
        return mu.density * np.clip(np.minimum(ends[:, 1], b) - np.maximum(ends[:, 0], a), 0, None).sum(-1)
    return mass


def support_samples(mu, h):
    """Points of the support used as interval centers in the lower scan."""
    if isinstance(mu, AtomicMeasure):
        return mu.points.copy()
    pts = []
    for a, b in mu.intervals:
        n = max(2, int(math.ceil((b - a) / (h / 2))) + 1)
        pts.append(np.linspace(a, b, n))
    return np.unique(np.concatenate(pts))


def min_regularity_continuous(mu, delta, h):
    """Regularity constants of a measure up to scale ``h`` over the scanned families."""
    if not h > 0:
        raise ValueError("h must be positive")
    if isinstance(mu, AtomicMeasure):
        if len(mu) == 0:
            raise ValueError("empty support")
        events = mu.points
    else:
        if not mu.intervals:
            raise ValueError("empty support")
        events = np.asarray(mu.intervals).ravel()
    mass = _mass_fn(mu)
    grid = np.unique(np.concatenate((events, events - h, events + h)))

    upper = 0.0
    worst = (float(grid[0]), float(grid[0] + h))
    # each left endpoint pairs with every right endpoint at distance >= h,
    # plus the interval of size exactly h
    for a in grid:
        right = grid[grid >= a + h]
        right = np.concatenate(([a + h], right))
        vals = mass(np.full(right.shape, a), right) / (right - a) ** delta
        i = int(np.argmax(vals))
        if vals[i] > upper:
            upper = float(vals[i])
            worst = (float(a), float(right[i]))

    n_sizes = int(math.floor(4 * math.log2(1.0 / h) + 1e-9)) + 1 if h <= 1 else 0
    sizes = h * 2.0 ** (np.arange(n_sizes) / 4.0)
    sizes = np.unique(np.concatenate((sizes[sizes <= 1.0], [1.0] if h <= 1 else [])))
    lower = 0.0
    worst_lower = worst
    if len(sizes):
        centers = support_samples(mu, h)
        pw = sizes**delta
        for c in centers:
            m = mass(c - sizes / 2, c + sizes / 2)
            ratio = pw / m
            i = int(np.argmax(ratio))
            if ratio[i] > lower:
                lower = float(ratio[i])
                worst_lower = (float(c - sizes[i] / 2), float(c + sizes[i] / 2))
    return RegularityReport(
        delta=float(delta), scale=float(h),
        min_constant_upper=upper, min_constant_lower=lower,
        worst_interval=worst, worst_lower_interval=worst_lower,
        delta_in_range=0 < delta < 1,
    )
