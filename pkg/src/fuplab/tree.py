"""Base-L discretization trees of atomic measures.

Level ``k`` partitions the line into cells ``[q L^-k, (q+1) L^-k)``, drops
the cells carrying no atom and merges runs of consecutive surviving cells
into closed intervals.  A node stores its interval as integers (start cell
``num`` and ``len_cells`` at denominator ``L**k``) so merging, nesting and
separation checks are exact.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

log = logging.getLogger(__name__)


@dataclass
class TreeNode:
    level: int
    num: int
    len_cells: int
    mass: float
    atom_lo: int
    atom_hi: int  # atoms atom_lo..atom_hi-1 belong to this node
    parent: int | None = None
    children: list = field(default_factory=list)

    def bounds(self, L):
        den = float(L) ** self.level
        return self.num / den, (self.num + self.len_cells) / den

    def size(self, L):
        return self.len_cells / float(L) ** self.level

    def center(self, L):
        a, b = self.bounds(L)
        return 0.5 * (a + b)


@dataclass
class DiscretizationTree:
    L: int
    K: int
    levels: list  # levels[k] is a list of TreeNode sorted by position
    measure: object = field(repr=False)

    def node(self, k, i):
        return self.levels[k][i]

    def children_of(self, k, i):
        return [self.levels[k + 1][c] for c in self.levels[k][i].children]

    def to_json(self):
        return {
            "L": self.L,
            "K": self.K,
            "levels": [
                [
                    {"num": n.num, "den_pow": k, "len_cells": n.len_cells,
                     "mass": n.mass, "children": list(n.children)}
                    for n in nodes
                ]
                for k, nodes in enumerate(self.levels)
            ],
        }


def _cell_indices(exact, L, k):
    scale = L**k
    return [math.floor(p * scale) for p in exact]


def max_resolved_depth(mu, L):
    """Deepest level whose cells are no finer than the atom resolution."""
    if mu.denominator is not None:
        spacing = 1.0 / mu.denominator
    elif len(mu) > 1:
        spacing = float(np.min(np.diff(mu.points)))
    else:
        return None
    k = 0
    while float(L) ** -(k + 1) >= spacing * (1 - 1e-12):
        k += 1
    return k


def build_tree(mu, L, K):
    """Discretize an :class:`~fuplab.fractal_sets.AtomicMeasure` with base ``L``.

    ``K`` is clamped (with a warning) to the depth at which grid cells
    reach the atom spacing.
    """
    if int(L) != L or L < 2:
        raise ValueError("base L must be an integer >= 2")
    if K < 0:
        raise ValueError("K must be nonnegative")
    if len(mu) == 0:
        raise ValueError("measure has no atoms")
    L, K = int(L), int(K)
    kmax = max_resolved_depth(mu, L)
    if kmax is not None and K > kmax:
        log.warning("requested depth %d exceeds atom resolution; clamping to %d", K, kmax)
        K = kmax
    exact = mu.exact_points()
    cum = np.concatenate(([0.0], np.cumsum(mu.weights)))
    levels = []
    for k in range(K + 1):
        cells = _cell_indices(exact, L, k)
        nodes = []
        start = 0
        n_atoms = len(cells)
        while start < n_atoms:
            end = start + 1
            while end < n_atoms and cells[end] - cells[end - 1] <= 1:
                end += 1
            first, last = cells[start], cells[end - 1]
            nodes.append(TreeNode(
                level=k, num=first, len_cells=last - first + 1,
                mass=float(cum[end] - cum[start]), atom_lo=start, atom_hi=end,
            ))
            start = end
        levels.append(nodes)
    for k in range(K):
        parents = levels[k]
        p = 0
        for ci, child in enumerate(levels[k + 1]):
            while parents[p].atom_hi <= child.atom_lo:
                p += 1
            child.parent = p
            parents[p].children.append(ci)
    return DiscretizationTree(L=L, K=K, levels=levels, measure=mu)


@dataclass
class ValidationReport:
    delta: float
    C_R: float
    delta_in_range: bool
    C_R_prime: float | None
    # clause name -> list of (level, index, passed)
    clauses: dict
    part3_status: str
    log10_L_min_part3: float | None

    def passed(self, clause):
        return all(ok for _, _, ok in self.clauses.get(clause, []))

    def failures(self, clause):
        return [(k, i) for k, i, ok in self.clauses.get(clause, []) if not ok]


def part3_log10_Lmin(delta, C_R):
    """``log10`` of the base threshold ``(4 C_R)**(6 / (delta (1 - delta)))``."""
    with mpmath.workprec(256):
        d = mpmath.mpf(delta)
        return float(6 / (d * (1 - d)) * mpmath.log10(4 * mpmath.mpf(C_R)))


def validate_tree(tree, delta, C_R, rtol=1e-12):
    """Check the regular-tree size, mass, child-ratio and separation clauses.

    Failures are recorded per node, never raised.  Outside ``0 < delta < 1``
    only the structural clauses (mass conservation, sibling separation) run.
    """
    L, K = tree.L, tree.K
    in_range = 0 < delta < 1
    clauses = {"mass_conservation": [], "separation": []}
    for k, nodes in enumerate(tree.levels):
        for i, node in enumerate(nodes):
            if k < K:
                s = sum(tree.levels[k + 1][c].mass for c in node.children)
                clauses["mass_conservation"].append((k, i, abs(s - node.mass) <= rtol * node.mass))
            if i + 1 < len(nodes):
                nxt = nodes[i + 1]
                clauses["separation"].append((k, i, nxt.num - (node.num + node.len_cells) >= 1))
    if not in_range:
        return ValidationReport(delta, C_R, False, None, clauses, "skipped: delta not in (0, 1)", None)

    Cp = (3 * C_R**2) ** (1 / (1 - delta))
    clauses.update({"size": [], "mass_bounds": [], "child_ratio": []})
    slack = 1 + rtol
    for k, nodes in enumerate(tree.levels):
        unit = float(L) ** -k
        for i, node in enumerate(nodes):
            size = node.size(L)
            clauses["size"].append((k, i, unit <= size * slack and size <= Cp * unit * slack))
            lo_m = unit**delta / C_R
            hi_m = C_R * Cp**delta * unit**delta
            clauses["mass_bounds"].append((k, i, lo_m <= node.mass * slack and node.mass <= hi_m * slack))
            if k < K:
                floor_ratio = float(L) ** -delta / Cp
                ok = all(tree.levels[k + 1][c].mass / node.mass * slack >= floor_ratio for c in node.children)
                clauses["child_ratio"].append((k, i, ok))

    log10_lmin = part3_log10_Lmin(delta, C_R)
    if math.log10(L) < log10_lmin:
        status = "hypothesis-not-met"
    else:
        status = "checked"
        clauses["two_children"] = []
        for k in range(K):
            for i, node in enumerate(tree.levels[k]):
                clauses["two_children"].append((k, i, _has_separated_pair(tree, k, node, delta, C_R)))
    return ValidationReport(delta, C_R, True, Cp, clauses, status, log10_lmin)


def _has_separated_pair(tree, k, node, delta, C_R):
    L = tree.L
    lo = 0.5 * C_R ** (-2 / delta) * float(L) ** (-k - 2 / 3)
    hi = 2 * float(L) ** (-k - 2 / 3)
    kids = [tree.levels[k + 1][c].bounds(L) for c in node.children]
    for a in range(len(kids)):
        for b in range(a + 1, len(kids)):
            (a0, a1), (b0, b1) = kids[a], kids[b]
            dmin = max(b0 - a1, a0 - b1, 0.0)
            dmax = max(b1 - a0, a1 - b0)
            if lo <= dmin and dmax <= hi:
                return True
    return False
