import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fuplab.fractal_sets import AtomicMeasure, IndexSet, cantor_dimension, cantor_set, lift_to_unit
from fuplab.tree import build_tree, max_resolved_depth, part3_log10_Lmin, validate_tree

D3 = math.log(2) / math.log(3)


def ternary_tree(k=6, L=3, K=4):
    return build_tree(lift_to_unit(cantor_set(3, [0, 2], k), D3), L, K)


def test_ternary_cantor_binary_branching():
    tree = ternary_tree()
    assert [len(lv) for lv in tree.levels] == [1, 2, 4, 8, 16]
    for k in range(tree.K):
        for node in tree.levels[k]:
            assert len(node.children) == 2
            for c in node.children:
                assert tree.levels[k + 1][c].mass / node.mass == pytest.approx(0.5, rel=1e-14)


def test_ternary_cantor_node_intervals_exact():
    tree = ternary_tree()
    # level-2 nodes are the ternary intervals [0,1/9], [2/9,1/3], ...
    assert [(n.num, n.len_cells) for n in tree.levels[2]] == [(0, 1), (2, 1), (6, 1), (8, 1)]


def test_uniform_atoms_merge_into_one_run():
    N = 1024
    mu = lift_to_unit(IndexSet(N, tuple(range(N))), 1.0)
    tree = build_tree(mu, 2, 3)
    for k, lv in enumerate(tree.levels):
        assert len(lv) == 1
        assert (lv[0].num, lv[0].len_cells) == (0, 2**k)
        assert lv[0].mass == pytest.approx(1.0)


def test_single_atom_one_cell_per_level():
    mu = AtomicMeasure(np.array([0.0]), np.array([1.0]), (0.0, 1.0))
    tree = build_tree(mu, 5, 6)
    for k, lv in enumerate(tree.levels):
        assert len(lv) == 1 and lv[0].len_cells == 1 and lv[0].num == 0


def test_depth_clamped_with_warning(caplog):
    mu = lift_to_unit(cantor_set(3, [0, 2], 4), D3)
    assert max_resolved_depth(mu, 3) == 4
    with caplog.at_level(logging.WARNING):
        tree = build_tree(mu, 3, 9)
    assert tree.K == 4
    assert "clamping" in caplog.text


def test_rebuild_bit_identical():
    mu = lift_to_unit(cantor_set(4, [0, 1, 3], 4), cantor_dimension(4, [0, 1, 3]))
    assert build_tree(mu, 4, 3).to_json() == build_tree(mu, 4, 3).to_json()


def test_build_errors():
    mu = lift_to_unit(cantor_set(3, [0, 2], 2), D3)
    with pytest.raises(ValueError):
        build_tree(mu, 1, 2)
    with pytest.raises(ValueError):
        build_tree(mu, 3, -1)


@settings(max_examples=50, deadline=None)
@given(N=st.integers(8, 400), data=st.data(), L=st.integers(2, 6))
def test_tree_structure_properties(N, data, L):
    members = sorted(data.draw(st.sets(st.integers(0, N - 1), min_size=1, max_size=60)))
    w = data.draw(st.lists(st.floats(0.01, 10), min_size=len(members), max_size=len(members)))
    mu = AtomicMeasure(np.array(members) / N, np.array(w), (0.0, 1.0),
                       numerators=np.array(members), denominator=N)
    tree = build_tree(mu, L, 10)
    total = mu.total_mass
    for k, lv in enumerate(tree.levels):
        assert sum(n.mass for n in lv) == pytest.approx(total, rel=1e-12)
        for a, b in zip(lv, lv[1:]):
            assert b.num - (a.num + a.len_cells) >= 1
        for node in lv:
            # every atom in the node lies in its closed interval
            for j in range(node.atom_lo, node.atom_hi):
                p = members[j] * L**k
                assert node.num * N <= p <= (node.num + node.len_cells) * N
            if k < tree.K:
                kids = [tree.levels[k + 1][c] for c in node.children]
                assert kids
                assert sum(c.mass for c in kids) == pytest.approx(node.mass, rel=1e-12)
                for c in kids:
                    assert c.parent is not None
                    assert node.num * L <= c.num and c.num + c.len_cells <= (node.num + node.len_cells) * L


def test_validate_ternary_passes_structural_clauses():
    tree = ternary_tree(k=7, L=3, K=6)
    rep = validate_tree(tree, D3, 2 * 3 ** (2 * D3))
    for clause in ("mass_conservation", "separation", "size", "mass_bounds", "child_ratio"):
        assert rep.passed(clause), clause
    assert rep.part3_status == "hypothesis-not-met"


def test_validate_reports_failures_as_data():
    tree = ternary_tree()
    # wrong dimension: level masses 2**-k cannot track 3**(-0.3 k)
    rep = validate_tree(tree, 0.3, 1.0)
    assert not rep.passed("mass_bounds")
    assert rep.failures("mass_bounds")


def test_validate_off_range_delta():
    mu = lift_to_unit(IndexSet(64, tuple(range(64))), 1.0)
    rep = validate_tree(build_tree(mu, 2, 3), 1.0, 1.0)
    assert not rep.delta_in_range
    assert rep.part3_status.startswith("skipped")
    assert "size" not in rep.clauses


def test_part3_threshold_log_space():
    val = part3_log10_Lmin(0.63, 2.0)
    assert val == pytest.approx(6 / (0.63 * 0.37) * math.log10(8), rel=1e-14)
    assert val > 20
