"""DFG construction, signed-pair CSE and bitwidth annotation."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import (WORKED_OPS_CSE, WORKED_OPS_UNROLL, WORKED_X, WORKED_Y,
                      system_for, ternary_matrix)
from tapc import dfg as dfglib
from tapc.lowering import unrolled_op_count


def _graphs(matrix, bits=4):
    sys_ = system_for(matrix)
    g0 = dfglib.annotate_bitwidths(dfglib.build_dfg(sys_), bits)
    g1 = dfglib.annotate_bitwidths(
        dfglib.eliminate_common_subexpressions(dfglib.build_dfg(sys_)), bits)
    return g0, g1


def test_chain_op_count_matches_unrolled_metric():
    for seed in range(5):
        m = ternary_matrix(16, 9, 0.7, seed)
        g0, _ = _graphs(m)
        assert g0.op_count == unrolled_op_count([system_for(m)])


def test_empty_rows_share_one_zero_node():
    m = np.zeros((4, 6), dtype=np.int64)
    m[1, 3] = -1
    g = dfglib.build_dfg(system_for(m))
    zero_tags = [nid for nid, _ in g.row_tags()
                 if g.nodes[nid].kind == dfglib.ZERO]
    assert len(zero_tags) == 3 and len(set(zero_tags)) == 1
    # the single-term row aliases the input with a negative sign
    nid, sign = g.row_tags()[1]
    assert g.nodes[nid].kind == dfglib.INPUT and sign == -1


@pytest.mark.parametrize("seed", range(8))
def test_evaluation_matches_matrix_product(seed):
    m = ternary_matrix(24, 9, 0.75, seed)
    g0, g1 = _graphs(m)
    rng = np.random.default_rng(seed + 100)
    for _ in range(10):
        x = rng.integers(0, 16, size=9)
        want = m @ x
        assert np.array_equal(dfglib.dfg_evaluate(g0, x), want)
        assert np.array_equal(dfglib.dfg_evaluate(g1, x, check_ranges=True), want)


def test_worked_example_cse_counts(worked_system):
    g0 = dfglib.build_dfg(worked_system)
    assert g0.op_count == WORKED_OPS_UNROLL
    g1 = dfglib.eliminate_common_subexpressions(g0)
    assert g1.op_count == WORKED_OPS_CSE
    assert np.array_equal(dfglib.dfg_evaluate(g1, WORKED_X), WORKED_Y)


def test_cse_shares_negated_occurrences():
    # row 2 is the negation of row 1 shifted through shared pairs: first
    # (x0 - x1) serves all three rows, then (x3 + t) serves rows 1 and 2,
    # the latter through a -1 output tag instead of any extra op
    m = np.array([[1, -1, 1, 0],
                  [1, -1, 0, 1],
                  [-1, 1, 0, -1]], dtype=np.int64)
    g1 = dfglib.eliminate_common_subexpressions(dfglib.build_dfg(system_for(m)))
    assert g1.op_count == 3
    tags = g1.row_tags()
    assert tags[1][0] == tags[2][0] and tags[1][1] == -tags[2][1]


@pytest.mark.parametrize("seed", range(10))
def test_cse_never_increases_ops(seed):
    m = ternary_matrix(32, 9, 0.8, seed)
    g0, g1 = _graphs(m)
    assert g1.op_count <= g0.op_count


def test_min_signed_width_frozen_points():
    cases = {(0, 0): 1, (-1, 0): 1, (0, 1): 2, (-8, 7): 4, (-9, 7): 5,
             (0, 15): 5, (-16, 15): 5, (0, 16): 6}
    for (lo, hi), want in cases.items():
        assert dfglib.min_signed_width(lo, hi) == want


def test_annotation_intervals_cover_all_inputs():
    m = ternary_matrix(12, 6, 0.6, 3)
    g, _ = _graphs(m, bits=4)
    for x in ([0] * 6, [15] * 6, [15, 0, 15, 0, 15, 0]):
        dfglib.dfg_evaluate(g, np.array(x), check_ranges=True)
    for node in g.nodes:
        if node.kind in (dfglib.ADD, dfglib.SUB):
            assert node.width == dfglib.min_signed_width(node.lo, node.hi)


@given(st.lists(st.sampled_from([-1, 0, 1]), min_size=2, max_size=6),
       st.integers(min_value=1, max_value=6))
def test_single_row_interval_is_tight(coeffs, bits):
    # ternary chains hit their interval corners, so the annotation must be
    # exactly [sum of negatives, sum of positives] scaled by the input top
    m = np.array([coeffs], dtype=np.int64)
    g, _ = _graphs(m, bits=bits)
    nid, sign = g.row_tags()[0]
    node = g.nodes[nid]
    arr = np.array(coeffs)
    top = (1 << bits) - 1
    row_lo = int(arr[arr < 0].sum()) * top
    row_hi = int(arr[arr > 0].sum()) * top
    if node.kind == dfglib.ZERO:
        assert row_lo == row_hi == 0
        return
    ends = (sign * node.lo, sign * node.hi)
    assert (min(ends), max(ends)) == (row_lo, row_hi)
