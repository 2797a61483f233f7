"""Shared fixtures: the worked-example system and a batched pair checker."""

import numpy as np
import pytest

from tapc import isa, sim
from tapc.lowering import LinearSystem, im2col_indices
from tapc.model import LayerShape
from tapc.scheduler import ApGeometry

# hand-checked 6x6 ternary system used as the CSE regression anchor:
# y = M @ x for x = [1..6] was worked out by hand and frozen here
WORKED_MATRIX = np.array([
    [1, -1, 0, 1, 0, -1],
    [0, 0, -1, 1, 0, -1],
    [0, 0, 0, -1, 0, 1],
    [0, -1, 0, -1, 0, 1],
    [1, -1, 0, -1, 0, 0],
    [1, -1, -1, 1, 0, -1],
], dtype=np.int64)
WORKED_X = np.array([1, 2, 3, 4, 5, 6], dtype=np.int64)
WORKED_Y = np.array([-3, -5, 2, 0, -5, -6], dtype=np.int64)
WORKED_OPS_UNROLL = 14
WORKED_OPS_CSE = 7


@pytest.fixture
def worked_matrix():
    return WORKED_MATRIX.copy()


@pytest.fixture
def worked_system():
    shape = LayerShape(1, 6, 1, 6, 1, 0, 1, 6)
    return LinearSystem(0, WORKED_MATRIX.copy(), im2col_indices(shape))


@pytest.fixture(scope="session")
def catalog():
    tables, _repairs = isa.standard_catalog()
    return tables


@pytest.fixture(scope="session")
def pair_harness(catalog):
    """Run signed k-bit operand pairs through one macro shape, batched as
    CAM rows, and return the simulated results (two's complement exact)."""

    geo = ApGeometry(rows=256, columns=8, domains_per_track=64)

    def run_pairs(op, mode, a_vals, b_vals, k_bits, negated=False):
        a_vals = np.asarray(a_vals, dtype=np.int64)
        b_vals = np.asarray(b_vals, dtype=np.int64)
        m = k_bits + 1   # covers sums, differences and their complements
        out = np.empty(len(a_vals), dtype=np.int64)
        for lo in range(0, len(a_vals), geo.rows):
            n = min(geo.rows, len(a_vals) - lo)
            st = sim.SimState(geo)
            cam = st.ap(0)
            cam.poke(0, 0, k_bits, a_vals[lo:lo + n], n)
            a = isa.OperandRef(0, 0, k_bits, True)
            if mode == isa.IN_PLACE:
                cam.poke(1, 0, m, b_vals[lo:lo + n], n)
                b = isa.OperandRef(1, 0, m, True)
                mac = isa.MacroInstr(op, mode, negated, m, a, b, (), 0, 3, 4)
                dest = 1
            else:
                cam.poke(1, 0, k_bits, b_vals[lo:lo + n], n)
                b = isa.OperandRef(1, 0, k_bits, True)
                mac = isa.MacroInstr(op, mode, negated, m, a, b, (2,), 0, 3, 4)
                dest = 2
            sim.run_macro(st, 0, mac, catalog[(op, mode, negated)])
            out[lo:lo + n] = cam.peek(dest, 0, m, n, signed=True)
        return out

    return run_pairs


def ternary_matrix(rows, cols, sparsity, seed):
    """iid ternary weights: P(0) = sparsity, the rest split evenly."""
    rng = np.random.default_rng(seed)
    p = [(1 - sparsity) / 2, sparsity, (1 - sparsity) / 2]
    return rng.choice([-1, 0, 1], size=(rows, cols), p=p).astype(np.int64)


def system_for(matrix):
    rows, cols = matrix.shape
    shape = LayerShape(1, rows, 1, cols, 1, 0, 1, cols)
    return LinearSystem(0, matrix, im2col_indices(shape))
