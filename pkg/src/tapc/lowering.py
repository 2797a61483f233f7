"""Lowering convolutions to per-channel linear systems.

A conv layer is unrolled patch-wise: every output position p reads a
f_h*f_w window of each input channel, so per input channel the layer is a
(c_out x f_h*f_w) ternary matrix applied to the patch vector. Output
positions map onto CAM rows, patch slots onto CAM columns, and the matrix
rows become add/sub chains. Padding contributes zero-valued patch slots;
the matrix keeps its coefficients, which is equivalent by linearity, except
that a slot padded at every position is dropped outright.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FeatureMap, LayerShape, TernaryWeights

PAD = -1


@dataclass
class PatchIndexMap:
    """Input coordinates behind each (output position, patch slot) pair.

    ys/xs have shape (h_out*w_out, f_h*f_w); PAD (-1) marks slots that fall
    outside the input. Positions and slots are row-major.
    """

    shape: LayerShape
    ys: np.ndarray
    xs: np.ndarray

    @property
    def positions(self) -> int:
        return self.ys.shape[0]

    @property
    def slots(self) -> int:
        return self.ys.shape[1]

    def is_pad(self) -> np.ndarray:
        return self.ys == PAD


@dataclass
class LinearSystem:
    """One input channel's slice of the layer: matrix (c_out x slots)."""

    channel: int
    matrix: np.ndarray
    patch: PatchIndexMap


def im2col_indices(shape: LayerShape) -> PatchIndexMap:
    """Build the position/slot coordinate map for one layer."""
    p = shape.h_out * shape.w_out
    k = shape.f_h * shape.f_w
    ys = np.full((p, k), PAD, dtype=np.int64)
    xs = np.full((p, k), PAD, dtype=np.int64)
    for oy in range(shape.h_out):
        for ox in range(shape.w_out):
            pos = oy * shape.w_out + ox
            for ky in range(shape.f_h):
                for kx in range(shape.f_w):
                    iy = oy * shape.stride + ky - shape.pad
                    ix = ox * shape.stride + kx - shape.pad
                    if 0 <= iy < shape.h_in and 0 <= ix < shape.w_in:
                        slot = ky * shape.f_w + kx
                        ys[pos, slot] = iy
                        xs[pos, slot] = ix
    return PatchIndexMap(shape, ys, xs)


def lower_layer(weights: TernaryWeights, shape: LayerShape) -> list[LinearSystem]:
    """Split a conv layer into one LinearSystem per input channel.

    Summing the systems' outputs over channels reproduces the reference
    convolution exactly. Slots that are padding at every output position
    (kernel poking fully outside the input) get their column zeroed.
    """
    pim = im2col_indices(shape)
    always_pad = pim.is_pad().all(axis=0)
    systems = []
    for c in range(shape.c_in):
        matrix = weights.data[:, c, :, :].reshape(shape.c_out, shape.f_h * shape.f_w).copy()
        matrix[:, always_pad] = 0
        systems.append(LinearSystem(c, matrix, pim))
    return systems


def extract_patches(ifm: FeatureMap, pim: PatchIndexMap, channel: int) -> np.ndarray:
    """Gather the (positions x slots) patch value matrix for one channel.

    PAD slots read as zero, matching what the array loader writes there.
    """
    data = ifm.data[channel]
    vals = np.zeros((pim.positions, pim.slots), dtype=np.int64)
    real = ~pim.is_pad()
    vals[real] = data[pim.ys[real], pim.xs[real]]
    return vals


def unrolled_op_count(systems: list[LinearSystem]) -> int:
    """Adds/subs to evaluate the systems as plain left-to-right chains.

    A row with n nonzero coefficients costs max(n - 1, 0): leading negations
    are free (sign-flipped consumption) and single-term or empty rows are
    pure copies. Counted once per output-position cohort; the row dimension
    of the array applies the same chain to every position in parallel.
    """
    total = 0
    for sys in systems:
        nnz = np.count_nonzero(sys.matrix, axis=1)
        total += int(np.maximum(nnz - 1, 0).sum())
    return total
