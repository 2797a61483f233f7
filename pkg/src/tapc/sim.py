"""Bit-accurate functional simulation of the CAM arrays on racetrack storage.

Array state is the ground truth `data` cube (rows x columns x domains); the
per-column `align` map says which domain each track currently ports. Searches
and writes touch only the ported slice, shifts just move the alignment and
pay per domain step. Column moves between APs read the storage directly (the
interconnect model charges them per bit, flat across hop levels).

Event costs follow the array's physical behavior, not the program's intent:
searches compare every row, tagged writes pay per tagged row, and rows beyond
a partially filled group take part in compute like any others. Their results
land in rows the readout never visits, so outputs stay exact and, because the
whole machine is deterministic, so do the energy figures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import isa
from .errors import FormatError, SimulationError
from .lowering import extract_patches, im2col_indices
from .model import FeatureMap, LayerShape, QuantSpec, max_pool_2x2, requantize
from .scheduler import ApGeometry, ApProgram


@dataclass
class Event:
    """One costed array action. bits/steps carry the energy-relevant size,
    cycles the latency contribution within the event's epoch."""

    kind: str       # search | write | shift | move
    ap: int
    layer: int
    phase: str      # io | dfg | accum
    epoch: int
    bits: int
    steps: int
    cycles: int


EXPORT_HEADER = "kind,ap,bits,steps,epoch"


def export_events(events: list[Event]) -> str:
    lines = [EXPORT_HEADER]
    lines.extend(f"{e.kind},{e.ap},{e.bits},{e.steps},{e.epoch}" for e in events)
    return "\n".join(lines) + "\n"


class CamArray:
    """One AP: the storage cube plus alignment, tag register and wear counts."""

    def __init__(self, geometry: ApGeometry):
        self.rows = geometry.rows
        self.columns = geometry.columns
        self.data = np.zeros(
            (geometry.rows, geometry.columns, geometry.domains_per_track),
            dtype=np.uint8)
        self.align: dict[int, int] = {}
        self.tag = np.zeros(geometry.rows, dtype=bool)
        self.writes = np.zeros(geometry.columns, dtype=np.int64)

    def visible(self, col: int) -> np.ndarray:
        return self.data[:, col, self.align.get(col, 0)]

    # direct, uncosted access for harnesses and unit tests
    def poke(self, col: int, base: int, width: int, values, n_rows: int):
        vals = np.asarray(values, dtype=np.int64)
        mask = (1 << width) - 1
        for b in range(width):
            self.data[:n_rows, col, base + b] = ((vals & mask) >> b) & 1

    def peek(self, col: int, base: int, width: int, n_rows: int,
             signed: bool = True) -> np.ndarray:
        vals = np.zeros(n_rows, dtype=np.int64)
        for b in range(width):
            vals |= self.data[:n_rows, col, base + b].astype(np.int64) << b
        if signed:
            vals -= ((vals >> (width - 1)) & 1) << width
        return vals


class SimState:
    """Lazy AP pool plus the event log. APs materialize on first touch and
    persist across layers, which is exactly why programs must not assume
    freshly zeroed columns."""

    def __init__(self, geometry: ApGeometry):
        self.geometry = geometry
        self.aps: dict[int, CamArray] = {}
        self.events: list[Event] = []

    def ap(self, ap_id: int) -> CamArray:
        if ap_id not in self.aps:
            self.aps[ap_id] = CamArray(self.geometry)
        return self.aps[ap_id]

    def log(self, kind, ap, layer, phase, epoch, bits, steps, cycles):
        self.events.append(Event(kind, ap, layer, phase, epoch, bits, steps,
                                 cycles))

    def col_write_max(self) -> int:
        return max((int(cam.writes.max()) for cam in self.aps.values()),
                   default=0)


def execute_micro_ops(state: SimState, ap_id: int, ops: list[isa.MicroOp],
                      layer: int = 0, phase: str = "dfg", epoch: int = 0):
    """Run expanded micro-ops against one AP, logging every costed action.

    Shifts carry their step count from expansion (planned against a copy of
    the AP's alignment), so applying them here keeps plan and state in sync.
    """
    cam = state.ap(ap_id)
    for op in ops:
        if op.kind == "search":
            vis = np.ones(cam.rows, dtype=bool)
            for col, want in zip(op.cols, op.key):
                vis &= cam.visible(col) == want
            cam.tag = vis
            state.log("search", ap_id, layer, phase, epoch,
                      len(op.cols) * cam.rows, 0, 1)
        elif op.kind == "write":
            sel = cam.tag
            n_sel = int(sel.sum())
            for col, bit in zip(op.cols, op.bits):
                cam.data[sel, col, cam.align.get(col, 0)] = bit
                cam.writes[col] += 1
            state.log("write", ap_id, layer, phase, epoch,
                      len(op.cols) * n_sel, 0, 1)
        elif op.kind == "clear":
            for col in op.cols:
                cam.data[:, col, cam.align.get(col, 0)] = 0
                cam.writes[col] += 1
            state.log("write", ap_id, layer, phase, epoch,
                      len(op.cols) * cam.rows, 0, 1)
        elif op.kind == "shift":
            cam.align[op.col] = op.target
            if op.steps:
                state.log("shift", ap_id, layer, phase, epoch, cam.rows,
                          op.steps, op.steps)
        else:
            raise SimulationError(f"unexpected micro-op kind {op.kind!r}")


def run_macro(state: SimState, ap_id: int, macro: isa.MacroInstr,
              table: isa.LutTable, layer: int = 0, phase: str = "dfg",
              epoch: int = 0) -> list[isa.MicroOp]:
    """Expand one macro against the AP's live alignment and execute it."""
    cam = state.ap(ap_id)
    ops = isa.expand_macro(macro, table, dict(cam.align))
    execute_micro_ops(state, ap_id, ops, layer, phase, epoch)
    return ops


# ---------------------------------------------------------------------------
# program execution
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    trace: list[FeatureMap]
    events: list[Event]
    state: SimState


def _macro_from_item(item: dict) -> isa.MacroInstr:
    def ref(raw):
        return isa.OperandRef(int(raw[0]), int(raw[1]), int(raw[2]), bool(raw[3]))
    return isa.MacroInstr(item["op"], item["mode"], bool(item["neg"]),
                          int(item["m"]), ref(item["a"]), ref(item["b"]),
                          tuple(item["dest"]), int(item["dest_base"]),
                          int(item["carry"]), int(item["zero"]))


def _exec_macro_item(state, ap_id, item, luts, layer, epoch):
    macro = _macro_from_item(item)
    key = (macro.op_kind, macro.addressing, macro.negated)
    if key not in luts:
        raise FormatError(f"program carries no lut for {key}")
    run_macro(state, ap_id, macro, luts[key], layer, item["ph"], epoch)


def _exec_move_item(state, item, dst_ap, layer, epoch):
    src = state.ap(item["src_ap"])
    dst = state.ap(dst_ap)
    w = int(item["m"])
    s0, d0 = int(item["src_base"]), int(item["dst_base"])
    dst.data[:, item["dst_col"], d0:d0 + w] = \
        src.data[:, item["src_col"], s0:s0 + w]
    dst.writes[item["dst_col"]] += w
    state.log("move", dst_ap, layer, item["ph"], epoch, dst.rows * w, 0, w)


def _shift_log(state, ap_id, col, target, layer, phase, epoch):
    cam = state.ap(ap_id)
    cur = cam.align.get(col, 0)
    if cur != target:
        cam.align[col] = target
        steps = abs(target - cur)
        state.log("shift", ap_id, layer, phase, epoch, cam.rows, steps, steps)


def _read_signed(state, ap_id, col, base, width, n_rows, layer, epoch):
    """Read one value column through the port: a shift plus one search per
    bit, reconstructing two's-complement integers for the controller."""
    cam = state.ap(ap_id)
    vals = np.zeros(n_rows, dtype=np.int64)
    for b in range(width):
        _shift_log(state, ap_id, col, base + b, layer, "io", epoch)
        state.log("search", ap_id, layer, "io", epoch, cam.rows, 0, 1)
        vals |= cam.visible(col)[:n_rows].astype(np.int64) << b
    vals -= ((vals >> (width - 1)) & 1) << width
    return vals


def _run_conv(state: SimState, lp: dict, cur: FeatureMap,
              prov: np.ndarray | None, luts, epoch: int):
    geo = state.geometry
    layer = lp["index"]
    shape = LayerShape(lp["c_in"], lp["c_out"], lp["f_h"], lp["f_w"],
                       lp["stride"], lp["pad"], lp["h_in"], lp["w_in"])
    pim = im2col_indices(shape)
    in_bits = lp["in_bits"]
    groups = lp["channel_groups"]
    rows_used = lp["rows_used"]
    tiles = lp["tiles"]
    aps = {tuple(int(x) for x in k.split(",")): v
           for k, v in lp["aps"].items()}
    ap_list = sorted(aps.items())
    patches = [extract_patches(cur, pim, ch) for ch in range(shape.c_in)]

    # load: column hygiene, interconnect from producer APs, bit-planes in
    ep_load = epoch
    for (rg, og, cg), ap_id in ap_list:
        cam = state.ap(ap_id)
        td = tiles[og]
        ru = rows_used[rg]
        base_pos = rg * geo.rows
        # carry must sit at domain 0 (the expander insists) and the reserved
        # zero column must actually read zero on a reused array
        _shift_log(state, ap_id, td["carry"], 0, layer, "io", ep_load)
        _shift_log(state, ap_id, td["zero"], 0, layer, "io", ep_load)
        cam.data[:, td["zero"], 0] = 0
        cam.writes[td["zero"]] += 1
        state.log("write", ap_id, layer, "io", ep_load, cam.rows, 0, 1)
        if prov is not None:
            agg: dict[int, int] = {}
            for ch in groups[cg]:
                ys = pim.ys[base_pos:base_pos + ru]
                xs = pim.xs[base_pos:base_pos + ru]
                m = ys >= 0
                srcs, counts = np.unique(prov[ch][ys[m], xs[m]],
                                         return_counts=True)
                for s, n in zip(srcs, counts):
                    agg[int(s)] = agg.get(int(s), 0) + int(n)
            for src in sorted(agg):
                bits = agg[src] * in_bits
                state.log("move", ap_id, layer, "io", ep_load, bits, 0,
                          -(-bits // geo.rows))
        for ci, ch in enumerate(groups[cg]):
            vals = patches[ch][base_pos:base_pos + ru]
            for k in range(pim.slots):
                for b in range(in_bits):
                    dom = ci * in_bits + b
                    _shift_log(state, ap_id, k, dom, layer, "io", ep_load)
                    cam.data[:ru, k, dom] = (vals[:, k] >> b) & 1
                    cam.writes[k] += 1
                    state.log("write", ap_id, layer, "io", ep_load, ru, 0, 1)

    # per-AP channel DFGs and accumulator folds
    ep_work = epoch + 1
    for (_key, ap_id) in ap_list:
        for item in lp["streams"][str(ap_id)]:
            _exec_macro_item(state, ap_id, item, luts, layer, ep_work)

    # adder tree across channel groups
    ep_next = ep_work + 1
    for level in lp["tree"]:
        for entry in level:
            for item in entry["items"]:
                if item["t"] == "move":
                    _exec_move_item(state, item, entry["dst"], layer, ep_next)
                else:
                    _exec_macro_item(state, entry["dst"], item, luts, layer,
                                     ep_next)
        ep_next += 1

    # readout at the tree roots, then requantize in the controller
    positions = shape.h_out * shape.w_out
    acc = np.zeros((shape.c_out, positions), dtype=np.int64)
    for og, td in enumerate(tiles):
        w_acc = td["acc_width"]
        for rg in range(len(rows_used)):
            ap_id = aps[(rg, og, 0)]
            ru = rows_used[rg]
            base_pos = rg * geo.rows
            for r in range(td["c_lo"], td["c_hi"]):
                col = td["acc0"] + (r - td["c_lo"])
                vals = _read_signed(state, ap_id, col, 0, w_acc, ru, layer,
                                    ep_next)
                if vals.min() < td["acc_lo"] or vals.max() > td["acc_hi"]:
                    raise SimulationError(
                        f"layer {layer}: accumulator for channel {r} left "
                        f"its proven interval "
                        f"[{td['acc_lo']}, {td['acc_hi']}]")
                acc[r, base_pos:base_pos + ru] = vals
    quant = QuantSpec(lp["out_bits"], lp["multiplier"], lp["shift"],
                      lp["act_kind"])
    ofm = FeatureMap(
        requantize(acc.reshape(shape.c_out, shape.h_out, shape.w_out), quant),
        lp["out_bits"])

    prov_new = np.zeros((shape.c_out, positions), dtype=np.int64)
    for og, td in enumerate(tiles):
        for rg in range(len(rows_used)):
            base_pos = rg * geo.rows
            prov_new[td["c_lo"]:td["c_hi"],
                     base_pos:base_pos + rows_used[rg]] = aps[(rg, og, 0)]
    prov_new = prov_new.reshape(shape.c_out, shape.h_out, shape.w_out)
    return ofm, prov_new, ep_next + 1


def run(program: ApProgram, ifm: FeatureMap) -> RunResult:
    """Execute a compiled program and return the per-layer output trace.

    The trace must match the host reference bit for bit; the event log is
    the raw material for the energy/latency/endurance accounting.
    """
    doc = program.doc
    if ifm.bits != doc["in_bits"]:
        raise FormatError(f"program expects {doc['in_bits']}-bit input, "
                          f"feature map is {ifm.bits}-bit")
    if ifm.shape[1] != doc["in_h"] or ifm.shape[2] != doc["in_w"]:
        raise FormatError(
            f"program compiled for {doc['in_h']}x{doc['in_w']} input, "
            f"feature map is {ifm.shape[1]}x{ifm.shape[2]}")
    luts = program.luts()
    state = SimState(program.geometry)
    trace: list[FeatureMap] = []
    cur = ifm
    prov: np.ndarray | None = None
    epoch = 0
    for lp in program.layers:
        if lp["kind"] == "conv":
            cur, prov, epoch = _run_conv(state, lp, cur, prov, luts, epoch)
        elif lp["kind"] == "pool":
            cur = max_pool_2x2(cur)
            if prov is not None:
                # provenance of the surviving max is data-dependent; charge
                # the block's top-left producer, deterministically
                prov = prov[:, ::2, ::2]
        else:  # add: controller-side, the skip operand is already host data
            skip = lp["skip_from"]
            other = ifm if skip == -1 else trace[skip]
            if other.shape != cur.shape:
                raise SimulationError(
                    f"layer {lp['index']}: add operands differ "
                    f"{cur.shape} vs {other.shape}")
            quant = QuantSpec(lp["out_bits"], lp["multiplier"], lp["shift"],
                              lp["act_kind"])
            acc = cur.data.astype(np.int64) + other.data.astype(np.int64)
            cur = FeatureMap(requantize(acc, quant), lp["out_bits"])
        trace.append(cur)
    return RunResult(trace, state.events, state)


def first_divergence(got: list[FeatureMap], want: list[FeatureMap]):
    """Locate the first mismatching element between two traces.

    Returns None when they agree, else (layer, channel, y, x) of the first
    differing value in layer-major, row-major order.
    """
    for i, (a, b) in enumerate(zip(got, want)):
        if a.shape != b.shape:
            return (i, 0, 0, 0)
        if not np.array_equal(a.data, b.data):
            c, y, x = np.argwhere(a.data != b.data)[0]
            return (i, int(c), int(y), int(x))
    if len(got) != len(want):
        return (min(len(got), len(want)), 0, 0, 0)
    return None
