"""Functional simulation: array state, macros, and whole programs."""

import numpy as np
import pytest

from tapc import isa, sim
from tapc.errors import FormatError, SimulationError
from tapc.model import (FeatureMap, Layer, QuantSpec, TernaryNetwork,
                        TernaryWeights, make_synthetic_input,
                        make_synthetic_network, reference_inference)
from tapc.scheduler import ApGeometry, ApProgram, emit_program

GEO = ApGeometry(rows=64, columns=16, domains_per_track=64)


def conv_layer(c_in, c_out, f, stride, pad, bits, seed, shift=3):
    rng = np.random.default_rng(seed)
    w = rng.choice([-1, 0, 1], size=(c_out, c_in, f, f), p=[0.25, 0.5, 0.25])
    return Layer("conv", c_in, c_out, f, f, stride, pad,
                 QuantSpec(bits, 1, shift, "relu_clamp"), TernaryWeights(w))


def check_net(net, h, w, geometry=None, opts=("unroll_cse",), seed=0):
    geometry = geometry or ApGeometry()
    ifm = make_synthetic_input(net, h, w, seed=seed)
    want = reference_inference(net, ifm)
    result = None
    for opt in opts:
        prog = emit_program(net, h, w, geometry, opt)
        result = sim.run(prog, ifm)
        assert sim.first_divergence(result.trace, want) is None, opt
    return result


# --- array state ----------------------------------------------------------

def test_poke_peek_round_trip():
    cam = sim.SimState(GEO).ap(0)
    vals = np.arange(-32, 32)
    cam.poke(2, 4, 6, vals, 64)
    assert np.array_equal(cam.peek(2, 4, 6, 64, signed=True), vals)
    unsigned = np.arange(64)
    cam.poke(3, 0, 6, unsigned, 64)
    assert np.array_equal(cam.peek(3, 0, 6, 64, signed=False), unsigned)


def test_search_then_write_touches_only_tagged_rows():
    st = sim.SimState(GEO)
    cam = st.ap(0)
    pattern = np.tile([0, 1], 32)
    cam.poke(0, 0, 1, pattern, 64)
    sim.execute_micro_ops(st, 0, [
        isa.MicroOp("search", cols=(0,), key=(1,)),
        isa.MicroOp("write", cols=(1,), bits=(1,), use_tag=True),
    ])
    assert np.array_equal(cam.visible(1), pattern)
    assert cam.writes[1] == 1
    kinds = [e.kind for e in st.events]
    assert kinds == ["search", "write"]
    assert st.events[0].bits == 64          # one column, every row sensed
    assert st.events[1].bits == 32          # only the tagged half written


def test_unknown_micro_op_kind_is_rejected():
    st = sim.SimState(GEO)
    with pytest.raises(SimulationError):
        sim.execute_micro_ops(st, 0, [isa.MicroOp("teleport")])


# --- macro execution ------------------------------------------------------

def make_in_place_add(m):
    a = isa.OperandRef(0, 0, m, True)
    b = isa.OperandRef(1, 0, m, True)
    return isa.MacroInstr(isa.ADD, isa.IN_PLACE, False, m, a, b, (), 0, 3, 4)


def test_negated_out_of_place_macros(pair_harness):
    rng = np.random.default_rng(0)
    a = rng.integers(-8, 8, size=300)
    b = rng.integers(-8, 8, size=300)
    got = pair_harness(isa.SUB, isa.OUT_OF_PLACE, a, b, 4, negated=True)
    assert np.array_equal(got, a - b)       # exact negation of b - a
    got = pair_harness(isa.ADD, isa.OUT_OF_PLACE, a, b, 4, negated=True)
    assert np.array_equal(got, -(a + b) - 1)    # complement; +1 is the consumer's


def test_alignment_persists_between_macros(catalog):
    st = sim.SimState(GEO)
    cam = st.ap(0)
    table = catalog[(isa.ADD, isa.IN_PLACE, False)]
    sim.run_macro(st, 0, make_in_place_add(4), table)
    assert cam.align[0] == 3 and cam.align[1] == 3
    # the second expansion plans against live alignment: both operand
    # columns must first walk back down to bit 0
    ops = sim.run_macro(st, 0, make_in_place_add(4), table)
    first_shifts = [op for op in ops if op.kind == "shift"][:2]
    assert sorted(op.col for op in first_shifts) == [0, 1]
    assert all(op.target == 0 and op.steps == 3 for op in first_shifts)


def test_carry_column_must_sit_at_domain_zero(catalog):
    st = sim.SimState(GEO)
    sim.execute_micro_ops(st, 0, [isa.MicroOp("shift", col=3, target=2, steps=2)])
    with pytest.raises(FormatError):
        sim.run_macro(st, 0, make_in_place_add(4),
                      catalog[(isa.ADD, isa.IN_PLACE, False)])


# --- whole programs against the host reference ----------------------------

def test_single_conv_layer_both_opt_levels():
    net = make_synthetic_network(1, 6, 0.7, bits=4, in_channels=3, seed=3)
    check_net(net, 8, 8, opts=("unroll", "unroll_cse"))


def test_strided_conv():
    net = TernaryNetwork("s2", [conv_layer(2, 3, 3, 2, 1, 4, seed=11)])
    check_net(net, 9, 9)


def test_one_by_one_kernels_alias_inputs():
    net = TernaryNetwork("k1", [conv_layer(3, 4, 1, 1, 0, 4, seed=12, shift=1)])
    check_net(net, 5, 5)


def test_conv_pool_conv_stack():
    net = TernaryNetwork("pool", [
        conv_layer(2, 4, 3, 1, 1, 4, seed=13),
        Layer("pool", 4, 4, 2, 2, 2, 0, QuantSpec(4)),
        conv_layer(4, 3, 3, 1, 1, 4, seed=14),
    ])
    check_net(net, 8, 8)


def test_residual_add_requantizes_the_sum():
    net = TernaryNetwork("res", [
        conv_layer(3, 3, 3, 1, 1, 4, seed=15),
        conv_layer(3, 3, 3, 1, 1, 4, seed=16),
        Layer("add", 3, 3, 1, 1, 1, 0, QuantSpec(4, 1, 1)),
    ])
    result = check_net(net, 6, 6)
    assert len(result.trace) == 3


def test_channel_groups_spread_over_aps_and_merge():
    # 16 input channels at 8 bits only stack 8 per nanowire: two channel
    # groups, one tree level, distinct APs touched
    net = TernaryNetwork("cg", [conv_layer(16, 2, 3, 1, 1, 8, seed=17, shift=6)])
    result = check_net(net, 4, 4)
    assert len(result.state.aps) == 2
    assert any(e.kind == "move" for e in result.events)


def test_row_groups_split_positions():
    net = TernaryNetwork("rg", [conv_layer(2, 2, 3, 1, 1, 4, seed=18)])
    geo = ApGeometry(rows=16, columns=48)
    result = check_net(net, 8, 8, geometry=geo)    # 64 positions -> 4 groups
    assert len(result.state.aps) == 4


def test_output_tiles_on_narrow_columns():
    net = TernaryNetwork("ot", [conv_layer(2, 6, 3, 1, 1, 4, seed=19)])
    geo = ApGeometry(columns=20)
    prog = emit_program(net, 6, 6, geo)
    assert prog.layers[0]["aps"] and len(prog.layers[0]["tiles"]) > 1
    check_net(net, 6, 6, geometry=geo)


def test_ap_reuse_across_layers_is_clean():
    # consecutive conv layers land on the same AP ids; stale accumulators,
    # garbage rows and parked alignments must all be neutralized
    net = make_synthetic_network(3, 4, 0.7, bits=4, in_channels=2, seed=20)
    check_net(net, 6, 6, opts=("unroll", "unroll_cse"))


def test_run_validates_input_shape_and_bits():
    net = make_synthetic_network(1, 4, 0.7, bits=4, in_channels=2, seed=21)
    prog = emit_program(net, 8, 8, ApGeometry())
    with pytest.raises(FormatError):
        sim.run(prog, FeatureMap(np.zeros((2, 8, 8), dtype=np.int64), 8))
    with pytest.raises(FormatError):
        sim.run(prog, FeatureMap(np.zeros((2, 6, 6), dtype=np.int64), 4))


def test_missing_lut_table_is_a_format_error():
    net = make_synthetic_network(1, 4, 0.7, bits=4, in_channels=2, seed=21)
    prog = emit_program(net, 8, 8, ApGeometry())
    doc = dict(prog.doc)
    doc["luts"] = []
    broken = ApProgram(doc)
    with pytest.raises(FormatError):
        sim.run(broken, make_synthetic_input(net, 8, 8))


def test_simulation_is_deterministic():
    net = make_synthetic_network(2, 4, 0.7, bits=4, in_channels=2, seed=22)
    ifm = make_synthetic_input(net, 6, 6, seed=1)
    prog = emit_program(net, 6, 6, ApGeometry())
    r1 = sim.run(prog, ifm)
    r2 = sim.run(prog, ifm)
    assert sim.export_events(r1.events) == sim.export_events(r2.events)
    assert sim.first_divergence(r1.trace, r2.trace) is None
    assert r1.state.col_write_max() > 0


# --- diagnostics ----------------------------------------------------------

def test_first_divergence_coordinates():
    a = FeatureMap(np.zeros((2, 3, 3), dtype=np.int64), 4)
    b = FeatureMap(np.zeros((2, 3, 3), dtype=np.int64), 4)
    tampered = FeatureMap(b.data.copy(), 4)
    tampered.data[1, 2, 1] = 5
    assert sim.first_divergence([a, b], [a, b]) is None
    assert sim.first_divergence([a, tampered], [a, b]) == (1, 1, 2, 1)
    assert sim.first_divergence([a], [a, b]) == (1, 0, 0, 0)
    small = FeatureMap(np.zeros((2, 2, 2), dtype=np.int64), 4)
    assert sim.first_divergence([small], [a]) == (0, 0, 0, 0)


def test_export_events_header_and_rows():
    st = sim.SimState(GEO)
    sim.execute_micro_ops(st, 0, [isa.MicroOp("search", cols=(0,), key=(0,))],
                          layer=2, phase="dfg", epoch=7)
    text = sim.export_events(st.events)
    lines = text.splitlines()
    assert lines[0] == sim.EXPORT_HEADER == "kind,ap,bits,steps,epoch"
    assert lines[1] == "search,0,64,0,7"
