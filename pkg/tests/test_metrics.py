"""Energy, latency and endurance accounting."""

import json
import types

import pytest

from tapc import metrics, sim
from tapc.model import make_synthetic_input, make_synthetic_network
from tapc.scheduler import ApGeometry, ApProgram, emit_program


@pytest.fixture(scope="module")
def accounted():
    net = make_synthetic_network(2, 6, 0.7, bits=4, in_channels=3, seed=9)
    ifm = make_synthetic_input(net, 8, 8, seed=2)
    out = {}
    for opt in ("unroll", "unroll_cse"):
        prog = emit_program(net, 8, 8, ApGeometry(), opt)
        result = sim.run(prog, ifm)
        out[opt] = (prog, result, metrics.account(prog, result))
    return out


def test_event_energy_anchors():
    model = metrics.EnergyModel()
    # 3 masked columns sensed across 256 rows at 3 fJ/bit
    search = sim.Event("search", 0, 0, "dfg", 0, 3 * 256, 0, 1)
    assert metrics.event_energy_pj(search, model) == pytest.approx(2.304, rel=1e-9)
    write = sim.Event("write", 0, 0, "dfg", 0, 3 * 256, 0, 1)
    assert metrics.event_energy_pj(write, model) == pytest.approx(2.304, rel=1e-9)
    # a 2048-bit transfer at the flat 1 pJ/bit move rate
    move = sim.Event("move", 0, 0, "accum", 0, 2048, 0, 8)
    assert metrics.event_energy_pj(move, model) == pytest.approx(2048.0, rel=1e-9)
    # 256 tracks moved 2 domains at 0.1 fJ/track-step
    shift = sim.Event("shift", 0, 0, "dfg", 0, 256, 2, 2)
    assert metrics.event_energy_pj(shift, model) == pytest.approx(0.0512, rel=1e-9)
    with pytest.raises(ValueError):
        metrics.event_energy_pj(sim.Event("tunnel", 0, 0, "dfg", 0, 1, 0, 1), model)


def test_account_categories_sum_to_total(accounted):
    for opt, (prog, result, stats) in accounted.items():
        by_layers = sum(ls.total_pj for ls in stats.layers)
        assert stats.total_pj == pytest.approx(by_layers, rel=1e-9)
        assert sum(stats.phase_pj.values()) == pytest.approx(stats.total_pj, rel=1e-9)
        for kind in metrics.EVENT_KINDS:
            per_layer = sum(ls.energy_pj[kind] for ls in stats.layers)
            assert stats.energy_pj[kind] == pytest.approx(per_layer, rel=1e-9)
        # total re-derivable from raw events
        model = metrics.EnergyModel()
        raw = sum(metrics.event_energy_pj(e, model) for e in result.events)
        assert stats.total_pj == pytest.approx(raw, rel=1e-9)
        assert stats.arrays_used == len(result.state.aps)
        assert stats.max_col_writes == result.state.col_write_max()
        assert stats.adds + stats.subs > 0
        assert stats.opt == opt


def test_latency_is_epochwise_max_over_lockstep_aps():
    geo = ApGeometry()
    prog = ApProgram({
        "format_version": 1, "name": "crafted", "opt": "unroll",
        "in_bits": 4, "in_h": 2, "in_w": 2,
        "geometry": {"rows": geo.rows, "columns": geo.columns,
                     "domains_per_track": geo.domains_per_track,
                     "aps_per_tile": geo.aps_per_tile,
                     "tiles_per_bank": geo.tiles_per_bank, "banks": geo.banks},
        "luts": [], "layers": [{"kind": "pool", "index": 0}],
    })
    events = [
        sim.Event("search", 0, 0, "dfg", 0, 64, 0, 4),
        sim.Event("write", 0, 0, "dfg", 0, 64, 0, 6),    # ap0, epoch0: 10
        sim.Event("search", 1, 0, "dfg", 0, 64, 0, 8),   # ap1, epoch0: 8
        sim.Event("shift", 0, 0, "dfg", 1, 64, 3, 3),    # ap0, epoch1: 3
        sim.Event("search", 1, 0, "dfg", 1, 64, 0, 9),   # ap1, epoch1: 9
    ]
    state = sim.SimState(geo)
    state.ap(0), state.ap(1)
    result = types.SimpleNamespace(events=events, state=state)
    stats = metrics.account(prog, result)
    assert stats.total_cycles == max(10, 8) + max(3, 9) == 19
    assert stats.total_ns == pytest.approx(1.9, rel=1e-9)


def test_endurance_anchor_at_100ns_rewrite_interval():
    years = metrics.endurance_years(metrics.EnergyModel(), 100.0)
    assert years == pytest.approx(31.6888, rel=1e-3)


def _bare_stats(total_ns, max_col_writes):
    return metrics.Stats(
        name="x", opt="unroll", layers=[], total_cycles=0, total_ns=total_ns,
        energy_pj={k: 0.0 for k in metrics.EVENT_KINDS},
        phase_pj={p: 0.0 for p in metrics.PHASES},
        adds=0, subs=0, arrays_used=0, max_col_writes=max_col_writes)


def test_endurance_estimate_divides_runtime_by_hottest_column():
    stats = _bare_stats(total_ns=1000.0, max_col_writes=10)
    want = metrics.endurance_years(metrics.EnergyModel(), 100.0)
    assert metrics.endurance_estimate(stats) == pytest.approx(want, rel=1e-9)
    assert metrics.endurance_estimate(_bare_stats(5.0, 0)) == float("inf")


def test_csv_layout(accounted):
    _, _, stats = accounted["unroll_cse"]
    text = metrics.to_csv(stats)
    lines = text.splitlines()
    assert lines[0] == ",".join(metrics.CSV_COLUMNS) == (
        "layer,cycles,ns,e_search_pJ,e_write_pJ,e_shift_pJ,e_move_pJ,"
        "e_total_pJ,adds,utilization")
    assert len(lines) == len(stats.layers) + 2
    assert lines[-1].startswith("total,")
    for line in lines[1:]:
        fields = line.split(",")
        assert len(fields) == len(metrics.CSV_COLUMNS)
        # energy fields parse as floats and stay non-negative
        assert all(float(f) >= 0.0 for f in fields[2:8])


def test_report_renders_assumptions_and_comparison(accounted):
    _, _, base = accounted["unroll"]
    _, _, stats = accounted["unroll_cse"]
    report = metrics.format_report(stats, baseline=base)
    assert "model assumptions:" in report
    assert "3.0 fJ/bit" in report
    assert "0.1 fJ/track-step (assumed)" in report
    assert "interconnect share:" in report
    assert "endurance at this duty cycle:" in report
    assert "vs unroll: ops" in report
    assert "% fewer" in report
    solo = metrics.format_report(stats)
    assert "vs unroll" not in solo


def test_stats_round_trip(accounted):
    _, _, stats = accounted["unroll_cse"]
    doc = json.loads(stats.dumps())
    again = metrics.Stats.from_doc(doc)
    assert again.dumps() == stats.dumps()
    assert again.total_pj == pytest.approx(stats.total_pj, rel=1e-12)
