"""Energy, latency and endurance accounting over simulator event logs.

Costs are charged per event: searches and writes per bit touched, shifts per
track and domain step, inter-array moves at a flat per-bit rate that already
folds in the read, transfer and write at the far end. Latency adds up epoch
by epoch, taking the slowest AP inside each epoch (APs run in lockstep
between barriers, epochs are sequential).

The default constants are deliberately few and are echoed into every report
so a reader can see exactly what a number was built from.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

EVENT_KINDS = ("search", "write", "shift", "move")
PHASES = ("io", "dfg", "accum")

NS_PER_YEAR = 365.25 * 24 * 3600 * 1e9

CSV_COLUMNS = ("layer", "cycles", "ns", "e_search_pJ", "e_write_pJ",
               "e_shift_pJ", "e_move_pJ", "e_total_pJ", "adds", "utilization")


@dataclass
class EnergyModel:
    search_fj_per_bit: float = 3.0   # per compared bit, all rows of a search
    write_fj_per_bit: float = 3.0    # per written bit; assumed equal to search
    shift_fj_per_step: float = 0.1   # per track and domain step; assumption
    move_pj_per_bit: float = 1.0     # flat inter-array transfer, any distance
    cycle_ns: float = 0.1
    write_endurance: float = 1e16    # write cycles one cell survives

    def assumptions(self) -> list[str]:
        return [
            f"search energy {self.search_fj_per_bit} fJ/bit",
            f"write energy {self.write_fj_per_bit} fJ/bit (taken equal to search)",
            f"shift energy {self.shift_fj_per_step} fJ/track-step (assumed)",
            f"move energy {self.move_pj_per_bit} pJ/bit, flat across hops",
            f"cycle time {self.cycle_ns} ns",
            f"write endurance {self.write_endurance:.0e} cycles",
        ]


def event_energy_pj(event, model: EnergyModel) -> float:
    if event.kind == "search":
        return event.bits * model.search_fj_per_bit * 1e-3
    if event.kind == "write":
        return event.bits * model.write_fj_per_bit * 1e-3
    if event.kind == "shift":
        return event.bits * event.steps * model.shift_fj_per_step * 1e-3
    if event.kind == "move":
        return event.bits * model.move_pj_per_bit
    raise ValueError(f"unknown event kind {event.kind!r}")


@dataclass
class LayerStats:
    layer: int
    kind: str
    cycles: int
    ns: float
    energy_pj: dict[str, float]   # by event kind
    phase_pj: dict[str, float]    # by phase
    adds: int
    subs: int
    utilization: float

    @property
    def total_pj(self) -> float:
        return sum(self.energy_pj.values())


@dataclass
class Stats:
    name: str
    opt: str
    layers: list[LayerStats]
    total_cycles: int
    total_ns: float
    energy_pj: dict[str, float]
    phase_pj: dict[str, float]
    adds: int
    subs: int
    arrays_used: int
    max_col_writes: int
    model: dict = field(default_factory=dict)

    @property
    def total_pj(self) -> float:
        return sum(self.energy_pj.values())

    @property
    def interconnect_share(self) -> float:
        t = self.total_pj
        return self.energy_pj["move"] / t if t else 0.0

    def to_doc(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_doc(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_doc(cls, doc: dict) -> "Stats":
        layers = [LayerStats(**d) for d in doc["layers"]]
        rest = {k: v for k, v in doc.items() if k != "layers"}
        return cls(layers=layers, **rest)


def account(program, result, model: EnergyModel | None = None) -> Stats:
    """Fold a run's event log into per-layer and total statistics."""
    model = model or EnergyModel()
    geo = program.geometry
    per_layer: dict[int, dict] = {}
    for lp in program.layers:
        util = 0.0
        if lp["kind"] == "conv":
            positions = sum(lp["rows_used"])
            util = positions / (lp["row_groups"] * geo.rows)
        per_layer[lp["index"]] = {
            "kind": lp["kind"],
            "energy": {k: 0.0 for k in EVENT_KINDS},
            "phase": {p: 0.0 for p in PHASES},
            "epochs": {},   # epoch -> ap -> cycles
            "adds": lp.get("macro_adds", 0),
            "subs": lp.get("macro_subs", 0),
            "util": util,
        }
    for ev in result.events:
        slot = per_layer[ev.layer]
        pj = event_energy_pj(ev, model)
        slot["energy"][ev.kind] += pj
        slot["phase"][ev.phase] += pj
        by_ap = slot["epochs"].setdefault(ev.epoch, {})
        by_ap[ev.ap] = by_ap.get(ev.ap, 0) + ev.cycles

    layers = []
    tot_energy = {k: 0.0 for k in EVENT_KINDS}
    tot_phase = {p: 0.0 for p in PHASES}
    tot_cycles = tot_adds = tot_subs = 0
    for idx in sorted(per_layer):
        slot = per_layer[idx]
        cycles = sum(max(by_ap.values()) for by_ap in slot["epochs"].values())
        layers.append(LayerStats(
            layer=idx, kind=slot["kind"], cycles=cycles,
            ns=cycles * model.cycle_ns,
            energy_pj=slot["energy"], phase_pj=slot["phase"],
            adds=slot["adds"], subs=slot["subs"], utilization=slot["util"]))
        for k in EVENT_KINDS:
            tot_energy[k] += slot["energy"][k]
        for p in PHASES:
            tot_phase[p] += slot["phase"][p]
        tot_cycles += cycles
        tot_adds += slot["adds"]
        tot_subs += slot["subs"]
    return Stats(
        name=program.doc["name"], opt=program.doc["opt"], layers=layers,
        total_cycles=tot_cycles, total_ns=tot_cycles * model.cycle_ns,
        energy_pj=tot_energy, phase_pj=tot_phase,
        adds=tot_adds, subs=tot_subs,
        arrays_used=len(result.state.aps),
        max_col_writes=result.state.col_write_max(),
        model=asdict(model))


# ---------------------------------------------------------------------------
# endurance
# ---------------------------------------------------------------------------

def endurance_years(model: EnergyModel, rewrite_interval_ns: float) -> float:
    """Lifetime of a cell rewritten every `rewrite_interval_ns`."""
    return model.write_endurance * rewrite_interval_ns / NS_PER_YEAR


def endurance_estimate(stats: Stats, model: EnergyModel | None = None) -> float:
    """Worst-column lifetime in years if this run looped back to back.

    The hottest column saw `max_col_writes` write cycles in `total_ns`, so
    its mean rewrite interval is the ratio, and the endurance budget divides
    out. Returns inf when nothing was written.
    """
    model = model or EnergyModel()
    if stats.max_col_writes == 0:
        return float("inf")
    interval_ns = stats.total_ns / stats.max_col_writes
    return endurance_years(model, interval_ns)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def to_csv(stats: Stats) -> str:
    """Per-layer table; the adds column counts add and sub macros together."""
    lines = [",".join(CSV_COLUMNS)]
    for ls in stats.layers:
        lines.append(",".join([
            str(ls.layer), str(ls.cycles), f"{ls.ns:.3f}",
            f"{ls.energy_pj['search']:.6f}", f"{ls.energy_pj['write']:.6f}",
            f"{ls.energy_pj['shift']:.6f}", f"{ls.energy_pj['move']:.6f}",
            f"{ls.total_pj:.6f}", str(ls.adds + ls.subs),
            f"{ls.utilization:.4f}"]))
    lines.append(",".join([
        "total", str(stats.total_cycles), f"{stats.total_ns:.3f}",
        f"{stats.energy_pj['search']:.6f}", f"{stats.energy_pj['write']:.6f}",
        f"{stats.energy_pj['shift']:.6f}", f"{stats.energy_pj['move']:.6f}",
        f"{stats.total_pj:.6f}", str(stats.adds + stats.subs), ""]))
    return "\n".join(lines) + "\n"


def format_report(stats: Stats, baseline: Stats | None = None) -> str:
    """Human-readable account; pass the unoptimized run as baseline to get
    the side-by-side reduction figures."""
    model = EnergyModel(**stats.model) if stats.model else EnergyModel()
    out = []
    out.append(f"network {stats.name}  (opt={stats.opt})")
    out.append("model assumptions: " + "; ".join(model.assumptions()))
    out.append("")
    header = (f"{'layer':>5} {'kind':>5} {'cycles':>9} {'ns':>10} "
              f"{'pJ':>12} {'adds':>7} {'util':>6}")
    out.append(header)
    for ls in stats.layers:
        out.append(f"{ls.layer:>5} {ls.kind:>5} {ls.cycles:>9} "
                   f"{ls.ns:>10.2f} {ls.total_pj:>12.3f} "
                   f"{ls.adds + ls.subs:>7} {ls.utilization:>6.3f}")
    out.append(f"{'total':>5} {'':>5} {stats.total_cycles:>9} "
               f"{stats.total_ns:>10.2f} {stats.total_pj:>12.3f} "
               f"{stats.adds + stats.subs:>7}")
    out.append("")
    e = stats.energy_pj
    out.append("energy by kind [pJ]: " + "  ".join(
        f"{k}={e[k]:.3f}" for k in EVENT_KINDS))
    p = stats.phase_pj
    out.append("energy by phase [pJ]: " + "  ".join(
        f"{k}={p[k]:.3f}" for k in PHASES))
    out.append(f"interconnect share: {100 * stats.interconnect_share:.1f}%")
    out.append(f"arrays used: {stats.arrays_used}   "
               f"hottest column: {stats.max_col_writes} writes")
    yrs = endurance_estimate(stats, model)
    out.append(f"endurance at this duty cycle: "
               f"{'unbounded' if yrs == float('inf') else f'{yrs:.1f} years'}")
    if baseline is not None:
        ops_a, ops_b = stats.adds + stats.subs, baseline.adds + baseline.subs
        red_ops = 100 * (1 - ops_a / ops_b) if ops_b else 0.0
        red_e = (100 * (1 - stats.total_pj / baseline.total_pj)
                 if baseline.total_pj else 0.0)
        red_t = (100 * (1 - stats.total_ns / baseline.total_ns)
                 if baseline.total_ns else 0.0)
        out.append("")
        out.append(f"vs {baseline.opt}: ops {ops_b} -> {ops_a} "
                   f"({red_ops:.1f}% fewer), energy {red_e:.1f}% lower, "
                   f"latency {red_t:.1f}% lower")
    return "\n".join(out) + "\n"
