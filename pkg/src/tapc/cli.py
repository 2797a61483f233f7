"""Command line front end.

One command per process, no daemon state: compile and run read their inputs,
write their artifacts into --out-dir and exit. Exit codes are part of the
contract: 0 success, 2 verification mismatch, 3 capacity exceeded, 4 bad
input format, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import isa, metrics, sim
from .errors import CapacityError, FormatError, LutDerivationError, TapcError
from .model import (FeatureMap, load_feature_map, load_network,
                    make_synthetic_input, make_synthetic_network,
                    reference_inference, save_feature_map)
from .scheduler import ApGeometry, ApProgram, emit_program

_OPT_MAP = {"unroll": "unroll", "unroll+cse": "unroll_cse"}


def _add_geometry_flags(p):
    p.add_argument("--rows", type=int, default=256)
    p.add_argument("--cols", type=int, default=256)
    p.add_argument("--domains", type=int, default=64)
    p.add_argument("--aps-per-tile", type=int, default=4)
    p.add_argument("--tiles-per-bank", type=int, default=4)
    p.add_argument("--banks", type=int, default=4)


def _add_energy_flags(p):
    p.add_argument("--cycle-ps", type=float, default=100.0)
    p.add_argument("--search-fj", type=float, default=3.0)
    p.add_argument("--write-fj", type=float, default=3.0)
    p.add_argument("--move-pj", type=float, default=1.0)


def _add_model_flags(p):
    p.add_argument("--model", help="network manifest (JSON)")
    p.add_argument("--weights", help="packed ternary weight blob")
    p.add_argument("--synthetic", metavar="LxCxS",
                   help="generate a network: layers x channels x sparsity, "
                        "e.g. 3x16x0.85")
    p.add_argument("--bits", type=int, default=4,
                   help="activation bits for --synthetic")


def _geometry(args) -> ApGeometry:
    return ApGeometry(rows=args.rows, columns=args.cols,
                      domains_per_track=args.domains,
                      aps_per_tile=args.aps_per_tile,
                      tiles_per_bank=args.tiles_per_bank, banks=args.banks)


def _energy_model(args) -> metrics.EnergyModel:
    return metrics.EnergyModel(search_fj_per_bit=args.search_fj,
                               write_fj_per_bit=args.write_fj,
                               move_pj_per_bit=args.move_pj,
                               cycle_ns=args.cycle_ps / 1000.0)


def _load_net(args):
    if args.synthetic:
        try:
            l, c, s = args.synthetic.split("x")
            return make_synthetic_network(int(l), int(c), float(s),
                                          bits=args.bits, seed=args.seed)
        except ValueError as exc:
            raise FormatError(f"bad --synthetic spec {args.synthetic!r}: "
                              f"expected LxCxS") from exc
    if not args.model or not args.weights:
        raise FormatError("need --model and --weights, or --synthetic")
    return load_network(args.model, args.weights)


def _parse_hw(text) -> tuple[int, int]:
    try:
        h, w = (int(t) for t in text.split("x"))
        return h, w
    except ValueError as exc:
        raise FormatError(f"bad size {text!r}: expected HxW") from exc


def _input_map(args, net=None, program=None) -> FeatureMap:
    if args.input:
        return load_feature_map(args.input)
    if net is not None:
        h, w = _parse_hw(args.input_hw)
        return make_synthetic_input(net, h, w, seed=args.seed)
    doc = program.doc
    c_in = next(lp["c_in"] for lp in doc["layers"] if lp["kind"] == "conv")
    rng = np.random.default_rng(args.seed)
    data = rng.integers(0, 1 << doc["in_bits"],
                        size=(c_in, doc["in_h"], doc["in_w"]), dtype=np.int64)
    return FeatureMap(data, doc["in_bits"])


def _out_path(args, name) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_compile(args) -> int:
    net = _load_net(args)
    h, w = _parse_hw(args.input_hw)
    prog = emit_program(net, h, w, _geometry(args), _OPT_MAP[args.opt])
    prog.save(_out_path(args, "program.json"))
    report = {"network": net.name, "opt": prog.doc["opt"],
              "layers": prog.report_rows, "lut_notes": prog.lut_notes}
    _write(_out_path(args, "compile_report.json"),
           json.dumps(report, sort_keys=True, indent=1) + "\n")
    for note in prog.lut_notes:
        print(f"lut: {note}")
    for row in prog.report_rows:
        if row["kind"] != "conv":
            continue
        print(f"layer {row['layer']}: ops unroll={row['ops_unroll']} "
              f"cse={row['ops_cse']} (emitting {row['macro_adds'] + row['macro_subs']} "
              f"macros on {row['aps']} APs, {row['columns_used']} columns)")
    print(f"wrote {_out_path(args, 'program.json')}")
    return 0


def cmd_run(args) -> int:
    if args.program:
        prog = ApProgram.load(args.program)
        ifm = _input_map(args, program=prog)
    else:
        net = _load_net(args)
        ifm = _input_map(args, net=net)
        prog = emit_program(net, ifm.shape[1], ifm.shape[2], _geometry(args),
                            _OPT_MAP[args.opt])
        prog.save(_out_path(args, "program.json"))
    model = _energy_model(args)
    result = sim.run(prog, ifm)
    stats = metrics.account(prog, result, model)
    _write(_out_path(args, "stats.json"), stats.dumps())
    _write(_out_path(args, "report.txt"), metrics.format_report(stats))
    _write(_out_path(args, "report.csv"), metrics.to_csv(stats))
    _write(_out_path(args, "events.csv"), sim.export_events(result.events))
    last = result.trace[-1]
    if last.bits <= 8:
        save_feature_map(last, _out_path(args, "output.tfm"))
    print(metrics.format_report(stats), end="")
    return 0


def cmd_verify(args) -> int:
    net = _load_net(args)
    if args.program:
        prog = ApProgram.load(args.program)
        ifm = _input_map(args, program=prog)
    else:
        ifm = _input_map(args, net=net)
        prog = emit_program(net, ifm.shape[1], ifm.shape[2], _geometry(args),
                            _OPT_MAP[args.opt])
    want = reference_inference(net, ifm)
    got = sim.run(prog, ifm).trace
    div = sim.first_divergence(got, want)
    if div is None:
        print(f"PASS: {len(want)} layers bit-exact against the host reference")
        return 0
    layer, c, y, x = div
    print(f"FAIL: first divergence at layer {layer}, channel {c}, "
          f"y={y}, x={x}")
    return 2


def cmd_lut(args) -> int:
    if args.action == "check":
        printed = isa.builtin_luts()
        for _key, table in sorted(printed.items()):
            if args.op and table.op_kind != args.op:
                continue
            if args.mode and table.addressing != args.mode:
                continue
            print(isa.format_lut(table), end="")
            check = isa.validate_lut(table)
            if check.ok:
                print(f"ok: {table.name} exact on all 8 states, "
                      f"{table.pass_count} passes")
            else:
                fixed = isa.derive_lut(table.op_kind, table.addressing)
                diverged = sorted(
                    k for k in table.entries
                    if (table.entries[k].write, table.entries[k].pass_index)
                    != (fixed.entries[k].write, fixed.entries[k].pass_index))
                print(f"BROKEN: {table.name} fails on "
                      f"{len(check.counterexamples)} states; "
                      f"repair touches keys {diverged}")
                print("repaired table:")
                print(isa.format_lut(fixed), end="")
            print()
        return 0
    # derive
    try:
        table = isa.derive_lut(args.op, args.mode, negated=args.negated)
    except LutDerivationError as exc:
        print(f"infeasible: {exc}")
        return 0
    print(isa.format_lut(table), end="")
    check = isa.validate_lut(table)
    print(f"{'ok' if check.ok else 'BROKEN'}: {table.name}, "
          f"{table.pass_count} passes")
    return 0


def cmd_report(args) -> int:
    with open(args.stats) as fh:
        stats = metrics.Stats.from_doc(json.load(fh))
    baseline = None
    if args.baseline:
        with open(args.baseline) as fh:
            baseline = metrics.Stats.from_doc(json.load(fh))
    text = metrics.format_report(stats, baseline)
    print(text, end="")
    if args.out_dir:
        _write(_out_path(args, "report.txt"), text)
        _write(_out_path(args, "report.csv"), metrics.to_csv(stats))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tapc",
        description="compile and simulate ternary CNNs on in-memory "
                    "search/write arrays")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="lower a network into an AP program")
    _add_model_flags(p)
    _add_geometry_flags(p)
    p.add_argument("--opt", choices=sorted(_OPT_MAP), default="unroll+cse")
    p.add_argument("--input-hw", default="16x16", metavar="HxW")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="execute a program on the simulator")
    _add_model_flags(p)
    _add_geometry_flags(p)
    _add_energy_flags(p)
    p.add_argument("--program", help="compiled program (skips compilation)")
    p.add_argument("--input", help="input feature map (.tfm)")
    p.add_argument("--input-hw", default="16x16", metavar="HxW")
    p.add_argument("--opt", choices=sorted(_OPT_MAP), default="unroll+cse")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify",
                       help="check the simulator against the host reference")
    _add_model_flags(p)
    _add_geometry_flags(p)
    p.add_argument("--program", help="use this program instead of compiling")
    p.add_argument("--input", help="input feature map (.tfm)")
    p.add_argument("--input-hw", default="16x16", metavar="HxW")
    p.add_argument("--opt", choices=sorted(_OPT_MAP), default="unroll+cse")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("lut", help="inspect or derive pass tables")
    p.add_argument("action", choices=("check", "derive"))
    p.add_argument("--op", choices=(isa.ADD, isa.SUB))
    p.add_argument("--mode", choices=(isa.IN_PLACE, isa.OUT_OF_PLACE))
    p.add_argument("--negated", action="store_true")
    p.set_defaults(func=cmd_lut)

    p = sub.add_parser("report", help="render stats into text/CSV reports")
    p.add_argument("--stats", required=True)
    p.add_argument("--baseline")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "lut" and args.action == "derive":
        if not args.op or not args.mode:
            print("lut derive needs --op and --mode", file=sys.stderr)
            return 4
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"capacity: {exc}", file=sys.stderr)
        return 3
    except FormatError as exc:
        print(f"format: {exc}", file=sys.stderr)
        return 4
    except TapcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
