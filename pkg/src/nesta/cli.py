"""``nesta`` command line: verification, layer/network cost tables, sizing,
crossover and PE comparison.

Exit codes: 0 success, 1 verification failure, 2 usage or input error.
Every command is deterministic for fixed arguments; output is CSV unless
noted.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from . import costmodel, dataflow, hwc, netspec, verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _pe_list(arg: str | None, params: costmodel.PpaParams, default: list[str]) -> list[str]:
    names = [p.strip() for p in arg.split(",") if p.strip()] if arg else default
    for n in names:
        if n not in params:
            raise UsageError(f"unknown PE type {n!r}; known: {', '.join(params.names)}")
    return names


def _default_pes(params: costmodel.PpaParams) -> list[str]:
    out = [params.nesta.name]
    for kind in ("mac9", "mac"):
        if params.of_kind(kind):
            out.append(params.fastest(kind).name)
    return out


def _fmt(x: float) -> str:
    return f"{x:.3f}"


# commands ----------------------------------------------------------------------------


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    fault = verify.flip_fault(args.inject_fault) if args.inject_fault is not None else None
    indices = [args.trial] if args.trial is not None else None
    report = verify.run_verification(
        args.seed, args.trials, args.width, args.variant, fault=fault, indices=indices
    )
    lines = [
        f"verify width={args.width} variant={args.variant} seed={args.seed} trials={report.trials}",
        f"cycles checked: {report.cycles_checked}",
    ]
    if report.passed:
        lines.append("result: PASS")
    else:
        ce = report.counterexample
        lines.append(f"result: FAIL ({len(report.failures)} mismatches)")
        lines.append(f"counterexample: {ce}")
        lines.append(f"replay: nesta verify --seed {ce.seed} --width {args.width} "
                     f"--variant {args.variant} --trial {ce.trial}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_run_layer(args) -> int:
    params = costmodel.load_params(args.params)
    pes = _pe_list(args.pe, params, _default_pes(params))
    H = args.input_size or args.kernel
    layer = netspec.LayerSpec(
        name=args.name, kind="conv", channels=args.channels, filters=args.filters,
        kernel=args.kernel, stride=args.stride, input_size=H,
        widths=(args.weight_bits, args.data_bits), batch=args.batch,
    )
    try:
        layer.shape
    except ValueError as e:
        raise UsageError(str(e)) from None
    netspec.check_layer_sizing(layer, args.reg)
    spec = netspec.NetworkSpec("layer", (layer,))
    flow = dataflow.DataflowKind(args.dataflow)
    records = netspec.analyze_network(spec, pes, params, flow, args.reg)
    _emit(netspec.records_to_csv(records), args.out)
    return EXIT_OK


def cmd_analyze_net(args) -> int:
    if args.net is None:
        raise UsageError("--net is required (a YAML file or one of: " + ", ".join(netspec.BUNDLED) + ")")
    if args.net in netspec.BUNDLED and not Path(args.net).exists():
        spec = netspec.bundled_network(args.net)
    else:
        spec = netspec.load_network(args.net, allow_empty=True)
    params = costmodel.load_params(args.params)
    pes = _pe_list(args.pe, params, _default_pes(params))
    records = netspec.analyze_network(spec, pes, params, dataflow.DataflowKind(args.dataflow), args.reg)
    _emit(netspec.records_to_csv(records), args.out)
    return EXIT_OK


def cmd_sizing(args) -> int:
    for name in ("reg", "channels", "window"):
        if getattr(args, name) < 1:
            raise UsageError(f"--{name} must be positive")
    if args.weight_bits is not None or args.data_bits is not None:
        if args.weight_bits is None or args.data_bits is None:
            raise UsageError("give both --weight-bits and --data-bits")
        res = costmodel.check_bitwidths(costmodel.SizingRule(
            args.reg, args.channels, args.window, args.weight_bits, args.data_bits))
        text = f"required_bits={res.required_bits} reg_size={res.reg_size} ok={res.ok}\n"
        text += "".join(f"violation: {d}\n" for d in res.details)
        _emit(text, args.out)
        return EXIT_OK
    pairs = costmodel.valid_width_pairs(args.reg, args.channels, args.window)
    _emit(_csv(pairs, ("w_weight", "w_data")), args.out)
    return EXIT_OK


def cmd_crossover(args) -> int:
    params = costmodel.load_params(args.params)
    nesta = params.nesta
    comp = params[args.competitor] if args.competitor else params.fastest("mac9")
    b_star = costmodel.crossover_batches(nesta.delay_ns, comp.delay_ns)
    rows = []
    for R in args.kernels:
        ch = costmodel.crossover_channels(R, nesta.delay_ns, comp.delay_ns)
        rows.append((R, comp.name, "none" if b_star is None else b_star, "none" if ch is None else ch))
    _emit(_csv(rows, ("kernel", "competitor", "min_batches", "min_channels")), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    params = costmodel.load_params(args.params)
    if args.table == "ppa":
        rows = [(p.name, p.label, p.kind, p.area_um2, p.power_uw, p.delay_ns, _fmt(p.pdp_fj))
                for p in params.pe_types]
        _emit(_csv(rows, ("pe_type", "label", "kind", "area_um2", "power_uw", "delay_ns", "pdp_fj")), args.out)
        return EXIT_OK
    default = [p.name for p in params.pe_types if p.kind in ("mac", "nesta-v1")]
    pes = _pe_list(args.pe, params, default)
    rows = []
    for R in args.kernels:
        try:
            imps = costmodel.throughput_energy_improvement(params, args.budget, R, args.count, pes)
        except ValueError as e:
            raise UsageError(str(e)) from None
        rows.extend((i.pe, R, f"{i.throughput_pct:.1f}", f"{i.energy_pct:.1f}") for i in imps)
    _emit(_csv(rows, ("pe_type", "kernel", "throughput_pct", "energy_pct")), args.out)
    return EXIT_OK


# parser ------------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for random streams")
    common.add_argument("--width", type=int, choices=(8, 16), default=8, help="operand width")
    common.add_argument("--variant", choices=hwc.VARIANTS, default=hwc.STANDARD, help="CEL variant")
    common.add_argument("--params", help="PPA parameter YAML (default: bundled)")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--pe", help="comma-separated PE type names")

    p = argparse.ArgumentParser(prog="nesta", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="engine vs oracle on random convolutions")
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--trial", type=int, help="replay a single trial index")
    v.add_argument("--inject-fault", type=int, metavar="TRIAL", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    def layer_args(q):
        q.add_argument("--dataflow", choices=dataflow.KINDS, default="OS")
        q.add_argument("--reg", type=int, default=netspec.DEFAULT_REG_SIZE, help="accumulator bits")

    r = sub.add_parser("run-layer", parents=[common], help="cost of one conv layer per PE type")
    r.add_argument("--kernel", type=int, required=True)
    r.add_argument("--channels", type=int, required=True)
    r.add_argument("--filters", type=int, default=1)
    r.add_argument("--input-size", type=int, help="ifmap side (default: kernel, one window)")
    r.add_argument("--stride", type=int, default=1)
    r.add_argument("--batch", type=int, default=1)
    r.add_argument("--weight-bits", type=int, default=8)
    r.add_argument("--data-bits", type=int, default=8)
    r.add_argument("--name", default="layer")
    layer_args(r)
    r.set_defaults(func=cmd_run_layer)

    a = sub.add_parser("analyze-net", parents=[common], help="per-layer cost table for a network")
    a.add_argument("--net", help="network YAML or bundled name (alexnet, vgg19)")
    layer_args(a)
    a.set_defaults(func=cmd_analyze_net)

    s = sub.add_parser("sizing", parents=[common], help="valid (weight, data) width pairs")
    s.add_argument("--reg", type=int, default=36)
    s.add_argument("--channels", type=int, required=True)
    s.add_argument("--window", type=int, required=True, help="kernel area R*R")
    s.add_argument("--weight-bits", type=int)
    s.add_argument("--data-bits", type=int)
    s.set_defaults(func=cmd_sizing)

    c = sub.add_parser("crossover", parents=[common], help="batches/channels where NESTA wins")
    c.add_argument("--competitor", help="PE name (default: fastest mac9)")
    c.add_argument("--kernels", type=_int_list, default=[1, 3, 5, 11])
    c.set_defaults(func=cmd_crossover)

    m = sub.add_parser("compare", parents=[common], help="area-normalised improvement or PPA table")
    m.add_argument("--table", choices=("improvement", "ppa"), default="improvement")
    m.add_argument("--budget", type=float, default=1e8, help="silicon area budget in um^2")
    m.add_argument("--count", type=int, default=1024, help="channels accumulated per window")
    m.add_argument("--kernels", type=_int_list, default=[3, 5, 7, 11])
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"nesta {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
