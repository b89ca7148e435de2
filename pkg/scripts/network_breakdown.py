"""Per-layer delay/energy breakdown of a network on several PE types.

Writes the analysis CSV and prints each PE's share of total time and energy.
"""
import argparse
from collections import defaultdict
from pathlib import Path

from nesta import costmodel, dataflow, netspec


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("net", help="bundled name (alexnet, vgg19) or YAML path")
    ap.add_argument("--params")
    ap.add_argument("--pe", default="nesta,mac9-brx4-hwa-ks,mac-brx4-ks")
    ap.add_argument("--dataflow", default="OS", choices=dataflow.KINDS)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args(argv)

    spec = netspec.bundled_network(args.net) if args.net in netspec.BUNDLED else netspec.load_network(args.net)
    params = costmodel.load_params(args.params)
    pes = args.pe.split(",")
    recs = netspec.analyze_network(spec, pes, params, dataflow.DataflowKind(args.dataflow))
    text = netspec.records_to_csv(recs)
    if args.out:
        args.out.write_text(text)
    ops = netspec.network_op_count(spec)
    print(f"{spec.name}: {len(spec.layers)} layers, {ops.macs / 1e6:.1f}M MACs")

    time, energy = defaultdict(float), defaultdict(float)
    for r in recs:
        time[r.pe_type] += r.time_ns
        energy[r.pe_type] += r.energy_fj
    base = pes[0]
    for pe in pes:
        print(f"  {pe:22s} time {time[pe] / 1e6:10.2f} ms  energy {energy[pe] / 1e9:10.3f} uJ  "
              f"time ratio {time[pe] / time[base]:.3f}  energy ratio {energy[pe] / energy[base]:.3f}")
    print("\nper layer (time of each PE relative to the first):")
    by_layer = defaultdict(dict)
    for r in recs:
        by_layer[r.layer][r.pe_type] = r.time_ns
    for layer, t in by_layer.items():
        print(f"  {layer:10s} " + "  ".join(f"{pe}={t[pe] / t[base]:.3f}" for pe in pes))


if __name__ == "__main__":
    main()
