"""Runtime of one R x R x C window on NESTA vs every MAC9 flavour, swept over C.

Prints CSV: kernel,channels,batches,<pe>_ns... and a crossover summary.
"""
import argparse
import csv
import sys

from nesta import costmodel


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--params")
    ap.add_argument("--kernels", default="1,3,5,11")
    ap.add_argument("--max-channels", type=int, default=96)
    args = ap.parse_args(argv)

    params = costmodel.load_params(args.params)
    pes = [params.nesta] + params.of_kind("mac9")
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["kernel", "channels", "batches"] + [f"{p.name}_ns" for p in pes])
    for R in (int(k) for k in args.kernels.split(",")):
        for C in range(1, args.max_channels + 1):
            costs = [costmodel.window_cost(p, R, C) for p in pes]
            out.writerow([R, C, costs[0].batches] + [f"{c.time_ns:.3f}" for c in costs])

    print(file=sys.stderr)
    for p in params.of_kind("mac9"):
        b = costmodel.crossover_batches(params.nesta.delay_ns, p.delay_ns)
        chans = [costmodel.crossover_channels(R, params.nesta.delay_ns, p.delay_ns) for R in (1, 3, 5, 11)]
        print(f"{p.name:22s} B*={b}  min channels (1,3,5,11): {chans}", file=sys.stderr)


if __name__ == "__main__":
    main()
