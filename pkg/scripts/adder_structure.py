"""Compressor inventory and modelled depth of a multi-input adder, both variants.

Default: nine 16-bit operands (heights [9] * 16).  Also shows the engine
networks, which carry two feedback slots per column.
"""
import argparse
from collections import Counter

from nesta import engine, hwc


def describe(net, title):
    lv = hwc.logic_levels(net)
    print(f"{title}: {net.depth} layers, depth per layer {lv.per_layer}, total {lv.total}")
    for k, layer in enumerate(net.layers):
        inv = Counter(("CC" if c.complete else "C") + f"({c.m}:{c.n})" for c in layer)
        print(f"  CEL-{k + 1}: " + ", ".join(f"{n}x {name}" for name, n in sorted(inv.items())))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--inputs", type=int, default=9)
    ap.add_argument("--bits", type=int, default=16)
    args = ap.parse_args(argv)
    for variant in hwc.VARIANTS:
        describe(hwc.build_cel_network([args.inputs] * args.bits, variant), f"{variant} [{args.inputs}]x{args.bits}")
        print()
    for width in (8, 16):
        for variant in hwc.VARIANTS:
            net = engine.compiled(engine.EngineConfig(width, cel_variant=variant)).net
            describe(net, f"engine width {width}, {variant}")
            if any(net.relocated):
                print(f"  feedback bits relocated to column c-1: {net.relocated}")
            print()


if __name__ == "__main__":
    main()
