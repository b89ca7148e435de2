"""Seven-loop convolution schedules, dataflow classes and access counting.

A schedule is a permutation of the loop identifiers

    b  batch          u  filter        c  channel
    h  ofmap row      w  ofmap column  i  kernel row   j  kernel column

and ``enumerate_schedule`` walks the nest in that order.  Engine-backed runs
give every output neuron its own engine; the loop order fixes the order in
which that neuron's (weight, input) pairs reach the engine, and the dataflow
kind fixes whether its partial sum stays in the engine between batches.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import ceil
from typing import Iterator

import numpy as np

from . import costmodel, engine
from .oracle import LayerShape
from .ppgen import BATCH

LOOP_IDS = ("b", "u", "c", "h", "w", "i", "j")
KINDS = ("NLR", "WS", "IS", "OS", "RS")
_DEFAULT_ORDERS = {
    "NLR": "b-u-c-h-w-i-j",
    "WS": "b-u-c-h-w-i-j",
    "RS": "b-u-c-h-w-i-j",
    "OS": "b-u-h-w-c-i-j",
    "IS": "b-u-h-w-c-i-j",
}
# RS runs 3x3 windows on groups of three engines, one per kernel row
RS_GROUP_SIZE = 3


@dataclass(frozen=True)
class LoopOrder:
    loops: tuple[str, ...]

    def __post_init__(self):
        loops = tuple(self.loops)
        if sorted(loops) != sorted(LOOP_IDS) or len(loops) != len(LOOP_IDS):
            raise ValueError(f"loop order must be a permutation of {'-'.join(LOOP_IDS)}, got {loops}")
        object.__setattr__(self, "loops", loops)

    @classmethod
    def parse(cls, text: str) -> "LoopOrder":
        return cls(tuple(p.strip() for p in text.split("-")))

    def __str__(self):
        return "-".join(self.loops)

    def reduction_order(self) -> tuple[str, ...]:
        """Relative order of c, i, j: the per-output accumulation order."""
        return tuple(x for x in self.loops if x in "cij")


@dataclass(frozen=True)
class DataflowKind:
    kind: str
    loop_order: LoopOrder | None = None
    engine_groups: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataflow {self.kind!r}, expected one of {KINDS}")
        if self.loop_order is None:
            object.__setattr__(self, "loop_order", LoopOrder.parse(_DEFAULT_ORDERS[self.kind]))
        if self.engine_groups < 1:
            raise ValueError("engine_groups must be >= 1")
        if self.kind != "RS" and self.engine_groups != 1:
            raise ValueError("engine groups only apply to RS")

    @property
    def psum_stationary(self) -> bool:
        return self.kind in ("OS", "RS")

    @property
    def engines(self) -> int:
        return RS_GROUP_SIZE * self.engine_groups if self.kind == "RS" else 1


@dataclass(frozen=True)
class AccessStats:
    ifmap_fetches: int
    weight_fetches: int
    psum_writes: int
    batches_consumed: int
    cycles: int
    batches_per_output: int

    @property
    def transactions(self) -> int:
        return self.ifmap_fetches + self.weight_fetches + self.psum_writes


def enumerate_schedule(shape: LayerShape, order: LoopOrder) -> Iterator[tuple[int, ...]]:
    """Yield canonical (b, u, c, h, w, i, j) tuples in loop-nest order."""
    extents = {"b": shape.N, "u": shape.M, "c": shape.C, "h": shape.E, "w": shape.E,
               "i": shape.R, "j": shape.R}
    pos = [order.loops.index(x) for x in LOOP_IDS]
    for idx in itertools.product(*(range(extents[x]) for x in order.loops)):
        yield tuple(idx[p] for p in pos)


def access_counts(shape: LayerShape, flow: DataflowKind) -> AccessStats:
    """Global-buffer traffic under the residency model.

    The stationary operand class is fetched once per residency; every other
    operand is fetched once per use.  Partial sums are written once per
    finalization: per batch unless the psum stays in the engine.
    """
    N, M, C, R, E, S = shape.N, shape.M, shape.C, shape.R, shape.E, shape.S
    uses = shape.macs
    outputs = N * M * E * E
    b = costmodel.batches(R, C)
    ifm, wts = uses, uses
    if flow.kind == "WS":
        wts = M * C * R * R
    elif flow.kind == "IS":
        # distinct ifmap rows touched; windows leave gaps when R < S
        rows = (E - 1) * S + R if R >= S else E * R
        ifm = N * C * rows * rows
    elif flow.kind == "RS":
        # a filter row set is loaded once per pass of an engine pool over outputs
        wts = N * M * ceil(E * E / flow.engines) * C * R * R
    psum = outputs if flow.psum_stationary else outputs * b
    per_out = b + 1 if flow.psum_stationary else 2 * b
    return AccessStats(
        ifmap_fetches=ifm,
        weight_fetches=wts,
        psum_writes=psum,
        batches_consumed=outputs * b,
        cycles=ceil(outputs / flow.engines) * per_out,
        batches_per_output=b,
    )


def _signed_width(values: np.ndarray) -> int:
    lo, hi = int(values.min(initial=0)), int(values.max(initial=0))
    return max(hi.bit_length() + 1, (-lo - 1).bit_length() + 1 if lo < 0 else 1, 1)


def _unsigned_width(values: np.ndarray) -> int:
    return max(int(values.max(initial=0)).bit_length(), 1)


def data_widths(filters, ifmap, signed: bool) -> tuple[int, int]:
    f = np.asarray(filters, dtype=np.int64)
    x = np.asarray(ifmap, dtype=np.int64)
    if not signed and (f.min(initial=0) < 0 or x.min(initial=0) < 0):
        raise ValueError("negative operands in unsigned mode")
    width = _signed_width if signed else _unsigned_width
    return width(f), width(x)


def _streams(shape: LayerShape, order: LoopOrder, ifmap, filters):
    """Per-output (O, C*R*R) weight and input streams in the order's c/i/j nesting."""
    N, M, C, R, E, S = shape.N, shape.M, shape.C, shape.R, shape.E, shape.S
    z, u, x, y = (a.reshape(-1) for a in np.indices((N, M, E, E)))
    ext = {"c": C, "i": R, "j": R}
    red = order.reduction_order()
    grids = dict(zip(red, (a.reshape(-1) for a in np.indices(tuple(ext[r] for r in red)))))
    k, i, j = grids["c"], grids["i"], grids["j"]
    w = filters[u[:, None], k[None, :], i[None, :], j[None, :]]
    inp = ifmap[z[:, None], k[None, :], S * x[:, None] + i[None, :], S * y[:, None] + j[None, :]]
    return w, inp, u


def run_conv_with_engines(
    shape: LayerShape,
    flow: DataflowKind,
    config: engine.EngineConfig,
    ifmap,
    filters,
    bias,
) -> tuple[np.ndarray, AccessStats]:
    """Convolve on simulated NESTA engines; returns the ofmap and access stats."""
    ifmap = np.asarray(ifmap, dtype=np.int64)
    filters = np.asarray(filters, dtype=np.int64)
    bias = np.asarray(bias, dtype=np.int64).reshape(-1)
    for name, arr, dims in (("ifmap", ifmap, shape.ifmap_dims),
                            ("filters", filters, shape.filter_dims),
                            ("bias", bias, (shape.M,))):
        if tuple(arr.shape) != tuple(dims):
            raise ValueError(f"{name} has dims {tuple(arr.shape)}, expected {tuple(dims)}")

    ww, wd = data_widths(filters, ifmap, config.signed_mode)
    costmodel.require_sizing(
        costmodel.SizingRule(config.accumulator_width, shape.C, shape.R * shape.R, ww, wd),
        f"{flow.kind} layer",
    )

    w, inp, u = _streams(shape, flow.loop_order, ifmap, filters)
    w, inp = engine.pad_stream(w), engine.pad_stream(inp)
    n_out = w.shape[0]
    n_batches = w.shape[1] // BATCH

    bank = engine.EngineBank(config, n_out)
    bank.reset(bias[u])
    finalizations = 0
    cycles_per_output = 0
    for k in range(n_batches):
        sl = slice(k * BATCH, (k + 1) * BATCH)
        if flow.psum_stationary or k == 0:
            bank.consume(w[:, sl], inp[:, sl])
            cycles_per_output += 1
            continue
        # psum left the engine after the previous batch: reload it as the bias
        psum = bank.finalize()
        finalizations += 1
        cycles_per_output += 1
        bank.reset(psum)
        bank.consume(w[:, sl], inp[:, sl])
        cycles_per_output += 1
    result = bank.finalize()
    finalizations += 1
    cycles_per_output += 1

    model = access_counts(shape, flow)
    stats = AccessStats(
        ifmap_fetches=model.ifmap_fetches,
        weight_fetches=model.weight_fetches,
        psum_writes=finalizations * n_out,
        batches_consumed=n_batches * n_out,
        cycles=ceil(n_out / flow.engines) * cycles_per_output,
        batches_per_output=n_batches,
    )
    return result.reshape(shape.ofmap_dims), stats
