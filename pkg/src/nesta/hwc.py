"""Hamming-weight compressors and compression/expansion layer (CEL) networks.

A compressor C(m:n) maps ``m`` bits of equal significance to the ``n``-bit
binary count of ones among them.  A CEL network stacks layers of such
compressors, each output bit ``k`` of a compressor at column ``c`` landing in
column ``c + k`` of the next layer, until no column holds more than two bits.

Networks are planned on column *heights* and evaluated on explicit bits.
Evaluation is vectorised with numpy over a leading trajectory axis so the
same compiled network drives both the scalar API and the engine simulator.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

STANDARD = "standard"
STAR = "star"
VARIANTS = (STANDARD, STAR)

# star CEL-1 may only use these sizes
COMPLETE_SIZES = (31, 15, 7, 3)

MAX_FEEDBACK_SLOTS = 2
MAX_LAYERS = 64


class CapacityError(ValueError):
    """Input matrix has more bits in a column than the network accepts."""


def output_width(m: int) -> int:
    """Bits needed for the popcount of ``m`` inputs, floor(log2 m) + 1."""
    if m < 1:
        raise ValueError(f"compressor needs at least one input, got m={m}")
    return int(m).bit_length()


def is_complete(m: int) -> bool:
    return m == (1 << output_width(m)) - 1


def compress_column(bits: Sequence[int]) -> tuple[int, ...]:
    """Hamming weight of a bit stack, LSB first, ``output_width(len(bits))`` wide."""
    if len(bits) == 0:
        raise ValueError("cannot compress an empty column")
    if any(b not in (0, 1) for b in bits):
        raise ValueError("column must contain only 0/1")
    count = sum(bits)
    return tuple((count >> k) & 1 for k in range(output_width(len(bits))))


@dataclass(frozen=True)
class Compressor:
    m: int
    n: int
    layer: int
    column: int

    def __post_init__(self):
        if self.n != output_width(self.m):
            raise ValueError(f"C({self.m}:{self.n}) must have n = {output_width(self.m)}")

    @property
    def complete(self) -> bool:
        return is_complete(self.m)

    def __str__(self):
        prefix = "CC" if self.complete else "C"
        return f"{prefix}({self.m}:{self.n})@L{self.layer}c{self.column}"


@dataclass(frozen=True)
class BitMatrix:
    """Bits grouped by significance: ``columns[i]`` is the stack at weight 2**i."""

    columns: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        cols = tuple(tuple(int(b) for b in col) for col in self.columns)
        for i, col in enumerate(cols):
            if any(b not in (0, 1) for b in col):
                raise ValueError(f"column {i} contains a non-bit value")
        object.__setattr__(self, "columns", cols)

    @classmethod
    def from_rows(cls, rows: Iterable[int], width: int) -> "BitMatrix":
        """Stack nonnegative integers, bit ``i`` of each row into column ``i``."""
        rows = list(rows)
        for r in rows:
            if r < 0 or r >> width:
                raise ValueError(f"row {r} does not fit in {width} unsigned bits")
        return cls(tuple(tuple((r >> i) & 1 for r in rows) for i in range(width)))

    @classmethod
    def zeros(cls, heights: Sequence[int]) -> "BitMatrix":
        return cls(tuple((0,) * h for h in heights))

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def heights(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.columns)

    def value(self) -> int:
        return sum(sum(col) << i for i, col in enumerate(self.columns))

    def row_values(self) -> list[int]:
        """Split into rows by taking the k-th bit of every column as row k."""
        depth = max(self.heights, default=0)
        return [
            sum(col[k] << i for i, col in enumerate(self.columns) if k < len(col))
            for k in range(depth)
        ]


def bit_matrix_value(matrix: BitMatrix) -> int:
    return matrix.value()


def _plan_column(h: int, rule: str) -> list[int]:
    """Compressor sizes for one column of height ``h``; leftover bits pass through."""
    if h <= 2:
        return []
    if rule == STANDARD:
        return [h]
    sizes = []
    remaining = h
    while remaining >= 3:
        m = next(s for s in COMPLETE_SIZES if s <= remaining)
        sizes.append(m)
        remaining -= m
    return sizes


def _spare(m: int) -> int:
    return (1 << output_width(m)) - 1 - m


def _next_heights(
    heights: Sequence[int], comps: Sequence[Sequence[int]], limit: int | None
) -> list[int]:
    out = [0] * (len(heights) + max((output_width(m) for ms in comps for m in ms), default=1))
    for c, h in enumerate(heights):
        out[c] += h - sum(comps[c])
        for m in comps[c]:
            for k in range(output_width(m)):
                out[c + k] += 1
    if limit is not None:
        out = out[:limit]
    while out and out[-1] == 0:
        out.pop()
    return out


@dataclass(frozen=True)
class LogicLevels:
    per_layer: tuple[int, ...]
    total: int


@dataclass(frozen=True)
class CelNetwork:
    """A planned compressor hierarchy.

    ``layers[L]`` lists the compressors of CEL-(L+1) ordered by column.
    ``relocated[c]`` counts feedback bits of column ``c`` that enter the
    network as two bits in column ``c - 1``.
    ``heights[L]`` are the column heights entering layer ``L``; the last
    entry holds the final (at most 2 per column) output heights.
    """

    input_heights: tuple[int, ...]
    feedback_slots: tuple[int, ...]
    variant: str
    layers: tuple[tuple[Compressor, ...], ...]
    relocated: tuple[int, ...]
    heights: tuple[tuple[int, ...], ...]
    modulus_width: int | None = None

    @property
    def capacity(self) -> tuple[int, ...]:
        return tuple(h + f for h, f in zip(self.input_heights, self.feedback_slots))

    @property
    def depth(self) -> int:
        return len(self.layers)

    def compressors_at(self, layer: int, column: int) -> list[Compressor]:
        return [c for c in self.layers[layer] if c.column == column]

    @cached_property
    def _plan(self) -> "_CompiledNetwork":
        return _CompiledNetwork(self)

    def run(self, slots: np.ndarray, trace: bool = False):
        """Evaluate on a (T, sum(capacity)) uint8 array of input slots.

        Slots are ordered column by column, data slots first and the
        column's feedback slots last.  Returns a (T, ncols, 2) array with the
        final two rows; with ``trace`` also the flat per-layer arrays.
        """
        return self._plan.run(slots, trace)


def build_cel_network(
    input_heights: Sequence[int],
    variant: str = STANDARD,
    feedback_slots: Sequence[int] | None = None,
    modulus_width: int | None = None,
) -> CelNetwork:
    """Plan a network that reduces every column to at most two bits.

    Each column is compressed greedily with the largest allowed compressor:
    the standard variant uses a single C(h:n) per column of height h >= 3;
    the star variant restricts CEL-1 to complete sizes and defers the
    (at most two) leftover bits to the next layer.  Feedback bits are then
    injected into CEL-1 at their own significance.

    With ``modulus_width`` the network computes modulo ``2**modulus_width``:
    bits landing at or above that column are discarded.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    heights = [int(h) for h in input_heights]
    width = len(heights)
    fb = [0] * width if feedback_slots is None else [int(f) for f in feedback_slots]
    if len(fb) != width:
        raise ValueError("feedback_slots must have one entry per column")
    if any(h < 0 for h in heights):
        raise ValueError("column heights must be nonnegative")
    for c, f in enumerate(fb):
        if not 0 <= f <= MAX_FEEDBACK_SLOTS:
            raise ValueError(f"column {c}: feedback slots {f} outside 0..{MAX_FEEDBACK_SLOTS}")
    if not any(heights) and not any(fb):
        raise ValueError("all columns are empty")

    comps0 = [_plan_column(h, variant) for h in heights]
    passing = [h - sum(ms) for h, ms in zip(heights, comps0)]
    relocated = [0] * width
    for c in range(width):
        for _ in range(fb[c]):
            ms = comps0[c]
            spares = [_spare(m) for m in ms]
            if spares and max(spares) > 0:
                ms[spares.index(max(spares))] += 1
            elif ms:
                ms[ms.index(min(ms))] += 1
            elif passing[c] + 1 <= 2:
                passing[c] += 1
            elif c > 0 and comps0[c - 1]:
                prev = comps0[c - 1]
                sp = [_spare(m) for m in prev]
                prev[sp.index(max(sp))] += 2
                relocated[c] += 1
            else:
                ms.append(passing[c] + 1)
                passing[c] = 0

    h0 = [
        heights[c] + fb[c] - relocated[c] + (2 * relocated[c + 1] if c + 1 < width else 0)
        for c in range(width)
    ]
    all_heights = [tuple(h0)]
    layers = []
    comps = comps0
    cur = h0
    while True:
        if len(layers) > MAX_LAYERS:
            raise RuntimeError("compressor network failed to converge")
        if len(layers) > 0:
            if max(cur, default=0) <= 2:
                break
            comps = [_plan_column(h, STANDARD) for h in cur]
        elif not any(comps) and max(cur, default=0) <= 2:
            break
        layer_idx = len(layers)
        layers.append(
            tuple(
                Compressor(m, output_width(m), layer_idx, c)
                for c, ms in enumerate(comps)
                for m in ms
            )
        )
        cur = _next_heights(cur, comps, modulus_width)
        all_heights.append(tuple(cur))

    return CelNetwork(
        input_heights=tuple(heights),
        feedback_slots=tuple(fb),
        variant=variant,
        layers=tuple(layers),
        relocated=tuple(relocated),
        heights=tuple(all_heights),
        modulus_width=modulus_width,
    )


class _CompiledNetwork:
    """Index arrays turning each layer into one reduceat plus one row gather.

    Arrays are laid out (bits, T) so gathers copy contiguous rows.
    """

    def __init__(self, net: CelNetwork):
        cap = net.capacity
        offsets = np.concatenate([[0], np.cumsum(cap)]).astype(np.int64)
        self.n_slots = int(offsets[-1])

        entry = []
        width = len(cap)
        for c in range(width):
            keep = net.input_heights[c] + net.feedback_slots[c] - net.relocated[c]
            entry.extend(range(offsets[c], offsets[c] + keep))
            if c + 1 < width and net.relocated[c + 1]:
                lo = offsets[c + 1] + cap[c + 1] - net.relocated[c + 1]
                for s in range(lo, offsets[c + 2]):
                    entry.extend((s, s))
        self.entry = np.asarray(entry, dtype=np.int64)

        self.layers = []
        heights = list(net.heights[0])
        for L, layer in enumerate(net.layers):
            by_col: dict[int, list[Compressor]] = {}
            for comp in layer:
                by_col.setdefault(comp.column, []).append(comp)
            starts, widths, dests = [], [], []
            pos = 0
            for c, h in enumerate(heights):
                used = 0
                for comp in by_col.get(c, ()):
                    starts.append(pos + used)
                    widths.append(comp.n)
                    dests.append(c)
                    used += comp.m
                for k in range(used, h):
                    starts.append(pos + k)
                    widths.append(1)
                    dests.append(c)
                pos += h
            maxn = max(widths, default=1)
            nxt = net.heights[L + 1]
            buckets: list[list[int]] = [[] for _ in range(len(nxt))]
            for s, (n, c) in enumerate(zip(widths, dests)):
                for k in range(n):
                    if c + k < len(nxt):
                        buckets[c + k].append(k * len(starts) + s)
            gather = np.asarray([i for b in buckets for i in b], dtype=np.int64)
            self.layers.append((np.asarray(starts, dtype=np.int64), maxn, gather))
            heights = list(nxt)

        final = net.heights[-1]
        self.out_cols = len(final)
        total = sum(final)
        # (col, row) -> flat position of the final bits; missing bits read a zero row
        out_idx = np.full((self.out_cols, 2), total, dtype=np.int64)
        pos = 0
        for c, h in enumerate(final):
            for k in range(h):
                out_idx[c, k] = pos + k
            pos += h
        self.out_idx = out_idx

    def run_rows(self, x: np.ndarray, trace: bool = False):
        """Evaluate from layer-0 bits laid out (bits, T); returns (ncols, 2, T)."""
        flats = [x]
        t = x.shape[1]
        for starts, maxn, gather in self.layers:
            if x.shape[0] == 0:
                break
            counts = np.add.reduceat(x, starts, axis=0, dtype=np.int16)
            bits = np.empty((maxn,) + counts.shape, np.uint8)
            for k in range(maxn):
                bits[k] = (counts >> k) & 1
            x = bits.reshape(-1, t).take(gather, axis=0)
            flats.append(x)
        padded = np.concatenate([x, np.zeros((1, t), np.uint8)], axis=0)
        out = padded.take(self.out_idx, axis=0)
        return (out, flats) if trace else out

    def run(self, slots: np.ndarray, trace: bool = False):
        slots = np.asarray(slots, dtype=np.uint8)
        if slots.ndim != 2 or slots.shape[1] != self.n_slots:
            raise ValueError(f"expected (T, {self.n_slots}) slots, got {slots.shape}")
        x = np.ascontiguousarray(slots.T).take(self.entry, axis=0)
        res = self.run_rows(x, trace)
        if not trace:
            return res.transpose(2, 0, 1)
        out, flats = res
        return out.transpose(2, 0, 1), [f.T for f in flats]


def _slots_from_matrix(net: CelNetwork, matrix: BitMatrix) -> np.ndarray:
    cap = net.capacity
    if matrix.width > len(cap):
        extra = [i for i in range(len(cap), matrix.width) if matrix.columns[i]]
        if extra:
            raise CapacityError(f"column {extra[0]} is outside the network (width {len(cap)})")
    row = []
    for c, k in enumerate(cap):
        col = matrix.columns[c] if c < matrix.width else ()
        if len(col) > k:
            raise CapacityError(f"column {c} holds {len(col)} bits, capacity is {k}")
        row.extend(col)
        row.extend([0] * (k - len(col)))
    return np.asarray([row], dtype=np.uint8)


def _matrix_from_flat(flat: np.ndarray, heights: Sequence[int]) -> BitMatrix:
    cols, pos = [], 0
    for h in heights:
        cols.append(tuple(int(b) for b in flat[pos:pos + h]))
        pos += h
    return BitMatrix(tuple(cols))


def evaluate_layers(net: CelNetwork, matrix: BitMatrix) -> list[BitMatrix]:
    """Bit matrices entering CEL-1, after each layer; the last is the output."""
    _, flats = net.run(_slots_from_matrix(net, matrix), trace=True)
    return [_matrix_from_flat(f[0], h) for f, h in zip(flats, net.heights)]


def evaluate_network(net: CelNetwork, matrix: BitMatrix) -> BitMatrix:
    return evaluate_layers(net, matrix)[-1]


def logic_levels(net: CelNetwork) -> LogicLevels:
    """Depth estimate: a C(m:n) costs n levels, a layer its slowest compressor."""
    per_layer = tuple(max((c.n for c in layer), default=0) for layer in net.layers)
    return LogicLevels(per_layer, sum(per_layer))
