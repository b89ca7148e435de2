"""Partial-product generation (DRU) and sign handling (SEU).

Nine (weight, input) pairs become one bit matrix whose value, taken modulo
the accumulator width, is the signed dot product.  The multiplier's
magnitude bits select shifted copies of the multiplicand; a negative
multiplier's sign bit instead contributes ``-2**(b-1) * multiplicand`` as a
two's-complement correction row, so the compressor network only ever adds.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .hwc import BitMatrix

BATCH = 9
OPERAND_WIDTHS = (8, 16)
ACCUMULATOR_WIDTHS = {8: 20, 16: 36}


def operand_range(width: int, signed: bool = True) -> tuple[int, int]:
    """Inclusive (lo, hi) for a ``width``-bit operand."""
    if signed:
        return -(1 << (width - 1)), (1 << (width - 1)) - 1
    return 0, (1 << width) - 1


@dataclass(frozen=True)
class OperandPair:
    w: int
    i: int

    def check(self, width: int, signed: bool = True) -> None:
        lo, hi = operand_range(width, signed)
        for name, v in (("w", self.w), ("i", self.i)):
            if not lo <= v <= hi:
                raise ValueError(f"operand {name}={v} outside {width}-bit range [{lo}, {hi}]")


def as_pairs(pairs) -> list[OperandPair]:
    return [p if isinstance(p, OperandPair) else OperandPair(int(p[0]), int(p[1])) for p in pairs]


@dataclass(frozen=True)
class Normalized:
    multiplicand: int
    multiplier: int
    swapped: bool


def normalize_signs(pair: OperandPair) -> Normalized:
    """Route a negative operand to the multiplier; negate both if both are negative.

    The weight is the multiplicand by default; ``swapped`` reports that the
    input took that role instead.
    """
    w, i = pair.w, pair.i
    if w < 0 and i < 0:
        return Normalized(-w, -i, False)
    if w < 0:
        return Normalized(i, w, True)
    return Normalized(w, i, False)


@dataclass(frozen=True)
class PartialProductMatrix:
    matrix: BitMatrix
    correction_rows: tuple[int, ...]
    width: int
    signed: bool

    def value(self) -> int:
        return self.matrix.value() + sum(self.correction_rows)


def generate_partial_products(
    pairs: Sequence, width: int = 8, signed: bool = True
) -> PartialProductMatrix:
    pairs = as_pairs(pairs)
    if len(pairs) != BATCH:
        raise ValueError(f"a batch holds exactly {BATCH} pairs, got {len(pairs)}")
    if width not in OPERAND_WIDTHS:
        raise ValueError(f"operand width must be one of {OPERAND_WIDTHS}")
    for p in pairs:
        p.check(width, signed)

    rows, corrections = [], []
    for p in pairs:
        if signed:
            norm = normalize_signs(p)
            a, m = norm.multiplicand, norm.multiplier
        else:
            a, m = p.w, p.i
        for k in range(width):
            # bit b-1 of a negative multiplier is its sign: handled by correction
            bit = (m >> k) & 1 if (m >= 0 or k < width - 1) else 0
            rows.append((a << k) if bit else 0)
        corrections.append(-(a << (width - 1)) if m < 0 else 0)
    return PartialProductMatrix(
        BitMatrix.from_rows(rows, 2 * width), tuple(corrections), width, signed
    )


def sign_extension_bits(ppm: PartialProductMatrix, accumulator_width: int) -> BitMatrix:
    """Fold correction rows in as ``accumulator_width``-bit two's complement rows.

    Bits above the accumulator width are dropped, so the result is exact
    modulo ``2**accumulator_width``.
    """
    if ACCUMULATOR_WIDTHS.get(ppm.width) != accumulator_width:
        raise ValueError(
            f"{ppm.width}-bit operands need a {ACCUMULATOR_WIDTHS.get(ppm.width)}-bit accumulator"
        )
    mask = (1 << accumulator_width) - 1
    cols = [list(c) for c in ppm.matrix.columns]
    cols += [[] for _ in range(accumulator_width - len(cols))]
    for corr in ppm.correction_rows:
        enc = corr & mask
        for c in range(ppm.width - 1, accumulator_width):
            cols[c].append((enc >> c) & 1)
    return BitMatrix(tuple(tuple(c) for c in cols[:accumulator_width]))


def wrap_signed(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    return value - (1 << bits) if value >> (bits - 1) else value


# vectorised DRU used by the engine --------------------------------------------------


@dataclass(frozen=True)
class DruLayout:
    """Fixed wiring from flat DRU bits to accumulator columns.

    Flat order: ``9*b*b`` partial-product bits indexed (pair, k, j) at column
    j + k, then ``9*(acc-b+1)`` correction bits for columns b-1..acc-1 when
    signed.
    """

    width: int
    signed: bool
    accumulator_width: int
    column_sources: tuple[tuple[int, ...], ...]

    @property
    def heights(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.column_sources)

    @property
    def size(self) -> int:
        b, acc = self.width, self.accumulator_width
        return BATCH * b * b + (BATCH * (acc - b + 1) if self.signed else 0)


@lru_cache(maxsize=None)
def dru_layout(width: int, signed: bool, accumulator_width: int | None = None) -> DruLayout:
    acc = accumulator_width or ACCUMULATOR_WIDTHS[width]
    b = width
    cols: list[list[int]] = [[] for _ in range(acc)]
    for p in range(BATCH):
        for k in range(b):
            for j in range(b):
                cols[j + k].append((p * b + k) * b + j)
    if signed:
        base = BATCH * b * b
        span = acc - b + 1
        for p in range(BATCH):
            for c in range(b - 1, acc):
                cols[c].append(base + p * span + (c - b + 1))
    return DruLayout(b, signed, acc, tuple(tuple(c) for c in cols))


def dru_rows(w: np.ndarray, i: np.ndarray, layout: DruLayout) -> np.ndarray:
    """Flat DRU bits laid out (layout.size, T) for operand arrays of shape (T, 9)."""
    w = np.asarray(w, dtype=np.int64).T
    i = np.asarray(i, dtype=np.int64).T
    b = layout.width
    if layout.signed:
        both = (w < 0) & (i < 0)
        swap = (w < 0) & ~both
        a = np.where(both, -w, np.where(swap, i, w))
        m = np.where(both, -i, np.where(swap, w, i))
    else:
        a, m = w, i
    ks = np.arange(b, dtype=np.int64)[None, :, None]
    mbits = ((m[:, None, :] >> ks) & 1).astype(np.uint8)
    if layout.signed:
        mbits[:, b - 1, :] &= (m >= 0)
    abits = ((a[:, None, :] >> ks) & 1).astype(np.uint8)
    t = w.shape[1]
    flat = (mbits[:, :, None, :] & abits[:, None, :, :]).reshape(-1, t)
    if not layout.signed:
        return flat
    acc = layout.accumulator_width
    enc = np.where(m < 0, (-(a << (b - 1))) & ((1 << acc) - 1), 0)
    cs = np.arange(b - 1, acc, dtype=np.int64)[None, :, None]
    corr = ((enc[:, None, :] >> cs) & 1).astype(np.uint8).reshape(-1, t)
    return np.concatenate([flat, corr], axis=0)


def dru_bits(w: np.ndarray, i: np.ndarray, layout: DruLayout) -> np.ndarray:
    """Flat DRU bits, shape (T, layout.size), for operand arrays of shape (T, 9)."""
    return np.ascontiguousarray(dru_rows(w, i, layout).T)
