"""Cycle-stepped NESTA engine.

Every cycle the CEL network compresses nine fresh operand pairs together
with the fed-back sum register S (same column) and carry buffer CB (one
column up), and only the first adder level runs: for the two surviving
bits (a, b) of each column, S takes a XOR b and CB takes a AND b.  The
carry chain (PCPA) runs once, at finalisation, so that
``value(S) + 2 * value(CB)`` is the running sum modulo the accumulator.

``EngineBank`` simulates many independent engines at once (one row per
engine); the value-type API (``reset``/``consume_batch``/``finalize``) is a
thin wrapper over a bank of one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import ceil
from typing import Sequence

import numpy as np

from . import hwc, ppgen
from .ppgen import ACCUMULATOR_WIDTHS, BATCH, OperandPair


class EngineStateError(RuntimeError):
    pass


class EngineOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    operand_width: int = 8
    accumulator_width: int | None = None
    cel_variant: str = hwc.STANDARD
    signed_mode: bool = True

    def __post_init__(self):
        if self.operand_width not in ACCUMULATOR_WIDTHS:
            raise ValueError(f"operand width must be 8 or 16, got {self.operand_width}")
        acc = ACCUMULATOR_WIDTHS[self.operand_width]
        if self.accumulator_width is None:
            object.__setattr__(self, "accumulator_width", acc)
        elif self.accumulator_width != acc:
            raise ValueError(f"{self.operand_width}-bit operands need a {acc}-bit accumulator")
        if self.cel_variant not in hwc.VARIANTS:
            raise ValueError(f"unknown CEL variant {self.cel_variant!r}")

    @property
    def value_range(self) -> tuple[int, int]:
        return ppgen.operand_range(self.accumulator_width, self.signed_mode)


@dataclass(frozen=True)
class EngineState:
    config: EngineConfig
    s_bits: int
    cb_bits: int
    cycle: int = 0
    finalized: bool = False
    # worst-case |accumulated value| reachable from the consumed operands
    bound: int = field(default=0, compare=False)


class _Compiled:
    def __init__(self, config: EngineConfig):
        acc = config.accumulator_width
        self.layout = ppgen.dru_layout(config.operand_width, config.signed_mode, acc)
        self.net = hwc.build_cel_network(
            self.layout.heights,
            config.cel_variant,
            [hwc.MAX_FEEDBACK_SLOTS] * acc,
            modulus_width=acc,
        )
        d = self.layout.size
        s_base, cb_base, zero = d, d + acc, d + 2 * acc
        src = []
        for c in range(acc):
            src.extend(self.layout.column_sources[c])
            src.append(s_base + c)
            src.append(cb_base + c - 1 if c > 0 else zero)
        src = np.asarray(src, dtype=np.int64)
        # compose slot wiring with the network's entry gather
        self.plan = self.net._plan
        self.entry = src[self.plan.entry]
        self.src_width = zero + 1


@lru_cache(maxsize=None)
def compiled(config: EngineConfig) -> _Compiled:
    return _Compiled(config)


def _to_bits(values: np.ndarray, width: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64) & ((1 << width) - 1)
    return ((values[:, None] >> np.arange(width, dtype=np.int64)) & 1).astype(np.uint8)


def _from_bits(bits: np.ndarray) -> np.ndarray:
    weights = np.left_shift(np.int64(1), np.arange(bits.shape[1], dtype=np.int64))
    return bits.astype(np.int64) @ weights


def pcpa(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Brent-Kung carry-propagate addition of two (T, W) bit arrays, mod 2**W."""
    x = np.asarray(x, dtype=np.uint8)
    y = np.asarray(y, dtype=np.uint8)
    p0 = x ^ y
    G = x & y
    P = p0.copy()
    n = x.shape[1]
    d = 1
    while d < n:
        hi = np.arange(2 * d - 1, n, 2 * d)
        G[:, hi] |= P[:, hi] & G[:, hi - d]
        P[:, hi] &= P[:, hi - d]
        d *= 2
    d //= 2
    while d >= 1:
        hi = np.arange(3 * d - 1, n, 2 * d)
        G[:, hi] |= P[:, hi] & G[:, hi - d]
        P[:, hi] &= P[:, hi - d]
        d //= 2
    carry_in = np.zeros_like(G)
    carry_in[:, 1:] = G[:, :-1]
    return p0 ^ carry_in


class EngineBank:
    """``T`` independent engines advanced in lockstep."""

    def __init__(self, config: EngineConfig, count: int):
        self.config = config
        self._c = compiled(config)
        acc = config.accumulator_width
        self.s = np.zeros((count, acc), np.uint8)
        self.cb = np.zeros((count, acc), np.uint8)
        self.bound = np.zeros(count, np.int64)
        self.cycle = 0
        self.finalized = False

    @property
    def count(self) -> int:
        return self.s.shape[0]

    def reset(self, bias) -> None:
        bias = np.broadcast_to(np.asarray(bias, dtype=np.int64), (self.count,))
        lo, hi = self.config.value_range
        if np.any(bias < lo) or np.any(bias > hi):
            raise EngineOverflowError(
                f"bias outside the {self.config.accumulator_width}-bit accumulator range"
            )
        self.s = _to_bits(bias, self.config.accumulator_width)
        self.cb[:] = 0
        self.bound = np.abs(bias)
        self.cycle = 0
        self.finalized = False

    def _check_operands(self, w: np.ndarray, i: np.ndarray) -> None:
        lo, hi = ppgen.operand_range(self.config.operand_width, self.config.signed_mode)
        for name, v in (("weight", w), ("input", i)):
            if v.shape != (self.count, BATCH):
                raise ValueError(f"{name} array must have shape ({self.count}, {BATCH})")
            if v.size and (v.min() < lo or v.max() > hi):
                raise ValueError(
                    f"{name} operand outside {self.config.operand_width}-bit range [{lo}, {hi}]"
                )

    def consume(self, w, i, fault=None, active=None) -> None:
        """One cycle: compress nine pairs per engine with the S/CB feedback.

        Engines where ``active`` is False hold their state (clock gated).
        """
        if self.finalized:
            raise EngineStateError("engine already finalized; reset before reuse")
        w = np.asarray(w, dtype=np.int64)
        i = np.asarray(i, dtype=np.int64)
        self._check_operands(w, i)
        bound = self.bound + np.abs(w * i).sum(axis=1)
        if active is not None:
            active = np.asarray(active, dtype=bool)
            bound = np.where(active, bound, self.bound)
        _, hi = self.config.value_range
        if np.any(bound > hi):
            bad = int(np.argmax(bound > hi))
            raise EngineOverflowError(
                f"engine {bad}: accumulated magnitude may reach {int(bound[bad])}, "
                f"beyond the {self.config.accumulator_width}-bit accumulator"
            )
        c = self._c
        dru = ppgen.dru_rows(w, i, c.layout)
        zero = np.zeros((1, self.count), np.uint8)
        src = np.concatenate([dru, self.s.T, self.cb.T, zero], axis=0)
        out = c.plan.run_rows(src.take(c.entry, axis=0))
        acc = self.config.accumulator_width
        a = out[:acc, 0].T
        b = out[:acc, 1].T
        s_new, cb_new = a ^ b, a & b
        if active is not None:
            s_new = np.where(active[:, None], s_new, self.s)
            cb_new = np.where(active[:, None], cb_new, self.cb)
        self.s = np.ascontiguousarray(s_new)
        self.cb = np.ascontiguousarray(cb_new)
        self.bound = bound
        self.cycle += 1
        if fault is not None:
            fault(self)

    def values(self) -> np.ndarray:
        """Running sums ``S + 2*CB`` as (signed when configured) integers."""
        acc = self.config.accumulator_width
        raw = (_from_bits(self.s) + 2 * _from_bits(self.cb)) & ((1 << acc) - 1)
        if self.config.signed_mode:
            raw = np.where(raw >> (acc - 1), raw - (1 << acc), raw)
        return raw

    def finalize(self) -> np.ndarray:
        if self.finalized:
            raise EngineStateError("engine already finalized")
        shifted = np.zeros_like(self.cb)
        shifted[:, 1:] = self.cb[:, :-1]
        self.s = pcpa(self.s, shifted)
        self.cb[:] = 0
        self.finalized = True
        return self.values()


# value-type API ----------------------------------------------------------------------


def _bank_from_state(state: EngineState) -> EngineBank:
    bank = EngineBank(state.config, 1)
    acc = state.config.accumulator_width
    bank.s = _to_bits(np.array([state.s_bits]), acc)
    bank.cb = _to_bits(np.array([state.cb_bits]), acc)
    bank.bound = np.array([state.bound], np.int64)
    bank.cycle = state.cycle
    bank.finalized = state.finalized
    return bank


def _state_from_bank(bank: EngineBank) -> EngineState:
    return EngineState(
        config=bank.config,
        s_bits=int(_from_bits(bank.s)[0]),
        cb_bits=int(_from_bits(bank.cb)[0]),
        cycle=bank.cycle,
        finalized=bank.finalized,
        bound=int(bank.bound[0]),
    )


def reset(config: EngineConfig, bias: int = 0) -> EngineState:
    lo, hi = config.value_range
    if not lo <= bias <= hi:
        raise EngineOverflowError(
            f"bias {bias} not representable in {config.accumulator_width} bits"
        )
    return EngineState(config, bias & ((1 << config.accumulator_width) - 1), 0, 0, False, abs(bias))


def consume_batch(state: EngineState, pairs: Sequence) -> EngineState:
    if state.finalized:
        raise EngineStateError("engine already finalized; reset before reuse")
    pairs = ppgen.as_pairs(pairs)
    if len(pairs) != BATCH:
        raise ValueError(f"a batch holds exactly {BATCH} pairs, got {len(pairs)}")
    bank = _bank_from_state(state)
    bank.consume(np.array([[p.w for p in pairs]]), np.array([[p.i for p in pairs]]))
    return _state_from_bank(bank)


def partial_value(state: EngineState) -> int:
    acc = state.config.accumulator_width
    raw = (state.s_bits + 2 * state.cb_bits) & ((1 << acc) - 1)
    return ppgen.wrap_signed(raw, acc) if state.config.signed_mode else raw


@dataclass(frozen=True)
class Finalized:
    sum: int
    state: EngineState
    extra_cycles: int = 1


def finalize(state: EngineState) -> Finalized:
    if state.finalized:
        raise EngineStateError("engine already finalized")
    bank = _bank_from_state(state)
    total = int(bank.finalize()[0])
    return Finalized(total, _state_from_bank(bank), 1)


# batching ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BatchSchedule:
    batches: tuple[tuple[OperandPair, ...], ...]
    kernel: int
    channels: int
    pad_count: int

    def __len__(self):
        return len(self.batches)


def batch_count(kernel: int, channels: int) -> int:
    return ceil(kernel * kernel * channels / BATCH)


def batch_schedule(kernel: int, channels: int, pair_stream: Sequence) -> BatchSchedule:
    """Cut a window's pair stream (channel-major, row-major within a channel)
    into 9-pair batches, zero-padding the last one.  FC layers enter as 1x1.
    """
    if kernel < 1 or channels < 1:
        raise ValueError("kernel and channels must be >= 1")
    pairs = ppgen.as_pairs(pair_stream)
    expected = kernel * kernel * channels
    if len(pairs) != expected:
        raise ValueError(f"stream has {len(pairs)} pairs, expected R*R*C = {expected}")
    pad = (-len(pairs)) % BATCH
    pairs = pairs + [OperandPair(0, 0)] * pad
    batches = tuple(tuple(pairs[k:k + BATCH]) for k in range(0, len(pairs), BATCH))
    return BatchSchedule(batches, kernel, channels, pad)


def run_stream(config: EngineConfig, w: np.ndarray, i: np.ndarray, bias=0) -> np.ndarray:
    """Accumulate padded (T, 9*B) operand streams on a bank and return final sums."""
    w = np.asarray(w, dtype=np.int64)
    i = np.asarray(i, dtype=np.int64)
    bank = EngineBank(config, w.shape[0])
    bank.reset(bias)
    for k in range(0, w.shape[1], BATCH):
        bank.consume(w[:, k:k + BATCH], i[:, k:k + BATCH])
    return bank.finalize()


def pad_stream(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    pad = (-x.shape[1]) % BATCH
    return np.pad(x, ((0, 0), (0, pad))) if pad else x
