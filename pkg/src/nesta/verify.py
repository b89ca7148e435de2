"""Seeded engine-vs-oracle verification campaigns.

Trial ``t`` draws everything from ``SeedSequence(seed, spawn_key=(t,))`` so
any failure replays from (seed, trial) alone.  A trial is one R x R x C
convolution window: kernel R in {1, 3, 5, 11}, C in 1..32, a random maximal
(weight, data) width pair admitted by the sizing rule, random operands of
those widths and a small bias.  The engine output is compared to the oracle
on every cycle (running sum) and after finalization (``conv_layer``).

Trials with the same width and signedness share one engine bank; shorter
trajectories are clock gated once their batches run out.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import costmodel, engine, oracle
from .ppgen import ACCUMULATOR_WIDTHS, BATCH

KERNELS = (1, 3, 5, 11)
MAX_CHANNELS = 32
BIAS_LIMIT = 1000
CHUNK = 512


@dataclass(frozen=True)
class Trial:
    index: int
    width: int
    signed: bool
    R: int
    C: int
    w_weight: int
    w_data: int
    weights: np.ndarray  # (C, R, R)
    inputs: np.ndarray  # (C, R, R)
    bias: int

    @property
    def batches(self) -> int:
        return costmodel.batches(self.R, self.C)

    @property
    def shape(self) -> oracle.LayerShape:
        return oracle.LayerShape(N=1, M=1, C=self.C, H=self.R, R=self.R)


def _operand_bounds(bits: int, signed: bool) -> tuple[int, int]:
    if signed:
        return -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    return 0, (1 << bits) - 1


def make_trial(seed: int, index: int, width: int, signed: bool | None = None) -> Trial:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    if signed is None:
        signed = bool(rng.integers(2))
    R = int(rng.choice(KERNELS))
    C = int(rng.integers(1, MAX_CHANNELS + 1))
    reg = ACCUMULATOR_WIDTHS[width]
    pairs = costmodel.valid_width_pairs(reg, C, R * R)
    ww, wd = pairs[int(rng.integers(len(pairs)))]
    lo, hi = _operand_bounds(ww, signed)
    weights = rng.integers(lo, hi + 1, size=(C, R, R))
    lo, hi = _operand_bounds(wd, signed)
    inputs = rng.integers(lo, hi + 1, size=(C, R, R))
    # keep the bias inside whatever headroom the worst case leaves
    worst = C * R * R * max(abs(a) * abs(b) for a in _operand_bounds(ww, signed)
                            for b in _operand_bounds(wd, signed))
    top = (1 << (reg - 1)) - 1 if signed else (1 << reg) - 1
    room = min(BIAS_LIMIT, top - worst)
    bias = int(rng.integers(-room if signed else 0, room + 1))
    return Trial(index, width, signed, R, C, ww, wd, weights, inputs, bias)


@dataclass(frozen=True)
class Counterexample:
    seed: int
    trial: int
    batch: int  # 0-based batch after which the mismatch showed; -1 for the final sum
    expected: int
    got: int

    def __str__(self):
        where = "final sum" if self.batch < 0 else f"after batch {self.batch}"
        return (f"seed={self.seed} trial={self.trial} {where}: "
                f"expected {self.expected}, engine gave {self.got}")


@dataclass
class VerifyReport:
    seed: int
    width: int
    variant: str
    trials: int
    cycles_checked: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def counterexample(self) -> Counterexample | None:
        return min(self.failures, key=lambda c: (c.trial, c.batch % (1 << 30))) if self.failures else None


Fault = Callable[[engine.EngineBank, int, Sequence[int]], None]


def flip_fault(trial: int, batch: int = 0) -> Fault:
    """Fault hook flipping S bit 0 of ``trial``'s engine after its ``batch``-th cycle."""

    def hook(bank: engine.EngineBank, step: int, members: Sequence[int]) -> None:
        if step == batch and trial in members:
            row = list(members).index(trial)
            bank.s[row, 0] ^= 1

    return hook


def _run_group(trials: list[Trial], variant: str, report: VerifyReport, fault: Fault | None):
    width, signed = trials[0].width, trials[0].signed
    config = engine.EngineConfig(width, cel_variant=variant, signed_mode=signed)
    T = len(trials)
    nb = np.array([t.batches for t in trials])
    steps = int(nb.max())
    L = steps * BATCH
    w = np.zeros((T, L), np.int64)
    x = np.zeros((T, L), np.int64)
    for r, t in enumerate(trials):
        n = t.R * t.R * t.C
        w[r, :n] = t.weights.reshape(-1)
        x[r, :n] = t.inputs.reshape(-1)
    bias = np.array([t.bias for t in trials], np.int64)
    running = bias[:, None] + np.cumsum((w * x).reshape(T, steps, BATCH).sum(axis=2), axis=1)
    members = [t.index for t in trials]
    bad = np.zeros(T, bool)

    bank = engine.EngineBank(config, T)
    bank.reset(bias)
    for k in range(steps):
        active = nb > k
        sl = slice(k * BATCH, (k + 1) * BATCH)
        bank.consume(w[:, sl], x[:, sl], active=active)
        if fault is not None:
            fault(bank, k, members)
        got = bank.values()
        miss = active & ~bad & (got != running[:, k])
        report.cycles_checked += int(active.sum())
        for r in np.flatnonzero(miss):
            report.failures.append(Counterexample(report.seed, members[r], k, int(running[r, k]), int(got[r])))
        bad |= miss
    final = bank.finalize()
    report.cycles_checked += T
    for r, t in enumerate(trials):
        expected = int(oracle.conv_layer(
            t.inputs[None], t.weights[None], [t.bias], t.shape
        )[0, 0, 0, 0])
        if int(final[r]) != expected and not bad[r]:
            report.failures.append(Counterexample(report.seed, t.index, -1, expected, int(final[r])))


def run_verification(
    seed: int,
    trials: int,
    width: int,
    variant: str = "standard",
    signed: bool | None = None,
    fault: Fault | None = None,
    indices: Sequence[int] | None = None,
) -> VerifyReport:
    """Run ``trials`` seeded trials (or the explicit ``indices``) and collect mismatches."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if width not in ACCUMULATOR_WIDTHS:
        raise ValueError(f"width must be one of {sorted(ACCUMULATOR_WIDTHS)}")
    idx = list(range(trials)) if indices is None else list(indices)
    report = VerifyReport(seed, width, variant, len(idx))
    made = [make_trial(seed, t, width, signed) for t in idx]
    for sgn in (False, True):
        group = sorted((t for t in made if t.signed == sgn), key=lambda t: (t.batches, t.index))
        for k in range(0, len(group), CHUNK):
            _run_group(group[k:k + CHUNK], variant, report, fault)
    return report
