"""Cycle, runtime and energy arithmetic for NESTA and MAC-style PEs,
crossover analysis and the accumulator sizing rule.

PPA numbers are never hardcoded: they come from a YAML parameter file
(``data/ppa_default.yaml`` by default).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from math import ceil
from pathlib import Path
from typing import Iterable, Sequence

import yaml

BATCH = 9
PE_KINDS = ("nesta", "nesta-v1", "mac", "mac9")
_OPS = {"nesta": 9, "mac9": 9, "mac": 1, "nesta-v1": 1}
DEFAULT_PARAMS = "ppa_default.yaml"


class ParamsError(ValueError):
    pass


class SizingError(ValueError):
    pass


@dataclass(frozen=True)
class PeParams:
    name: str
    kind: str
    area_um2: float
    power_uw: float
    delay_ns: float
    ops_per_cycle: int
    label: str = ""
    source: str = ""

    def __post_init__(self):
        if self.kind not in PE_KINDS:
            raise ParamsError(f"{self.name}: unknown kind {self.kind!r}, expected one of {PE_KINDS}")
        for f in ("area_um2", "power_uw", "delay_ns", "ops_per_cycle"):
            if not getattr(self, f) > 0:
                raise ParamsError(f"{self.name}: {f} must be positive")
        if self.ops_per_cycle != _OPS[self.kind]:
            raise ParamsError(
                f"{self.name}: a {self.kind} PE does {_OPS[self.kind]} ops per cycle, "
                f"got {self.ops_per_cycle}"
            )

    @property
    def pdp_fj(self) -> float:
        """Power-delay product of one cycle."""
        return self.power_uw * self.delay_ns


_FIELDS = {"name", "kind", "area_um2", "power_uw", "delay_ns", "ops_per_cycle", "label", "source"}


@dataclass(frozen=True)
class PpaParams:
    pe_types: tuple[PeParams, ...]
    origin: str = ""

    def __post_init__(self):
        names = [p.name for p in self.pe_types]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ParamsError(f"duplicate PE names: {sorted(dup)}")

    def __getitem__(self, name: str) -> PeParams:
        for p in self.pe_types:
            if p.name == name:
                return p
        raise KeyError(f"unknown PE type {name!r}; known: {', '.join(self.names)}")

    def __contains__(self, name) -> bool:
        return any(p.name == name for p in self.pe_types)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.pe_types]

    def of_kind(self, kind: str) -> list[PeParams]:
        return [p for p in self.pe_types if p.kind == kind]

    @property
    def nesta(self) -> PeParams:
        found = self.of_kind("nesta")
        if not found:
            raise ParamsError("parameter file has no nesta PE")
        return found[0]

    def fastest(self, kind: str) -> PeParams:
        return min(self.of_kind(kind), key=lambda p: p.delay_ns)


def parse_params(text: str, origin: str = "<string>") -> PpaParams:
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict) or not isinstance(doc.get("pe_types"), list):
        raise ParamsError(f"{origin}: expected a mapping with a 'pe_types' list")
    pes = []
    for k, rec in enumerate(doc["pe_types"]):
        if not isinstance(rec, dict):
            raise ParamsError(f"{origin}: pe_types[{k}] is not a mapping")
        unknown = set(rec) - _FIELDS
        if unknown:
            raise ParamsError(f"{origin}: pe_types[{k}] has unknown fields {sorted(unknown)}")
        missing = {"name", "kind", "area_um2", "power_uw", "delay_ns", "ops_per_cycle"} - set(rec)
        if missing:
            raise ParamsError(f"{origin}: pe_types[{k}] missing {sorted(missing)}")
        try:
            pes.append(PeParams(**rec))
        except TypeError as e:
            raise ParamsError(f"{origin}: pe_types[{k}]: {e}") from None
    return PpaParams(tuple(pes), origin)


def load_params(path: str | Path | None = None) -> PpaParams:
    if path is None:
        text = resources.files("nesta.data").joinpath(DEFAULT_PARAMS).read_text()
        return parse_params(text, DEFAULT_PARAMS)
    path = Path(path)
    return parse_params(path.read_text(), str(path))


# cycles ------------------------------------------------------------------------------


def _kind(pe) -> str:
    kind = pe.kind if isinstance(pe, PeParams) else str(pe).lower()
    if kind not in PE_KINDS:
        raise ValueError(f"unknown PE kind {pe!r}")
    return kind


def batches(R: int, C: int) -> int:
    if R < 1 or C < 1:
        raise ValueError("R and C must be >= 1")
    return ceil(R * R * C / BATCH)


def cycles(pe, R: int, C: int) -> int:
    """Cycles for one R x R x C window."""
    kind = _kind(pe)
    b = batches(R, C)
    pairs = R * R * C
    return {"nesta": b + 1, "mac9": b, "mac": pairs, "nesta-v1": pairs + 1}[kind]


def batch_cycles(pe, n_batches: int) -> int:
    """Cycles to consume ``n_batches`` 9-pair batches (padding included)."""
    if n_batches < 0:
        raise ValueError("batch count must be nonnegative")
    kind = _kind(pe)
    return {
        "nesta": n_batches + 1,
        "mac9": n_batches,
        "mac": BATCH * n_batches,
        "nesta-v1": BATCH * n_batches + 1,
    }[kind]


@dataclass(frozen=True)
class CostReport:
    pe: str
    batches: int
    cycles: int
    time_ns: float
    energy_fj: float
    ops: int
    pdp_fj: float | None  # energy per useful op; None with no ops


def _report(pe: PeParams, n_batches: int, n_cycles: int, ops: int) -> CostReport:
    time_ns = n_cycles * pe.delay_ns
    energy = time_ns * pe.power_uw
    return CostReport(pe.name, n_batches, n_cycles, time_ns, energy, ops, energy / ops if ops else None)


def runtime_energy(pe: PeParams, n_batches: int) -> CostReport:
    """time = cycles * delay, energy = time * power, for a stream of batches."""
    n_cycles = batch_cycles(pe, n_batches)
    return _report(pe, n_batches, n_cycles, BATCH * n_batches)


def window_cost(pe: PeParams, R: int, C: int, windows: int = 1) -> CostReport:
    """Cost of ``windows`` independent R x R x C output windows on one PE."""
    return _report(pe, windows * batches(R, C), windows * cycles(pe, R, C), windows * R * R * C)


# crossover ---------------------------------------------------------------------------


def crossover_batches(nesta_delay: float, competitor_delay: float) -> int | None:
    """Smallest B with (B + 1) * nesta_delay < B * competitor_delay, None if never."""
    if nesta_delay <= 0 or competitor_delay <= 0:
        raise ValueError("delays must be positive")
    if competitor_delay <= nesta_delay:
        return None
    b = int(nesta_delay // (competitor_delay - nesta_delay)) + 1
    # guard float floor at exact boundaries
    while (b + 1) * nesta_delay >= b * competitor_delay:
        b += 1
    while b > 1 and b * nesta_delay < (b - 1) * competitor_delay:
        b -= 1
    return b


def crossover_channels(R: int, nesta_delay: float, competitor_delay: float) -> int | None:
    """Fewest channels C for which an R x R x C window is faster on NESTA."""
    b_star = crossover_batches(nesta_delay, competitor_delay)
    if b_star is None:
        return None
    c = max(1, (BATCH * (b_star - 1)) // (R * R) + 1)
    while batches(R, c) < b_star:
        c += 1
    while c > 1 and batches(R, c - 1) >= b_star:
        c -= 1
    return c


# area-normalised comparison -------------------------------------------------------------


@dataclass(frozen=True)
class Improvement:
    pe: str
    throughput_pct: float
    energy_pct: float


def throughput_energy_improvement(
    params: PpaParams,
    area_budget: float,
    conv_size: int,
    count: int = 1024,
    competitors: Sequence[str] | None = None,
) -> list[Improvement]:
    """Percent improvement of NESTA over each competitor at a fixed silicon area.

    The workload is one R x R window accumulated over ``count`` channels.
    Each PE type fills the budget with floor(budget / area) units that split
    the cycles evenly; energy is cycles * delay * power and does not depend
    on the unit count.
    """
    nesta = params.nesta
    if area_budget < nesta.area_um2:
        raise ValueError(f"area budget {area_budget} smaller than one NESTA ({nesta.area_um2})")
    if competitors is None:
        competitors = [p.name for p in params.pe_types if p.kind != "nesta"]

    def time_energy(pe: PeParams):
        units = int(area_budget // pe.area_um2)
        cyc = cycles(pe, conv_size, count)
        return cyc * pe.delay_ns / units, cyc * pe.delay_ns * pe.power_uw

    tn, en = time_energy(nesta)
    out = []
    for name in competitors:
        pe = params[name]
        if area_budget < pe.area_um2:
            raise ValueError(f"area budget {area_budget} smaller than one {name}")
        tx, ex = time_energy(pe)
        out.append(Improvement(name, (1 - tn / tx) * 100, (1 - en / ex) * 100))
    return out


# sizing ------------------------------------------------------------------------------


def _clog2(x: int) -> int:
    return (int(x) - 1).bit_length() if x > 1 else 0


def input_register_width(reg_size: int) -> int:
    """Operand register width that pairs with an accumulator of ``reg_size`` bits."""
    return 8 if reg_size <= 20 else 16


@dataclass(frozen=True)
class SizingRule:
    reg_size: int
    n_ch: int
    window: int
    w_weight: int
    w_data: int

    def __post_init__(self):
        for f in ("reg_size", "n_ch", "window", "w_weight", "w_data"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be positive")

    @property
    def required_bits(self) -> int:
        return _clog2(self.n_ch) + _clog2(self.window) + self.w_weight + self.w_data


@dataclass(frozen=True)
class SizingResult:
    ok: bool
    required_bits: int
    reg_size: int
    details: tuple[str, ...] = field(default=())

    def __bool__(self):
        return self.ok


def check_bitwidths(rule: SizingRule) -> SizingResult:
    problems = []
    need = rule.required_bits
    if need > rule.reg_size:
        problems.append(
            f"ceil(log2 {rule.n_ch}) + ceil(log2 {rule.window}) + {rule.w_weight} + {rule.w_data}"
            f" = {need} > {rule.reg_size}"
        )
    limit = input_register_width(rule.reg_size)
    for name in ("w_weight", "w_data"):
        if getattr(rule, name) > limit:
            problems.append(f"{name}={getattr(rule, name)} exceeds the {limit}-bit input register")
    return SizingResult(not problems, need, rule.reg_size, tuple(problems))


def valid_width_pairs(reg_size: int, n_ch: int, window: int) -> list[tuple[int, int]]:
    """Maximal (w_weight, w_data) pairs accepted by ``check_bitwidths``."""
    if min(reg_size, n_ch, window) < 1:
        raise ValueError("arguments must be positive")
    limit = input_register_width(reg_size)
    budget = reg_size - _clog2(n_ch) - _clog2(window)
    pairs = []
    for ww in range(limit, 0, -1):
        wd = min(limit, budget - ww)
        if wd < 1:
            continue
        # maximal: neither width can grow alone
        if ww < limit and check_bitwidths(SizingRule(reg_size, n_ch, window, ww + 1, wd)):
            continue
        pairs.append((ww, wd))
    return pairs


def require_sizing(rule: SizingRule, where: str = "") -> None:
    res = check_bitwidths(rule)
    if not res.ok:
        prefix = f"{where}: " if where else ""
        raise SizingError(prefix + "; ".join(res.details))


def layer_pe_costs(
    params: PpaParams, names: Iterable[str], R: int, C: int, windows: int
) -> list[CostReport]:
    return [window_cost(params[n], R, C, windows) for n in names]
