"""Network descriptions: YAML parsing with line diagnostics, op counts and
per-layer cost analysis.

Schema::

    name: alexnet
    layers:
      - name: conv1          # optional, defaults to layer<k>
        kind: conv           # conv | fc
        channels: 3
        filters: 96
        kernel: 11           # fc: must be 1 (default)
        stride: 4            # default 1
        pad: 0               # default 0
        input_size: 227      # square ifmap side before padding; fc: 1 (default)
        widths: [8, 8]       # (weight bits, data bits), default [8, 8]
        groups: 1            # grouped convolution, default 1
        batch: 1             # N, default 1

FC layers are 1x1 convolutions over a 1x1 ifmap with ``channels`` inputs.
"""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from . import costmodel, dataflow
from .oracle import LayerShape

DEFAULT_REG_SIZE = 36
CSV_HEADER = (
    "layer", "pe_type", "batches", "cycles", "time_ns", "energy_fj",
    "ifmap_fetches", "weight_fetches", "psum_writes",
)
BUNDLED = {"alexnet": "alexnet.yaml", "vgg19": "vgg19.yaml"}


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    channels: int
    filters: int
    kernel: int = 1
    stride: int = 1
    pad: int = 0
    input_size: int = 1
    widths: tuple[int, int] = (8, 8)
    groups: int = 1
    batch: int = 1

    @property
    def shape(self) -> LayerShape:
        """Per-group window shape on the padded ifmap."""
        return LayerShape(
            N=self.batch,
            M=self.filters,
            C=self.channels // self.groups,
            H=self.input_size + 2 * self.pad,
            R=self.kernel,
            S=self.stride,
        )

    @property
    def macs(self) -> int:
        return self.shape.macs

    @property
    def windows(self) -> int:
        s = self.shape
        return s.N * s.M * s.E * s.E


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: tuple[LayerSpec, ...]


_INT_FIELDS = ("channels", "filters", "kernel", "stride", "pad", "input_size", "groups", "batch")
_LAYER_FIELDS = {"name", "kind", "widths", *_INT_FIELDS}
_TOP_FIELDS = {"name", "layers"}


def _where(origin: str, node) -> str:
    return f"{origin}:{node.start_mark.line + 1}"


def _scalar(node, origin: str, what: str):
    if not isinstance(node, yaml.ScalarNode):
        raise SpecError(f"{_where(origin, node)}: {what} must be a scalar")
    return yaml.safe_load(yaml.serialize(node))


def _int(node, origin: str, what: str, minimum: int) -> int:
    v = _scalar(node, origin, what)
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise SpecError(f"{_where(origin, node)}: {what} must be an integer >= {minimum}, got {v!r}")
    return v


def _parse_layer(node, k: int, origin: str) -> LayerSpec:
    if not isinstance(node, yaml.MappingNode):
        raise SpecError(f"{_where(origin, node)}: layers[{k}] must be a mapping")
    vals: dict = {}
    for key_node, val_node in node.value:
        key = _scalar(key_node, origin, "field name")
        where = f"layers[{k}].{key}"
        if key not in _LAYER_FIELDS:
            raise SpecError(f"{_where(origin, key_node)}: unknown field {key!r} in layers[{k}]")
        if key in vals:
            raise SpecError(f"{_where(origin, key_node)}: duplicate field {where}")
        if key == "name":
            vals[key] = str(_scalar(val_node, origin, where))
        elif key == "kind":
            kind = _scalar(val_node, origin, where)
            if kind not in ("conv", "fc"):
                raise SpecError(f"{_where(origin, val_node)}: {where} must be conv or fc, got {kind!r}")
            vals[key] = kind
        elif key == "widths":
            if not isinstance(val_node, yaml.SequenceNode) or len(val_node.value) != 2:
                raise SpecError(f"{_where(origin, val_node)}: {where} must be a [weight, data] pair")
            vals[key] = tuple(_int(n, origin, where, 1) for n in val_node.value)
        else:
            vals[key] = _int(val_node, origin, where, 0 if key == "pad" else 1)
    line = _where(origin, node)
    for req in ("kind", "channels", "filters"):
        if req not in vals:
            raise SpecError(f"{line}: layers[{k}] missing required field {req!r}")
    if vals["kind"] == "conv":
        for req in ("kernel", "input_size"):
            if req not in vals:
                raise SpecError(f"{line}: conv layers[{k}] missing required field {req!r}")
    else:
        for f, v in (("kernel", 1), ("input_size", 1), ("stride", 1), ("pad", 0), ("groups", 1)):
            if vals.get(f, v) != v:
                raise SpecError(f"{line}: fc layers[{k}] must have {f}={v}")
    vals.setdefault("name", f"layer{k + 1}")
    layer = LayerSpec(**vals)
    if layer.channels % layer.groups or layer.filters % layer.groups:
        raise SpecError(f"{line}: layers[{k}] channels and filters must divide by groups={layer.groups}")
    try:
        layer.shape
    except ValueError as e:
        raise SpecError(f"{line}: layers[{k}] ({layer.name}): {e}") from None
    return layer


def parse_network(text: str, origin: str = "<string>", allow_empty: bool = False) -> NetworkSpec:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        raise SpecError(f"{origin}: malformed YAML: {e}") from None
    if not isinstance(root, yaml.MappingNode):
        raise SpecError(f"{origin}: top level must be a mapping")
    name, layers_node = None, None
    for key_node, val_node in root.value:
        key = _scalar(key_node, origin, "field name")
        if key not in _TOP_FIELDS:
            raise SpecError(f"{_where(origin, key_node)}: unknown top-level field {key!r}")
        if key == "name":
            name = str(_scalar(val_node, origin, "name"))
        else:
            layers_node = val_node
    if name is None:
        raise SpecError(f"{origin}: missing required field 'name'")
    if layers_node is None:
        raise SpecError(f"{origin}: missing required field 'layers'")
    if isinstance(layers_node, yaml.ScalarNode) and _scalar(layers_node, origin, "layers") is None:
        items = []
    elif isinstance(layers_node, yaml.SequenceNode):
        items = layers_node.value
    else:
        raise SpecError(f"{_where(origin, layers_node)}: layers must be a list")
    if not items and not allow_empty:
        raise SpecError(f"{_where(origin, layers_node)}: network {name!r} has no layers")
    layers = tuple(_parse_layer(n, k, origin) for k, n in enumerate(items))
    names = [l.name for l in layers]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise SpecError(f"{origin}: duplicate layer names {dup}")
    return NetworkSpec(name, layers)


def load_network(path: str | Path, allow_empty: bool = False) -> NetworkSpec:
    path = Path(path)
    return parse_network(path.read_text(), str(path), allow_empty)


def bundled_network(name: str) -> NetworkSpec:
    if name not in BUNDLED:
        raise KeyError(f"no bundled network {name!r}; available: {sorted(BUNDLED)}")
    text = resources.files("nesta.data").joinpath(BUNDLED[name]).read_text()
    return parse_network(text, BUNDLED[name])


def serialize_network(spec: NetworkSpec) -> str:
    layers = []
    for l in spec.layers:
        d = asdict(l)
        d["widths"] = list(l.widths)
        layers.append(d)
    return yaml.safe_dump({"name": spec.name, "layers": layers}, sort_keys=False)


def spec_hash(spec: NetworkSpec) -> str:
    return hashlib.sha256(serialize_network(spec).encode()).hexdigest()[:16]


def params_hash(params: costmodel.PpaParams) -> str:
    text = yaml.safe_dump([asdict(p) for p in params.pe_types], sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# op counts ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OpCount:
    macs: int
    macs_by_kernel: dict

    @property
    def flops(self) -> int:
        return 2 * self.macs


def network_op_count(spec: NetworkSpec) -> OpCount:
    by_kernel: dict[int, int] = {}
    for l in spec.layers:
        by_kernel[l.kernel] = by_kernel.get(l.kernel, 0) + l.macs
    return OpCount(sum(by_kernel.values()), dict(sorted(by_kernel.items())))


# analysis ----------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisRecord:
    layer: str
    pe_type: str
    batches: int
    cycles: int
    time_ns: float
    energy_fj: float
    ifmap_fetches: int
    weight_fetches: int
    psum_writes: int
    spec_hash: str
    params_hash: str

    def csv_row(self) -> list[str]:
        return [
            self.layer, self.pe_type, str(self.batches), str(self.cycles),
            f"{self.time_ns:.3f}", f"{self.energy_fj:.3f}",
            str(self.ifmap_fetches), str(self.weight_fetches), str(self.psum_writes),
        ]


def check_layer_sizing(layer: LayerSpec, reg_size: int = DEFAULT_REG_SIZE) -> None:
    s = layer.shape
    rule = costmodel.SizingRule(reg_size, s.C, s.R * s.R, *layer.widths)
    costmodel.require_sizing(rule, f"layer {layer.name}")


def analyze_network(
    spec: NetworkSpec,
    pe_types: Sequence[str],
    params: costmodel.PpaParams,
    flow: dataflow.DataflowKind | None = None,
    reg_size: int = DEFAULT_REG_SIZE,
) -> list[AnalysisRecord]:
    """One record per layer per PE type, in spec order then ``pe_types`` order."""
    flow = flow or dataflow.DataflowKind("OS")
    for name in pe_types:
        params[name]  # unknown names fail before any work
    sh, ph = spec_hash(spec), params_hash(params)
    records = []
    for layer in spec.layers:
        check_layer_sizing(layer, reg_size)
        s = layer.shape
        acc = dataflow.access_counts(s, flow)
        for name in pe_types:
            cost = costmodel.window_cost(params[name], s.R, s.C, layer.windows)
            records.append(AnalysisRecord(
                layer.name, name, cost.batches, cost.cycles, cost.time_ns, cost.energy_fj,
                acc.ifmap_fetches, acc.weight_fetches, acc.psum_writes, sh, ph,
            ))
    return records


def records_to_csv(records: Iterable[AnalysisRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(r.csv_row())
    return buf.getvalue()
