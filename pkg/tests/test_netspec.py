import pytest

from nesta import costmodel, netspec
from nesta.netspec import SpecError, parse_network


@pytest.fixture(scope="module")
def params():
    return costmodel.load_params()


def test_bundled_layer_counts():
    assert len(netspec.bundled_network("alexnet").layers) == 8
    assert len(netspec.bundled_network("vgg19").layers) == 19


@pytest.mark.parametrize("name", sorted(netspec.BUNDLED))
def test_round_trip(name):
    spec = netspec.bundled_network(name)
    text = netspec.serialize_network(spec)
    assert parse_network(text) == spec
    assert netspec.serialize_network(parse_network(text)) == text


def test_empty_layers_rejected_unless_allowed():
    with pytest.raises(SpecError, match="no layers"):
        parse_network("name: x\nlayers: []\n")
    assert parse_network("name: x\nlayers: []\n", allow_empty=True).layers == ()


def test_unknown_field_reports_line():
    doc = "name: x\nlayers:\n  - kind: conv\n    channels: 3\n    filters: 4\n    kernal: 3\n"
    with pytest.raises(SpecError, match=r":6: unknown field 'kernal'"):
        parse_network(doc)


@pytest.mark.parametrize("doc,msg", [
    ("layers: []", "name"),
    ("name: x\nlayers:\n  - {kind: conv, channels: 3, filters: 4, input_size: 5}", "kernel"),
    ("name: x\nlayers:\n  - {kind: pool, channels: 3, filters: 4}", "conv or fc"),
    ("name: x\nlayers:\n  - {kind: conv, channels: 3, filters: 4, kernel: 3, input_size: 6, stride: 2}", "divisible"),
    ("name: x\nlayers:\n  - {kind: fc, channels: 3, filters: 4, kernel: 3}", "kernel=1"),
    ("name: x\nlayers:\n  - {kind: conv, channels: 3, filters: 4, kernel: 3, input_size: 5, groups: 2}", "groups"),
    ("name: x\nlayers:\n  - {kind: conv, channels: 0, filters: 4, kernel: 3, input_size: 5}", ">= 1"),
    ("name: x\nlayers:\n  - {kind: conv, channels: 3, filters: 4, kernel: 3, input_size: 5, widths: [8]}", "pair"),
    ("name: x\nextra: 1\nlayers: []", "unknown top-level"),
    ("name: [x\n", "malformed"),
])
def test_schema_violations(doc, msg):
    with pytest.raises(SpecError, match=msg):
        parse_network(doc)


def test_single_unit_layer_op_count():
    spec = parse_network("name: x\nlayers:\n  - {kind: fc, channels: 1, filters: 1}")
    ops = netspec.network_op_count(spec)
    assert ops.macs == 1 and ops.flops == 2


def test_fc_equals_one_by_one_conv():
    fc = parse_network("name: a\nlayers:\n  - {kind: fc, channels: 4096, filters: 1000}")
    conv = parse_network("name: b\nlayers:\n  - {kind: conv, channels: 4096, filters: 1000, kernel: 1, input_size: 1}")
    assert netspec.network_op_count(fc).macs == netspec.network_op_count(conv).macs


def test_analyze_empty_network(params):
    spec = parse_network("name: x\nlayers: []", allow_empty=True)
    assert netspec.analyze_network(spec, ["nesta"], params) == []
    assert netspec.records_to_csv([]) == ",".join(netspec.CSV_HEADER) + "\n"


def test_analyze_sizing_names_layer(params):
    spec = parse_network(
        "name: x\nlayers:\n  - {name: big, kind: conv, channels: 64, filters: 1, kernel: 3, input_size: 3, widths: [16, 16]}"
    )
    with pytest.raises(costmodel.SizingError, match="layer big"):
        netspec.analyze_network(spec, ["nesta"], params)


def test_analyze_finalize_overhead_small(params):
    spec = parse_network("name: x\nlayers:\n  - {kind: conv, channels: 512, filters: 2, kernel: 3, input_size: 5}")
    (rec,) = netspec.analyze_network(spec, ["nesta"], params)
    assert (rec.cycles - rec.batches) / rec.cycles < 0.02


def test_below_crossover_mac9_wins(params):
    spec = parse_network("name: x\nlayers:\n  - {kind: conv, channels: 1, filters: 4, kernel: 1, input_size: 8}")
    recs = {r.pe_type: r for r in netspec.analyze_network(spec, ["nesta", "mac9-brx4-hwa-ks"], params)}
    assert recs["mac9-brx4-hwa-ks"].time_ns < recs["nesta"].time_ns


def test_records_carry_hashes(params):
    spec = netspec.bundled_network("alexnet")
    recs = netspec.analyze_network(spec, ["nesta"], params)
    assert {r.spec_hash for r in recs} == {netspec.spec_hash(spec)}
    assert {r.params_hash for r in recs} == {netspec.params_hash(params)}
