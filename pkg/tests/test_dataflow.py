import itertools
from collections import Counter

import numpy as np
import pytest

from nesta import costmodel, dataflow, engine, oracle
from nesta.dataflow import DataflowKind, LoopOrder
from nesta.oracle import LayerShape


def test_loop_order_parse_and_validate():
    assert str(LoopOrder.parse("b-u-h-w-c-i-j")) == "b-u-h-w-c-i-j"
    with pytest.raises(ValueError):
        LoopOrder.parse("b-u-c-h-w-i")
    with pytest.raises(ValueError):
        LoopOrder.parse("b-u-c-h-w-i-i")


def test_default_orders():
    assert str(DataflowKind("WS").loop_order) == "b-u-c-h-w-i-j"
    assert str(DataflowKind("OS").loop_order) == "b-u-h-w-c-i-j"
    assert DataflowKind("RS", engine_groups=2).engines == 6
    with pytest.raises(ValueError):
        DataflowKind("WS", engine_groups=2)
    with pytest.raises(ValueError):
        DataflowKind("XS")


def test_enumerate_single_tuple():
    assert list(dataflow.enumerate_schedule(LayerShape(1, 1, 1, 1, 1), LoopOrder(dataflow.LOOP_IDS))) == [
        (0,) * 7
    ]


def test_enumerate_count_alexnet_conv1_like():
    s = LayerShape(1, 2, 3, 23, 11, 4)
    n = sum(1 for _ in dataflow.enumerate_schedule(s, DataflowKind("OS").loop_order))
    assert n == 1 * 2 * 3 * s.E * s.E * 11 * 11


def test_enumerate_order_and_multiset():
    s = LayerShape(1, 2, 2, 4, 3)
    a = list(dataflow.enumerate_schedule(s, LoopOrder.parse("b-u-c-h-w-i-j")))
    b = list(dataflow.enumerate_schedule(s, LoopOrder.parse("j-i-w-h-c-u-b")))
    assert Counter(a) == Counter(b) and len(set(a)) == len(a)
    assert a == sorted(a)


def _tensors(shape, rng, lim=7):
    x = rng.integers(-lim, lim + 1, shape.ifmap_dims)
    f = rng.integers(-lim, lim + 1, shape.filter_dims)
    b = rng.integers(-20, 21, shape.M)
    return x, f, b


@pytest.mark.parametrize("kind", dataflow.KINDS)
def test_engine_run_matches_oracle(kind, rng):
    s = LayerShape(2, 2, 3, 7, 3, 2)
    x, f, b = _tensors(s, rng)
    out, stats = dataflow.run_conv_with_engines(s, DataflowKind(kind), engine.EngineConfig(8), x, f, b)
    assert (out == oracle.conv_layer(x, f, b, s)).all()
    model = dataflow.access_counts(s, DataflowKind(kind))
    assert stats == model


def test_rs_three_by_three():
    C = 5
    s = LayerShape(1, 1, C, 5, 3)
    rng = np.random.default_rng(0)
    x, f, b = _tensors(s, rng)
    flow = DataflowKind("RS", engine_groups=3)
    out, stats = dataflow.run_conv_with_engines(s, flow, engine.EngineConfig(8), x, f, b)
    assert stats.batches_per_output == C
    assert stats.cycles == stats.batches_per_output + 1  # 9 outputs on 9 engines


def test_rs_five_by_five_single_channel():
    s = LayerShape(1, 1, 1, 5, 5)
    x, f, b = _tensors(s, np.random.default_rng(1))
    _, stats = dataflow.run_conv_with_engines(s, DataflowKind("RS"), engine.EngineConfig(8), x, f, b)
    assert stats.batches_per_output == 3


def test_sizing_violation_raises():
    s = LayerShape(1, 1, 4, 5, 5)
    x = np.full(s.ifmap_dims, 127)
    f = np.full(s.filter_dims, 127)
    with pytest.raises(costmodel.SizingError):
        dataflow.run_conv_with_engines(s, DataflowKind("OS"), engine.EngineConfig(8), x, f, [0])


def test_dimension_mismatch():
    s = LayerShape(1, 1, 1, 3, 3)
    with pytest.raises(ValueError):
        dataflow.run_conv_with_engines(
            s, DataflowKind("OS"), engine.EngineConfig(8), np.ones((1, 1, 4, 4)), np.ones((1, 1, 3, 3)), [0]
        )


def test_ws_weight_fetches_once():
    s = LayerShape(2, 3, 4, 6, 3)
    ws = dataflow.access_counts(s, DataflowKind("WS"))
    nlr = dataflow.access_counts(s, DataflowKind("NLR"))
    assert ws.weight_fetches == 3 * 4 * 9
    assert nlr.weight_fetches == s.macs


def test_degenerate_shape_all_equal():
    s = LayerShape(1, 1, 1, 3, 3)
    totals = {k: dataflow.access_counts(s, DataflowKind(k)).transactions for k in dataflow.KINDS}
    assert len(set(totals.values())) == 1


@pytest.mark.parametrize("N,M,C,H,R,S", [(1, 4, 8, 9, 3, 1), (2, 3, 16, 11, 5, 2), (1, 8, 3, 23, 11, 4)])
def test_rs_psum_writes_at_most_os_and_nlr_dominates(N, M, C, H, R, S):
    s = LayerShape(N, M, C, H, R, S)
    stats = {k: dataflow.access_counts(s, DataflowKind(k)) for k in dataflow.KINDS}
    assert stats["RS"].psum_writes <= stats["OS"].psum_writes
    assert all(stats["NLR"].transactions >= v.transactions for v in stats.values())


def test_unsigned_data_widths():
    assert dataflow.data_widths(np.array([3]), np.array([255]), signed=False) == (2, 8)
    assert dataflow.data_widths(np.array([-4]), np.array([3]), signed=True) == (3, 3)
    with pytest.raises(ValueError):
        dataflow.data_widths(np.array([-1]), np.array([1]), signed=False)


def test_is_counts_only_touched_pixels():
    s = LayerShape(1, 1, 1, 7, 1, 2)  # every other pixel is skipped
    assert dataflow.access_counts(s, DataflowKind("IS")).ifmap_fetches == 16
    s = LayerShape(1, 1, 1, 7, 3, 2)
    assert dataflow.access_counts(s, DataflowKind("IS")).ifmap_fetches == 49
