import numpy as np
import pytest
from hypothesis import given, strategies as st

from hedgelab.analysis import (ContractError, CriticalityRow, criticality, max_position,
                               mean_query, write_criticality)
from hedgelab.models import ArchSpec, build, positional_encoding


def probe(sl, n=20, seed=0):
    return np.random.default_rng(seed).normal(scale=0.02, size=(n, sl))


def test_matches_hand_computation():
    params = build(ArchSpec("attention", 3), 4)
    x = probe(3)
    z = x + positional_encoding(3)
    logits = z @ params["query.weight"].data.T + params["query.bias"].data
    w = np.exp(logits - logits.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    c = np.abs(w.mean(axis=0) @ params["value.weight"].data)
    row = criticality(params, x)
    np.testing.assert_allclose(row.weights, c / c.sum(), rtol=1e-12)
    np.testing.assert_allclose(mean_query(params, x), w.mean(axis=0), rtol=1e-12)


@given(st.sampled_from([3, 5, 7]), st.integers(0, 10_000))
def test_rows_sum_to_one(sl, seed):
    row = criticality(build(ArchSpec("attention", sl), seed), probe(sl, seed=seed))
    assert len(row.weights) == sl
    assert abs(sum(row.weights) - 1) <= 1e-6
    assert min(row.weights) >= 0


def test_contracts():
    with pytest.raises(ContractError):
        criticality(build(ArchSpec("span_mlp", 3), 0), probe(3))
    with pytest.raises(ContractError):
        criticality(build(ArchSpec("attention", 3), 0), np.zeros((0, 3)))
    with pytest.raises(ContractError):
        CriticalityRow(3, (0.5, 0.5))


def test_zero_value_weights_fall_back_to_uniform():
    params = build(ArchSpec("attention", 4), 0)
    params["value.weight"].data[:] = 0.0
    assert criticality(params, probe(4)).weights == (0.25,) * 4


def test_max_position_tie_break_and_csv(tmp_path):
    row = CriticalityRow(3, (0.4, 0.4, 0.2))
    assert max_position(row) == 0
    write_criticality(tmp_path / "c.csv", [(0, row)], {"span": 3})
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[:3] == ["# span=3", "span_length,position,weight,seed", "3,0,0.4,0"]
