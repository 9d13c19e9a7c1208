import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hedgelab import autodiff as ad
from hedgelab.models import (FAMILIES, SPAN_FAMILIES, TARGET_PARAM_COUNTS, ArchSpec,
                             IntegrityError, SpecError, build, check_param_count, forward,
                             forward_span_mlp, load, normalize, positional_encoding,
                             predict_delta, save)
from hedgelab.training import loss_pnl

N_INSTANCES = 16


def spec_for(family, sl=3):
    return ArchSpec(family, sl if family in SPAN_FAMILIES else None)


def inputs_for(params, rng, batch=3):
    if params.family in SPAN_FAMILIES:
        return rng.normal(scale=0.05, size=(batch, params.spec.span_length))
    return rng.normal(scale=0.05, size=batch)


def test_param_counts():
    got = {f: build(spec_for(f), 0).param_count for f in FAMILIES}
    assert got == {"snn": 13, "snn_pnl": 97, "rnn": 165, "tcn": 125, "attention": 91,
                   "span_mlp": 265}
    for f in FAMILIES:
        achieved, stated, exact = check_param_count(spec_for(f))
        assert achieved == got[f] and (stated, exact) == TARGET_PARAM_COUNTS[f]


def test_attention_count_grows_with_span():
    # two affines from SL to 10 plus the head: 2 * (10 SL + 10) + 11
    for sl in (3, 5, 7):
        assert ArchSpec("attention", sl).param_count == 20 * sl + 31


def test_spec_errors():
    with pytest.raises(SpecError):
        ArchSpec("mlp")
    with pytest.raises(SpecError):
        ArchSpec("rnn")
    with pytest.raises(SpecError):
        ArchSpec("snn", 3)
    with pytest.raises(SpecError):
        ArchSpec("snn", None, (2, 4, 1))
    with pytest.raises(SpecError):
        check_param_count(ArchSpec("attention", 3, (11,)))


@pytest.mark.parametrize("family", FAMILIES)
def test_build_is_seeded(family):
    a, b, c = build(spec_for(family), 1), build(spec_for(family), 1), build(spec_for(family), 2)
    np.testing.assert_array_equal(a.flat(), b.flat())
    assert not np.array_equal(a.flat(), c.flat())
    for name, shape, fan_in in a.spec.tensor_shapes():
        assert a[name].shape == shape
        assert np.all(np.abs(a[name].data) <= np.sqrt(1 / fan_in))


@pytest.mark.parametrize("family", FAMILIES)
def test_output_shapes_and_range(family, rng):
    params = build(spec_for(family, 5), 0)
    x = inputs_for(params, rng, batch=6)
    out = forward(params, x).data
    assert out.shape == (6,)
    assert np.all((out > 0) & (out < 1))
    single = forward(params, x[0]).data
    assert single.shape == ()
    assert float(single) == pytest.approx(out[0], rel=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
def test_full_architecture_gradcheck(family):
    worst_seen = 0.0
    for i in range(N_INSTANCES):
        rng = np.random.default_rng([7, i])
        params = build(spec_for(family, 3 + 2 * (i % 3)), i)
        x = inputs_for(params, rng)
        s0 = 100 * (1 + rng.normal(scale=0.05, size=3))
        s1 = s0 * (1 + rng.normal(scale=0.02, size=3))
        prem = rng.uniform(0.5, 3, size=3)

        def f():
            return loss_pnl(forward(params, x), s0, s1, prem, 100.0, 0.5)
        ok, worst = ad.gradcheck(f, params.parameters())
        worst_seen = max(worst_seen, worst)
        assert ok, f"{family} instance {i}: worst ratio {worst}"
    assert worst_seen < 1


def test_wrong_input_width(rng):
    params = build(ArchSpec("attention", 3), 0)
    with pytest.raises(ad.ShapeError):
        forward(params, rng.normal(size=(2, 4)))


def test_positional_encoding_changes_output(rng):
    params = build(ArchSpec("span_mlp", 3), 0)
    x = inputs_for(params, rng)
    assert positional_encoding(3).tolist() == [1.0, 2.0, 3.0]
    with_pe = forward_span_mlp(params, x).data
    manual = forward_span_mlp(params, x + np.array([1.0, 2.0, 3.0]), use_posenc=False).data
    np.testing.assert_allclose(with_pe, manual, rtol=1e-14)


def test_normalize_and_predict():
    assert normalize(110.0, 100.0) == pytest.approx(0.1)
    spans = np.array([[100.0, 101.0], [99.0, 98.0]])
    np.testing.assert_allclose(normalize(spans, np.array([100.0, 200.0])),
                               [[0.0, 0.01], [-0.505, -0.51]])
    params = build(ArchSpec("snn"), 0)
    np.testing.assert_array_equal(predict_delta(params, [95.0, 105.0], 100.0),
                                  forward(params, np.array([-0.05, 0.05])).data)


@pytest.mark.parametrize("family", FAMILIES)
def test_checkpoint_round_trip(family, tmp_path, rng):
    params = build(spec_for(family, 7), 3)
    save(params, tmp_path / "m.json")
    back = load(tmp_path / "m.json", family=family)
    assert back.spec == params.spec and back.init_seed == 3
    np.testing.assert_array_equal(back.flat(), params.flat())
    x = inputs_for(params, rng)
    np.testing.assert_array_equal(forward(back, x).data, forward(params, x).data)


def _tamper(path, fn):
    doc = json.loads(path.read_text())
    fn(doc)
    path.write_text(json.dumps(doc))


@pytest.mark.parametrize("change, field", [
    (lambda d: d.update(format="other"), "format"),
    (lambda d: d.update(version=99), "version"),
    (lambda d: d["arch"].update(param_count=1), "arch.param_count"),
    (lambda d: d["tensors"]["fc1.bias"]["data"].__setitem__(0, 0.123), "sha256"),
    (lambda d: d["arch"].update(family="cnn"), "arch"),
])
def test_checkpoint_integrity(tmp_path, change, field):
    path = tmp_path / "m.json"
    save(build(ArchSpec("snn"), 0), path)
    _tamper(path, change)
    with pytest.raises(IntegrityError, match=field):
        load(path)


def test_checkpoint_family_and_corruption(tmp_path):
    path = tmp_path / "m.json"
    save(build(ArchSpec("snn"), 0), path)
    with pytest.raises(IntegrityError, match="arch.family"):
        load(path, family="rnn")
    path.write_text(path.read_text()[:50])
    with pytest.raises(IntegrityError):
        load(path)


@given(st.sampled_from(SPAN_FAMILIES), st.integers(1, 9), st.integers(0, 2**31))
def test_any_span_length_runs(family, sl, seed):
    params = build(ArchSpec(family, sl), seed)
    x = np.random.default_rng(seed).normal(scale=0.1, size=(2, sl))
    out = forward(params, x).data
    assert out.shape == (2,) and np.all(np.isfinite(out))
