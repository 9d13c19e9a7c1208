import numpy as np
import pytest
from scipy import stats

from hedgelab import _pykernels, kernels

try:
    from hedgelab import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")

GAMMA = 0x9E3779B97F4A7C15
M = (1 << 64) - 1


def fmix(z):
    # reference SplitMix64 finaliser in plain Python integers
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & M
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & M
    return z ^ (z >> 31)


def ref_words(seed, path, n):
    state = fmix(fmix(seed) ^ ((path + 1) * GAMMA & M))
    return [fmix((state + (c + 1) * GAMMA) & M) for c in range(n)]


def naive_conv(x, h, d):
    B, T = x.shape
    out = np.zeros_like(x)
    for b in range(B):
        for s in range(T):
            for i in range(len(h)):
                if s - d * i >= 0:
                    out[b, s] += h[i] * x[b, s - d * i]
    return out


@pytest.mark.parametrize("mod", [_pykernels, pytest.param(_ckernels, marks=needs_ext)])
def test_random_words_match_integer_reference(mod):
    for seed, path in [(0, 0), (1, 5), (2**63 + 17, 3)]:
        got = [int(w) for w in mod.random_words(seed, path, 9)]
        assert got == ref_words(seed, path, 9)


@needs_ext
def test_backends_agree():
    a = _pykernels.standard_normals(11, 7, 13)
    b = _ckernels.standard_normals(11, 7, 13)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-14)
    pa = _pykernels.gbm_paths(3, 50, 22, 100.0, 0.0001, 0.0126)
    pb = _ckernels.gbm_paths(3, 50, 22, 100.0, 0.0001, 0.0126)
    np.testing.assert_allclose(pa, pb, rtol=1e-13)


@pytest.mark.parametrize("mod", [_pykernels, pytest.param(_ckernels, marks=needs_ext)])
@pytest.mark.parametrize("d", [1, 2, 4])
def test_conv_matches_naive_definition(mod, d, rng):
    x = rng.normal(size=(4, 7))
    h = rng.normal(size=2)
    np.testing.assert_array_equal(mod.dilated_conv1d_forward(x, h, d), naive_conv(x, h, d))


@pytest.mark.parametrize("mod", [_pykernels, pytest.param(_ckernels, marks=needs_ext)])
def test_conv_backward_is_adjoint(mod, rng):
    x = rng.normal(size=(3, 9))
    h = rng.normal(size=3)
    gy = rng.normal(size=(3, 9))
    gx, gh = mod.dilated_conv1d_backward(x, h, 2, gy)
    # <conv(x), gy> is bilinear, so <gx, x> and <gh, h> both equal it
    inner = np.sum(naive_conv(x, h, 2) * gy)
    assert np.sum(gx * x) == pytest.approx(inner, rel=1e-12)
    assert np.sum(gh * h) == pytest.approx(inner, rel=1e-12)


def test_normals_look_standard():
    z = kernels.standard_normals(0, 2000, 50).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.std() - 1) < 0.01
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_paths_independent_of_batch_size():
    # counter-based: path p is the same whether 3 or 30 paths are drawn
    a = kernels.gbm_paths(5, 3, 10, 100.0, 0.0, 0.01)
    b = kernels.gbm_paths(5, 30, 10, 100.0, 0.0, 0.01)
    np.testing.assert_array_equal(a, b[:3])


def test_use_backend_switches_and_restores():
    prev = kernels.use_backend("python")
    try:
        assert kernels.BACKEND == "python"
        z = kernels.standard_normals(1, 2, 3)
        assert z.shape == (2, 3)
    finally:
        kernels.use_backend(prev)
    assert kernels.BACKEND == prev
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")
