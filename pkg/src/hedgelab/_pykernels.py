"""Pure numpy fallback for the compiled kernels in ``_ckernels.pyx``.

Random words are identical bit-for-bit to the compiled version. Normals and
prices agree to within an ulp or two (numpy and libm transcendental
functions are not guaranteed to round identically).
"""
import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
TWO_PI = 6.283185307179586
INV_2_53 = 1.0 / 9007199254740992.0


def fmix(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * MIX1
        z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


def path_state(seed, paths):
    seed = np.asarray(seed, dtype=np.uint64)
    paths = np.asarray(paths, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return fmix(fmix(seed) ^ ((paths + np.uint64(1)) * GAMMA))


def random_words(seed, path, n):
    state = path_state(seed, path)
    counters = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return fmix(state + counters * GAMMA)


def _unit(words):
    return ((words >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * INV_2_53


def standard_normals(seed, n_paths, n_steps):
    npairs = (n_steps + 1) // 2
    states = path_state(seed, np.arange(n_paths, dtype=np.uint64))[:, None]
    c1 = (2 * np.arange(npairs, dtype=np.uint64) + np.uint64(1))[None, :]
    with np.errstate(over="ignore"):
        u1 = _unit(fmix(states + c1 * GAMMA))
        u2 = _unit(fmix(states + (c1 + np.uint64(1)) * GAMMA))
    r = np.sqrt(-2.0 * np.log(u1))
    theta = TWO_PI * u2
    z = np.empty((n_paths, 2 * npairs))
    z[:, 0::2] = r * np.cos(theta)
    z[:, 1::2] = r * np.sin(theta)
    return np.ascontiguousarray(z[:, :n_steps])


def gbm_paths(seed, n_paths, n_steps, s0, drift, diffusion):
    z = standard_normals(seed, n_paths, n_steps)
    growth = np.exp(drift + diffusion * z)
    out = np.empty((n_paths, n_steps + 1))
    out[:, 0] = s0
    out[:, 1:] = growth
    # left-to-right product, same association order as the compiled loop
    return np.cumprod(out, axis=1)


def dilated_conv1d_forward(x, h, dilation):
    B, T = x.shape
    y = np.zeros((B, T))
    for i, hi in enumerate(h):
        shift = dilation * i
        if shift >= T:
            break
        y[:, shift:] += hi * x[:, : T - shift]
    return y


def dilated_conv1d_backward(x, h, dilation, gy):
    B, T = x.shape
    gx = np.zeros((B, T))
    gh = np.zeros(len(h))
    for i, hi in enumerate(h):
        shift = dilation * i
        if shift >= T:
            break
        gx[:, : T - shift] += hi * gy[:, shift:]
        gh[i] = np.sum(gy[:, shift:] * x[:, : T - shift])
    return gx, gh
