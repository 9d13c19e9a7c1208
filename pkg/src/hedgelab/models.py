"""The hedging networks: parameter layouts, seeded init, forward passes, checkpoints.

All forward functions take strike-normalised prices, ``spot / strike - 1``
(see ``normalize``), and return a delta in (0, 1). Inputs may carry a leading batch axis.

Family layouts (``layer_sizes`` meaning differs per family):

=========  ==================  ============================================
family     layer_sizes         structure
=========  ==================  ============================================
snn        (1, 4, 1)           affine-gelu-affine-sigmoid
snn_pnl    (1, 32, 1)          same, wider
rnn        (6, 4, 6)           3 stacked tanh RNN layers, affine head
tcn        (2, 23)             3 causal convs (kernel 2, dilation 1/2/4,
                               gelu + residual), affine-gelu-affine head
attention  (10,)               softmax(W_Q z) * (W_V z) -> affine, z = x+pos
span_mlp   (14, 13)            z = x+pos, affine-gelu x2, affine-sigmoid
=========  ==================  ============================================
"""
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

FAMILIES = ("snn", "snn_pnl", "rnn", "tcn", "attention", "span_mlp")
SPAN_FAMILIES = ("rnn", "tcn", "attention", "span_mlp")

DEFAULT_LAYER_SIZES = {
    "snn": (1, 4, 1),
    "snn_pnl": (1, 32, 1),
    "rnn": (6, 4, 6),
    "tcn": (2, 23),
    "attention": (10,),
    "span_mlp": (14, 13),
}

# (stated count, exact?) at span length 3 for the span families
TARGET_PARAM_COUNTS = {
    "snn": (13, True),
    "snn_pnl": (97, True),
    "rnn": (166, False),
    "tcn": (126, False),
    "attention": (91, True),
    "span_mlp": (265, False),
}
TARGET_TOLERANCE = 0.15
TCN_DILATIONS = (1, 2, 4)
CHECKPOINT_FORMAT = "hedgelab-checkpoint"
CHECKPOINT_VERSION = 1
NORMALIZATION = {"kind": "moneyness", "formula": "spot / strike - 1"}


class SpecError(ValueError):
    pass


class IntegrityError(ValueError):
    pass


def _affine_shapes(prefix, n_in, n_out):
    return [(f"{prefix}.weight", (n_out, n_in), n_in), (f"{prefix}.bias", (n_out,), n_in)]


@dataclass(frozen=True)
class ArchSpec:
    family: str
    span_length: int | None = None
    layer_sizes: tuple = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpecError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.layer_sizes is None:
            object.__setattr__(self, "layer_sizes", DEFAULT_LAYER_SIZES[self.family])
        object.__setattr__(self, "layer_sizes", tuple(int(v) for v in self.layer_sizes))
        if any(v < 1 for v in self.layer_sizes):
            raise SpecError(f"layer sizes must be positive: {self.layer_sizes}")
        if self.family in SPAN_FAMILIES:
            if self.span_length is None or self.span_length < 1:
                raise SpecError(f"{self.family} needs a positive span_length")
        elif self.span_length is not None:
            raise SpecError(f"{self.family} takes a single spot, not a span")
        expected_len = {"snn": 3, "snn_pnl": 3, "rnn": 3, "tcn": 2, "attention": 1, "span_mlp": 2}
        if len(self.layer_sizes) != expected_len[self.family]:
            raise SpecError(f"{self.family} expects {expected_len[self.family]} layer sizes, "
                            f"got {self.layer_sizes}")
        if self.family in ("snn", "snn_pnl") and (self.layer_sizes[0], self.layer_sizes[2]) != (1, 1):
            raise SpecError(f"{self.family} maps one spot to one delta: {self.layer_sizes}")

    def tensor_shapes(self):
        """[(name, shape, fan_in)] in initialisation order."""
        f, ls, sl = self.family, self.layer_sizes, self.span_length
        if f in ("snn", "snn_pnl"):
            return _affine_shapes("fc1", 1, ls[1]) + _affine_shapes("fc2", ls[1], 1)
        if f == "rnn":
            shapes, n_in = [], 1
            for i, h in enumerate(ls):
                shapes += [(f"rnn{i}.W_xh", (h, n_in), n_in), (f"rnn{i}.W_hh", (h, h), h),
                           (f"rnn{i}.b_h", (h,), h)]
                n_in = h
            return shapes + _affine_shapes("head", n_in, 1)
        if f == "tcn":
            k, hidden = ls
            shapes = []
            for i in range(len(TCN_DILATIONS)):
                shapes += [(f"conv{i}.kernel", (k,), k), (f"conv{i}.bias", (1,), k)]
            return shapes + _affine_shapes("fc1", sl, hidden) + _affine_shapes("fc2", hidden, 1)
        if f == "attention":
            d = ls[0]
            return (_affine_shapes("query", sl, d) + _affine_shapes("value", sl, d)
                    + _affine_shapes("out", d, 1))
        a, b = ls
        return (_affine_shapes("fc1", sl, a) + _affine_shapes("fc2", a, b)
                + _affine_shapes("fc3", b, 1))

    @property
    def param_count(self):
        return sum(math.prod(shape) for _, shape, _ in self.tensor_shapes())

    def to_dict(self):
        return {"family": self.family, "span_length": self.span_length,
                "layer_sizes": list(self.layer_sizes), "param_count": self.param_count}


def check_param_count(spec):
    """Raise SpecError if a default-layout family misses its stated size.

    Span families are judged at span length 3, the layout the stated counts
    describe. Returns (achieved, stated, exact).
    """
    stated, exact = TARGET_PARAM_COUNTS[spec.family]
    probe = spec
    if spec.family in SPAN_FAMILIES and spec.span_length != 3:
        probe = ArchSpec(spec.family, 3, spec.layer_sizes)
    achieved = probe.param_count
    if exact and achieved != stated:
        raise SpecError(f"{spec.family}: {achieved} parameters, expected exactly {stated}")
    if not exact and abs(achieved - stated) > TARGET_TOLERANCE * stated:
        raise SpecError(f"{spec.family}: {achieved} parameters, more than "
                        f"{TARGET_TOLERANCE:.0%} away from {stated}")
    return achieved, stated, exact


@dataclass(eq=False)
class ModelParams:
    spec: ArchSpec
    tensors: dict
    init_seed: int = 0
    normalization: dict = field(default_factory=lambda: dict(NORMALIZATION))

    @property
    def family(self):
        return self.spec.family

    @property
    def param_count(self):
        return sum(t.size for t in self.tensors.values())

    def parameters(self):
        return list(self.tensors.values())

    def __getitem__(self, name):
        return self.tensors[name]

    def copy(self):
        return ModelParams(self.spec, {k: ad.Tensor(v.data.copy(), requires_grad=True)
                                       for k, v in self.tensors.items()},
                           self.init_seed, dict(self.normalization))

    def flat(self):
        return np.concatenate([t.data.reshape(-1) for t in self.tensors.values()])


def build(spec: ArchSpec, init_seed: int = 0, check_counts: bool = True) -> ModelParams:
    if check_counts and spec.layer_sizes == DEFAULT_LAYER_SIZES[spec.family]:
        check_param_count(spec)
    rng = np.random.default_rng(init_seed)
    tensors = {}
    for name, shape, fan_in in spec.tensor_shapes():
        bound = math.sqrt(1.0 / fan_in)
        tensors[name] = ad.Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)
    if sum(t.size for t in tensors.values()) != spec.param_count:
        raise SpecError("parameter bookkeeping mismatch")
    return ModelParams(spec, tensors, init_seed)


# ---- forward passes -------------------------------------------------------

def positional_encoding(span_length):
    return np.arange(1, span_length + 1, dtype=np.float64)


def _as_batch(x, width):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == (0 if width == 1 else 1)
    x2 = x.reshape(-1, width) if width == 1 else np.atleast_2d(x)
    if x2.shape[-1] != width:
        raise ad.ShapeError(f"expected input width {width}, got shape {x.shape}")
    return x2, single


def _finish(logit, single):
    out = ad.reshape(ad.sigmoid(logit), (logit.shape[0],))
    return ad.reshape(out, ()) if single else out


def forward_snn(params, spot):
    if params.family not in ("snn", "snn_pnl"):
        raise ad.ShapeError(f"forward_snn called with a {params.family} model")
    x, single = _as_batch(spot, 1)
    p = params.tensors
    h = ad.gelu(ad.affine(x, p["fc1.weight"], p["fc1.bias"]))
    return _finish(ad.affine(h, p["fc2.weight"], p["fc2.bias"]), single)


def _span_input(params, span, family):
    if params.family != family:
        raise ad.ShapeError(f"forward_{family} called with a {params.family} model")
    return _as_batch(span, params.spec.span_length)


def forward_rnn(params, span):
    x, single = _span_input(params, span, "rnn")
    p = params.tensors
    n_layers = len(params.spec.layer_sizes)
    B, T = x.shape
    hidden = [np.zeros((B, h)) for h in params.spec.layer_sizes]
    for t in range(T):
        inp = x[:, t:t + 1]
        for layer in range(n_layers):
            hidden[layer] = ad.recurrent_cell(inp, hidden[layer], p[f"rnn{layer}.W_xh"],
                                              p[f"rnn{layer}.W_hh"], p[f"rnn{layer}.b_h"])
            inp = hidden[layer]
    return _finish(ad.affine(hidden[-1], p["head.weight"], p["head.bias"]), single)


def forward_tcn(params, span):
    x, single = _span_input(params, span, "tcn")
    p = params.tensors
    z = ad.Tensor(x)
    for i, d in enumerate(TCN_DILATIONS):
        conv = ad.dilated_conv1d(z, p[f"conv{i}.kernel"], d) + p[f"conv{i}.bias"]
        z = z + ad.gelu(conv)
    h = ad.gelu(ad.affine(z, p["fc1.weight"], p["fc1.bias"]))
    return _finish(ad.affine(h, p["fc2.weight"], p["fc2.bias"]), single)


def attention_parts(params, span):
    """Return (z, query, value, single) for a batch of spans."""
    x, single = _span_input(params, span, "attention")
    p = params.tensors
    z = x + positional_encoding(params.spec.span_length)
    query = ad.softmax(ad.affine(z, p["query.weight"], p["query.bias"]))
    value = ad.affine(z, p["value.weight"], p["value.bias"])
    return z, query, value, single


def forward_attention(params, span):
    _, query, value, single = attention_parts(params, span)
    p = params.tensors
    return _finish(ad.affine(query * value, p["out.weight"], p["out.bias"]), single)


def forward_span_mlp(params, span, use_posenc=True):
    x, single = _span_input(params, span, "span_mlp")
    p = params.tensors
    z = x + positional_encoding(params.spec.span_length) if use_posenc else x
    h = ad.gelu(ad.affine(z, p["fc1.weight"], p["fc1.bias"]))
    h = ad.gelu(ad.affine(h, p["fc2.weight"], p["fc2.bias"]))
    return _finish(ad.affine(h, p["fc3.weight"], p["fc3.bias"]), single)


_FORWARD = {
    "snn": forward_snn,
    "snn_pnl": forward_snn,
    "rnn": forward_rnn,
    "tcn": forward_tcn,
    "attention": forward_attention,
    "span_mlp": forward_span_mlp,
}


def forward(params, x):
    return _FORWARD[params.family](params, x)


def normalize(prices, strike):
    """Model input for raw prices; used identically in training and inference."""
    prices = np.asarray(prices, dtype=np.float64)
    strike = np.asarray(strike, dtype=np.float64)
    if prices.ndim == 2 and strike.ndim == 1:
        strike = strike[:, None]
    return prices / strike - 1.0


def predict_delta(params, prices, strike):
    """Deltas as a numpy array from raw prices (spots or spans)."""
    return np.array(forward(params, normalize(prices, strike)).data)


# ---- checkpoints ----------------------------------------------------------

def _digest(tensors_json):
    blob = json.dumps(tensors_json, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def save(params: ModelParams, path):
    """Write a JSON checkpoint. Floats use shortest round-trip repr, so load is bit-exact."""
    tensors = {name: {"shape": list(t.shape), "data": [float(v) for v in t.data.reshape(-1)]}
               for name, t in params.tensors.items()}
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": params.spec.to_dict(),
        "init_seed": params.init_seed,
        "normalization": params.normalization,
        "tensors": tensors,
        "sha256": _digest(tensors),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return path


def load(path, family=None) -> ModelParams:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"checkpoint is not valid JSON: {exc}") from None
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise IntegrityError(f"format: expected {CHECKPOINT_FORMAT!r}, got {doc.get('format')!r}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise IntegrityError(f"version: unsupported {doc.get('version')!r}")
    arch = doc.get("arch", {})
    if family is not None and arch.get("family") != family:
        raise IntegrityError(f"arch.family: expected {family!r}, got {arch.get('family')!r}")
    try:
        spec = ArchSpec(arch["family"], arch.get("span_length"), tuple(arch["layer_sizes"]))
    except (KeyError, SpecError) as exc:
        raise IntegrityError(f"arch: {exc}") from None
    if arch.get("param_count") != spec.param_count:
        raise IntegrityError(f"arch.param_count: recorded {arch.get('param_count')}, "
                             f"layout implies {spec.param_count}")
    raw = doc.get("tensors", {})
    if _digest(raw) != doc.get("sha256"):
        raise IntegrityError("sha256: tensor payload does not match its digest")
    tensors = {}
    for name, shape, _ in spec.tensor_shapes():
        if name not in raw:
            raise IntegrityError(f"tensors.{name}: missing")
        data = np.array(raw[name]["data"], dtype=np.float64)
        if list(shape) != raw[name]["shape"] or data.size != math.prod(shape):
            raise IntegrityError(f"tensors.{name}: shape {raw[name]['shape']} != {list(shape)}")
        if not np.all(np.isfinite(data)):
            raise IntegrityError(f"tensors.{name}: non-finite values")
        tensors[name] = ad.Tensor(data.reshape(shape), requires_grad=True)
    extra = set(raw) - set(tensors)
    if extra:
        raise IntegrityError(f"tensors: unexpected entries {sorted(extra)}")
    return ModelParams(spec, tensors, doc.get("init_seed", 0),
                       doc.get("normalization", dict(NORMALIZATION)))
