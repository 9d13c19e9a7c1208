"""Losses, AdamW, and the epoch loops (plain and pretrain -> fine-tune)."""
import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .market import SpanDataset, TerminalDataset
from .models import forward, normalize

LOSSES = ("delta_mse", "pnl", "pnl_with_cost")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    epochs: int = 15
    lr: float = 0.001
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0
    loss: str = "delta_mse"
    transaction_cost: float = 5.0

    def problems(self):
        out = []
        if self.batch_size < 1:
            out.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            out.append(f"epochs must be >= 0, got {self.epochs}")
        if not self.lr > 0:
            out.append(f"lr must be positive, got {self.lr}")
        if not all(0 <= b < 1 for b in self.betas) or len(self.betas) != 2:
            out.append(f"betas must be two values in [0, 1), got {self.betas}")
        if self.weight_decay < 0 or self.eps <= 0:
            out.append("weight_decay must be >= 0 and eps > 0")
        if self.loss not in LOSSES:
            out.append(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.transaction_cost < 0:
            out.append(f"transaction_cost must be >= 0, got {self.transaction_cost}")
        return out

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return TrainConfig(**values)

    @property
    def cost(self):
        return self.transaction_cost if self.loss == "pnl_with_cost" else 0.0


@dataclass(frozen=True)
class HedgeData:
    """Training arrays: normalised model input ``x`` plus PnL terms and delta labels."""
    x: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    premium: np.ndarray
    strike: np.ndarray
    label: np.ndarray

    def __len__(self):
        return len(self.s0)

    def subset(self, idx):
        return HedgeData(*(a[idx] for a in (self.x, self.s0, self.s1, self.premium,
                                               self.strike, self.label)))

    @classmethod
    def from_dataset(cls, ds, market):
        if isinstance(ds, TerminalDataset):
            x = normalize(ds.s0, ds.strike)
            s0, s1 = ds.s0, ds.s_T
        elif isinstance(ds, SpanDataset):
            x = normalize(ds.spans, ds.strike)
            s0, s1 = ds.s0, ds.s_next
        else:
            raise TypeError(f"unsupported dataset {type(ds).__name__}")
        label = np.asarray(ds.delta_labels(market), dtype=np.float64)
        return cls(np.array(x), np.array(s0), np.array(s1), np.array(ds.premium),
                   np.array(ds.strike), label)


# ---- losses ---------------------------------------------------------------

def pnl_values(delta, s0, s1, premium, strike, cost=0.0):
    """Per-sample hedge PnL, delta*(s1 - s0 - cost) + premium - (s1 - strike)^+."""
    return delta * (s1 - s0 - cost) + premium - np.maximum(s1 - strike, 0.0)


def loss_delta_mse(pred, label):
    return ad.mean(ad.square(pred - np.asarray(label, dtype=np.float64)))


def loss_pnl(delta, s0, s1, premium, strike, cost=0.0):
    """Mean squared PnL over the batch (a plain mean is unbounded below)."""
    move = np.asarray(s1 - s0 - cost, dtype=np.float64)
    rest = np.asarray(premium - np.maximum(s1 - strike, 0.0), dtype=np.float64)
    return ad.mean(ad.square(delta * move + rest))


def batch_loss(params, data, loss, cost):
    pred = forward(params, data.x)
    if loss == "delta_mse":
        return loss_delta_mse(pred, data.label)
    return loss_pnl(pred, data.s0, data.s1, data.premium, data.strike, cost)


# ---- optimiser ------------------------------------------------------------

@dataclass
class AdamWState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params, state, config):
    """One decoupled-weight-decay Adam update, in place, from each tensor's ``.grad``."""
    b1, b2 = config.betas
    for name, t in params.tensors.items():
        if not np.all(np.isfinite(t.grad)):
            raise TrainingError(f"non-finite gradient in tensor {name!r}")
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, t in params.tensors.items():
        g = t.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        t.data *= 1.0 - config.lr * config.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data -= config.lr * (m / c1) / (np.sqrt(v / c2) + config.eps)


# ---- loops ----------------------------------------------------------------

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    phase: str
    running_loss: float
    seconds: float = field(default=0.0, compare=False)


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)
    params: object = field(default=None, compare=False, repr=False)

    def __len__(self):
        return len(self.records)

    @property
    def losses(self):
        return [r.running_loss for r in self.records]

    def phase(self, name):
        return [r for r in self.records if r.phase == name]

    def to_csv(self, path, include_timing=True, meta=None):
        with open(path, "w", newline="") as fh:
            if meta:
                fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            w = csv.writer(fh)
            w.writerow(["epoch", "phase", "running_loss", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, r.phase, repr(r.running_loss),
                            repr(r.seconds) if include_timing else ""])


def _run_epochs(params, data, config, loss, n_epochs, first_epoch, phase, state, trace):
    n = len(data)
    if n == 0:
        raise TrainingError("empty dataset")
    cost = config.transaction_cost if loss == "pnl_with_cost" else 0.0
    tensors = params.parameters()
    for epoch in range(first_epoch, first_epoch + n_epochs):
        start = time.perf_counter()
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            batch = data.subset(order[lo:lo + config.batch_size])
            ad.zero_grad(tensors)
            value = batch_loss(params, batch, loss, cost)
            if not np.isfinite(value.data):
                raise TrainingError(f"non-finite {loss} loss in epoch {epoch}")
            ad.backward(value)
            adamw_step(params, state, config)
            total += float(value.data) * len(batch)
        trace.records.append(EpochRecord(epoch, phase, total / n, time.perf_counter() - start))
    trace.params = params
    return trace


def train(params, data, config, state=None):
    """Train in place with ``config.loss``; returns the per-epoch trace.

    Each epoch reshuffles with a generator seeded by (config.seed, epoch);
    the last partial batch is kept.
    """
    state = AdamWState() if state is None else state
    return _run_epochs(params, data, config, config.loss, config.epochs, 1,
                       config.loss, state, TrainTrace(params=params))


def pretrain_finetune(params, data, pre_epochs, fine_epochs, config):
    """Delta-label pretraining, then PnL fine-tuning, with one optimiser throughout.

    The fine-tune phase uses ``config.loss`` when it is a PnL loss, plain
    ``pnl`` otherwise. Epoch numbers run on across the phase boundary.
    """
    if pre_epochs < 0 or fine_epochs < 0:
        raise ValueError("epoch counts must be non-negative")
    fine_loss = config.loss if config.loss != "delta_mse" else "pnl"
    state = AdamWState()
    trace = TrainTrace(params=params)
    _run_epochs(params, data, config, "delta_mse", pre_epochs, 1, "pretrain", state, trace)
    _run_epochs(params, data, config, fine_loss, fine_epochs, pre_epochs + 1, "finetune",
                state, trace)
    return trace


def epochs_to_reach(losses, target):
    """1-based index of the first loss <= target, or None."""
    for i, value in enumerate(losses, start=1):
        if value <= target:
            return i
    return None
