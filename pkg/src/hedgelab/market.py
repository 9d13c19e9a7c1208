"""GBM stock paths and the hedging datasets built from them."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .analytics import TRADING_DAYS, call_delta, call_price

STANDARD_SPAN_LENGTHS = (3, 5, 7)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MarketConfig:
    s0: float = 100.0
    strike: float = 100.0
    rate: float = 0.02
    vol: float = 0.2
    horizon_days: int = 22
    n_paths: int = 100_000
    seed: int = 0

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ConfigError("; ".join(errors))

    def problems(self):
        out = []
        if not self.s0 > 0:
            out.append(f"s0 must be positive, got {self.s0}")
        if not self.strike > 0:
            out.append(f"strike must be positive, got {self.strike}")
        if not self.vol >= 0:
            out.append(f"vol must be non-negative, got {self.vol}")
        if int(self.horizon_days) != self.horizon_days or self.horizon_days < 1:
            out.append(f"horizon_days must be an integer >= 1, got {self.horizon_days}")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            out.append(f"n_paths must be an integer >= 1, got {self.n_paths}")
        if not math.isfinite(self.rate):
            out.append(f"rate must be finite, got {self.rate}")
        return out

    @property
    def dt(self):
        return 1.0 / TRADING_DAYS

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return MarketConfig(**values)


@dataclass(frozen=True, eq=False)
class PathSet:
    prices: np.ndarray
    config: MarketConfig = field(repr=False)

    def __post_init__(self):
        self.prices.setflags(write=False)

    @property
    def n_paths(self):
        return self.prices.shape[0]

    @property
    def horizon_days(self):
        return self.prices.shape[1] - 1

    def __eq__(self, other):
        return (isinstance(other, PathSet) and self.config == other.config
                and np.array_equal(self.prices, other.prices))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(range(self.horizon_days + 1))
            for row in self.prices:
                w.writerow(repr(float(v)) for v in row)

    @classmethod
    def from_csv(cls, path, config):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        prices = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
        if prices.shape != (config.n_paths, config.horizon_days + 1) or len(header) != prices.shape[1]:
            raise ConfigError(f"CSV shape {prices.shape} does not match config "
                              f"({config.n_paths}, {config.horizon_days + 1})")
        return cls(prices, config)


def simulate_paths(config: MarketConfig) -> PathSet:
    """Daily GBM paths, S_{t+1} = S_t exp((r - vol^2/2) dt + vol sqrt(dt) Z).

    Path ``p`` draws its normals from a counter-based stream keyed on
    ``(config.seed, p)``, so any subset of paths can be regenerated alone.
    """
    dt = config.dt
    drift = (config.rate - 0.5 * config.vol ** 2) * dt
    diffusion = config.vol * math.sqrt(dt)
    prices = kernels.gbm_paths(config.seed, config.n_paths, config.horizon_days,
                               config.s0, drift, diffusion)
    return PathSet(prices, config)


@dataclass(frozen=True)
class TerminalDataset:
    """One-period hedge samples: decide at ``s0``, settle at ``s_T``."""
    s0: np.ndarray
    s_T: np.ndarray
    premium: np.ndarray
    strike: np.ndarray
    tau: float

    def __len__(self):
        return len(self.s0)

    def rows(self):
        return list(zip(self.s0.tolist(), self.s_T.tolist(),
                        self.premium.tolist(), self.strike.tolist()))

    def delta_labels(self, config):
        return call_delta(self.s0, self.strike, config.rate, config.vol, self.tau)

    def subset(self, idx):
        return TerminalDataset(self.s0[idx], self.s_T[idx], self.premium[idx],
                               self.strike[idx], self.tau)


def build_terminal_dataset(paths: PathSet, start_day: int = 0) -> TerminalDataset:
    """One sample per path, hedged from ``start_day`` to expiry.

    With the default ``start_day=0`` every sample starts at the configured
    spot and the premium is the full-horizon price. A later start day gives
    decision spots spread across the GBM cloud, which the spot-input
    networks need to learn a delta curve.
    """
    cfg = paths.config
    if paths.n_paths < 1:
        raise ConfigError("empty PathSet")
    if not 0 <= start_day < paths.horizon_days:
        raise ConfigError(f"start_day must lie in [0, {paths.horizon_days}), got {start_day}")
    s0 = np.array(paths.prices[:, start_day])
    s_T = np.array(paths.prices[:, -1])
    tau = (paths.horizon_days - start_day) * cfg.dt
    premium = call_price(s0, cfg.strike, cfg.rate, cfg.vol, tau)
    strike = np.full_like(s0, cfg.strike)
    return TerminalDataset(s0, s_T, np.asarray(premium, dtype=float), strike, tau)


@dataclass(frozen=True)
class SpanSample:
    span: tuple
    s_next: float
    premium: float
    strike: float


@dataclass(frozen=True)
class SpanDataset:
    """Columnar storage of SpanSamples; ``spans[:, -1]`` is the decision price."""
    spans: np.ndarray
    s_next: np.ndarray
    premium: np.ndarray
    strike: np.ndarray
    tau: float

    def __len__(self):
        return len(self.s_next)

    @property
    def span_length(self):
        return self.spans.shape[1]

    @property
    def s0(self):
        return self.spans[:, -1]

    def __getitem__(self, i):
        return SpanSample(tuple(self.spans[i].tolist()), float(self.s_next[i]),
                          float(self.premium[i]), float(self.strike[i]))

    def samples(self):
        return [self[i] for i in range(len(self))]

    def delta_labels(self, config):
        return call_delta(self.s0, self.strike, config.rate, config.vol, self.tau)


def build_span_dataset(paths: PathSet, span_length: int) -> SpanDataset:
    """Trailing window ending at day T-1, settled one day later at expiry."""
    cfg = paths.config
    T = paths.horizon_days
    if span_length < 1:
        raise ConfigError(f"span_length must be >= 1, got {span_length}")
    if span_length > T:
        raise ConfigError(f"span_length {span_length} exceeds horizon_days {T}")
    spans = np.array(paths.prices[:, T - span_length:T])
    s_next = np.array(paths.prices[:, T])
    tau = cfg.dt
    premium = np.asarray(call_price(spans[:, -1], cfg.strike, cfg.rate, cfg.vol, tau), dtype=float)
    strike = np.full_like(s_next, cfg.strike)
    return SpanDataset(spans, s_next, premium, strike, tau)
