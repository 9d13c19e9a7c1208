"""Experiment runner: resolves a config, runs every cell, writes CSV artifacts.

Output layout under ``out_dir``::

    config.json                   resolved configuration
    <experiment-specific CSVs>    traces, reports, histograms, curves
    cells/<family>_sl<span>_seed<seed>/...
    index.json                    written last; lists every artifact

Every CSV starts with one ``# key=value ...`` metadata line. Nothing in the
outputs depends on wall-clock time unless ``record_timing`` is set, so a
rerun with the same config reproduces the files byte for byte.
"""
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .analysis import criticality, max_position, write_criticality
from .analytics import call_delta
from .market import (STANDARD_SPAN_LENGTHS, ConfigError, MarketConfig, build_span_dataset,
                     build_terminal_dataset, simulate_paths)
from .models import SPAN_FAMILIES, ArchSpec, build, predict_delta, save
from .risk import average_reports, evaluate, model_pnl, write_reports
from .training import (TrainConfig, HedgeData, epochs_to_reach, pretrain_finetune, train)

EXPERIMENTS = ("approx_delta", "approx_pnl", "pretrain_compare", "data_poor", "span_models",
               "table3", "criticality")
DEFAULT_TRAIN = TrainConfig()
HIST_BINS = 50
OUT_ENV = "HEDGELAB_OUT"

_DEFAULT_FAMILIES = {
    "approx_delta": ["snn"],
    "approx_pnl": ["snn_pnl"],
    "pretrain_compare": ["snn_pnl"],
    "data_poor": ["snn"],
    "span_models": list(SPAN_FAMILIES),
    "table3": list(SPAN_FAMILIES),
    "criticality": ["attention"],
}


def default_out_root():
    return os.environ.get(OUT_ENV, "runs")


@dataclass
class ExperimentConfig:
    experiment: str
    market: MarketConfig = field(default_factory=MarketConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    families: list = None
    span_lengths: list = field(default_factory=lambda: list(STANDARD_SPAN_LENGTHS))
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = None
    lam: float = 1.0
    eval_seed_offset: int = 1_000_003
    pretrain_epochs: int = 5
    finetune_epochs: int = 8
    data_poor_samples: int = 100
    data_poor_batch: int = 10
    data_poor_epochs: int = 20
    record_timing: bool = False

    def __post_init__(self):
        if self.families is None:
            self.families = list(_DEFAULT_FAMILIES.get(self.experiment, []))
        if self.out_dir is None:
            self.out_dir = str(Path(default_out_root()) / self.experiment)

    def to_dict(self):
        d = asdict(self)
        d["train"]["betas"] = list(d["train"]["betas"])
        return d

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        if "experiment" not in raw:
            raise ConfigError("config needs an 'experiment' entry")
        market = MarketConfig(**raw.pop("market", {}))
        tr = dict(raw.pop("train", {}))
        if "betas" in tr:
            tr["betas"] = tuple(tr["betas"])
        train_cfg = TrainConfig(**tr)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(market=market, train=train_cfg, **raw)
        errors = validate(cfg)[1]
        if errors:
            raise ConfigError("; ".join(errors))
        return cfg


def validate(config):
    """Return (warnings, errors); never raises on a bad config.

    Accepts an ExperimentConfig or the raw mapping read from a config file.
    """
    warnings, errors = [], []
    if isinstance(config, dict):
        raw = dict(config)
        try:
            market = MarketConfig(**raw.pop("market", {}))
        except (ConfigError, TypeError) as exc:
            errors.append(f"market: {exc}")
            market = None
        tr = dict(raw.pop("train", {}))
        if "betas" in tr:
            tr["betas"] = tuple(tr["betas"])
        try:
            train_cfg = TrainConfig(**tr)
        except TypeError as exc:
            errors.append(f"train: {exc}")
            train_cfg = None
        try:
            config = ExperimentConfig(market=market or MarketConfig(),
                                      train=train_cfg or TrainConfig(), **raw)
        except TypeError as exc:
            errors.append(str(exc))
            return warnings, errors
    cfg = config
    if cfg.experiment not in EXPERIMENTS:
        errors.append(f"experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    errors += [f"market: {p}" for p in cfg.market.problems()]
    errors += [f"train: {p}" for p in cfg.train.problems()]
    if not cfg.seeds:
        errors.append("seeds must be non-empty")
    if not cfg.families:
        errors.append("families must be non-empty")
    for fam in cfg.families or []:
        if fam not in ("snn", "snn_pnl") + SPAN_FAMILIES:
            errors.append(f"unknown family {fam!r}")
    if not cfg.lam > 0:
        errors.append(f"lam must be positive, got {cfg.lam}")
    if cfg.experiment in ("span_models", "table3", "criticality"):
        if not cfg.span_lengths:
            errors.append("span_lengths must be non-empty")
        for sl in cfg.span_lengths:
            if sl < 1 or sl > cfg.market.horizon_days:
                errors.append(f"span length {sl} must lie in [1, horizon_days]")
            elif sl not in STANDARD_SPAN_LENGTHS:
                warnings.append(f"span length {sl} is outside the standard set "
                                f"{STANDARD_SPAN_LENGTHS}")
    if cfg.train.epochs != DEFAULT_TRAIN.epochs:
        warnings.append(f"epochs={cfg.train.epochs} differs from the default {DEFAULT_TRAIN.epochs}")
    if cfg.data_poor_samples < 1 or cfg.data_poor_batch < 1:
        errors.append("data_poor_samples and data_poor_batch must be >= 1")
    return warnings, errors


# ---- helpers ----------------------------------------------------------------

class Run:
    def __init__(self, cfg):
        self.cfg = cfg
        self.root = Path(cfg.out_dir)
        self.files = []

    def path(self, *parts):
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(str(p.relative_to(self.root)))
        return p

    def meta(self, **extra):
        m = {"hedgelab": __version__, "experiment": self.cfg.experiment,
             "market_seed": self.cfg.market.seed, "backend": kernels.BACKEND,
             "rng": kernels.RNG_NAME}
        m.update(extra)
        return m

    def write_csv(self, name, header, rows, **meta):
        import csv
        with open(self.path(*name.split("/")), "w", newline="") as fh:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in self.meta(**meta).items()) + "\n")
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    def finish(self):
        idx = self.root / "index.json"
        with open(idx, "w") as fh:
            json.dump({"experiment": self.cfg.experiment, "hedgelab": __version__,
                       "files": sorted(set(self.files))}, fh, indent=1)
            fh.write("\n")


def _fmt(v):
    return repr(float(v))


def histogram_rows(values, bins=HIST_BINS):
    counts, edges = np.histogram(values, bins=bins, range=(float(np.min(values)), float(np.max(values))))
    return [[_fmt(edges[i]), _fmt(edges[i + 1]), int(c)] for i, c in enumerate(counts)]


def terminal_data(market, n_paths=None, seed=None):
    """Single-spot hedge samples: a warm-up leg of ``horizon_days`` spreads the
    decision spot, then a one-period hedge over the next ``horizon_days``."""
    h = market.horizon_days
    m = market.replace(horizon_days=2 * h, n_paths=n_paths or market.n_paths,
                       seed=market.seed if seed is None else seed)
    return HedgeData.from_dataset(build_terminal_dataset(simulate_paths(m), start_day=h), m)


def delta_curve_rows(params, market, n=81):
    spots = np.linspace(0.8 * market.strike, 1.2 * market.strike, n)
    tau = market.horizon_days * market.dt
    model = predict_delta(params, spots, market.strike)
    bs = call_delta(spots, market.strike, market.rate, market.vol, tau)
    return [[_fmt(s), _fmt(m), _fmt(b)] for s, m, b in zip(spots, model, bs)]


def _trace_rows(trace, cfg):
    return [[r.epoch, r.phase, _fmt(r.running_loss), _fmt(r.seconds) if cfg.record_timing else ""]
            for r in trace.records]


TRACE_HEADER = ["epoch", "phase", "running_loss", "seconds"]
CURVE_HEADER = ["spot", "model_delta", "bs_delta"]
HIST_HEADER = ["bin_left", "bin_right", "count"]


# ---- experiments ------------------------------------------------------------

def _single_spot(run, loss, schedule):
    cfg = run.cfg
    data = terminal_data(cfg.market)
    summary = []
    for fam in cfg.families:
        for seed in cfg.seeds:
            params = build(ArchSpec(fam), seed)
            tcfg = cfg.train.replace(seed=seed, loss=loss)
            if schedule == "pretrain":
                trace = pretrain_finetune(params, data, cfg.pretrain_epochs, cfg.finetune_epochs, tcfg)
                tag = f"{fam}_pretrained_seed{seed}"
            else:
                trace = train(params, data, tcfg)
                tag = f"{fam}_seed{seed}"
            meta = dict(seed=seed, family=fam, params=params.param_count)
            run.write_csv(f"traces/{tag}.csv", TRACE_HEADER, _trace_rows(trace, cfg), **meta)
            run.write_csv(f"delta_curves/{tag}.csv", CURVE_HEADER,
                          delta_curve_rows(params, cfg.market), **meta)
            save(params, run.path("checkpoints", f"{tag}.json"))
            summary.append([tag, params.param_count, len(trace), _fmt(trace.losses[-1])])
    return summary


def run_approx_delta(run):
    return _single_spot(run, "delta_mse", "plain")


def run_approx_pnl(run):
    return _single_spot(run, "pnl", "plain")


def run_pretrain_compare(run):
    return _single_spot(run, "pnl", "plain") + _single_spot(run, "pnl", "pretrain")


def data_poor_cell(market, seed, fam="snn", samples=100, batch=10, epochs=20, train_cfg=DEFAULT_TRAIN):
    """PnL-only vs pretrain+fine-tune on a tiny dataset.

    Returns (pnl_trace, pretrained_trace, epochs_needed) where epochs_needed
    counts pretraining plus the fine-tune epochs the pretrained model needs to
    reach the PnL-only model's final running loss (None if it never does).
    """
    data = terminal_data(market, n_paths=samples, seed=market.seed + seed)
    tcfg = train_cfg.replace(seed=seed, loss="pnl", epochs=epochs, batch_size=batch)
    pnl_trace = train(build(ArchSpec(fam), seed), data, tcfg)
    pre = epochs // 2
    pre_trace = pretrain_finetune(build(ArchSpec(fam), seed), data, pre, epochs - pre, tcfg)
    k = epochs_to_reach([r.running_loss for r in pre_trace.phase("finetune")], pnl_trace.losses[-1])
    return pnl_trace, pre_trace, None if k is None else pre + k


def run_data_poor(run):
    cfg = run.cfg
    summary = []
    for fam in cfg.families:
        for seed in cfg.seeds:
            a, b, needed = data_poor_cell(cfg.market, seed, fam, cfg.data_poor_samples,
                                          cfg.data_poor_batch, cfg.data_poor_epochs, cfg.train)
            meta = dict(seed=seed, family=fam, samples=cfg.data_poor_samples,
                        batch=cfg.data_poor_batch)
            run.write_csv(f"traces/{fam}_pnl_only_seed{seed}.csv", TRACE_HEADER, _trace_rows(a, cfg), **meta)
            run.write_csv(f"traces/{fam}_pretrained_seed{seed}.csv", TRACE_HEADER, _trace_rows(b, cfg), **meta)
            faster = needed is not None and needed < cfg.data_poor_epochs
            summary.append([fam, seed, _fmt(a.losses[-1]), "" if needed is None else needed,
                            int(faster)])
    run.write_csv("data_poor_summary.csv",
                  ["family", "seed", "pnl_only_final_loss", "pretrained_epochs_to_match", "faster"],
                  summary)
    return summary


def span_cell(cfg, fam, sl, seed, train_paths, test_paths):
    """Train one (family, span, seed) model; returns (params, trace, report, pnl)."""
    tr = HedgeData.from_dataset(build_span_dataset(train_paths, sl), train_paths.config)
    te = HedgeData.from_dataset(build_span_dataset(test_paths, sl), test_paths.config)
    params = build(ArchSpec(fam, sl), seed)
    tcfg = cfg.train.replace(seed=seed, loss="pnl_with_cost")
    trace = train(params, tr, tcfg)
    report = evaluate(params, te, cfg.lam, tcfg.transaction_cost)
    pnl = model_pnl(params, te, tcfg.transaction_cost)
    return params, trace, report, pnl, te


def market_pair(cfg):
    train_paths = simulate_paths(cfg.market)
    test_paths = simulate_paths(cfg.market.replace(seed=cfg.market.seed + cfg.eval_seed_offset))
    return train_paths, test_paths


def run_span_models(run, write_table=False):
    cfg = run.cfg
    train_paths, test_paths = market_pair(cfg)
    rows, averaged, results = [], [], {}
    for fam in cfg.families:
        for sl in cfg.span_lengths:
            reps = []
            for seed in cfg.seeds:
                params, trace, report, pnl, _ = span_cell(cfg, fam, sl, seed, train_paths, test_paths)
                cell = f"cells/{fam}_sl{sl}_seed{seed}"
                meta = dict(seed=seed, family=fam, span=sl, params=params.param_count, lam=cfg.lam)
                run.write_csv(f"{cell}/trace.csv", TRACE_HEADER, _trace_rows(trace, cfg), **meta)
                run.write_csv(f"{cell}/pnl_hist.csv", HIST_HEADER, histogram_rows(pnl), **meta)
                write_reports(run.path(*f"{cell}/report.csv".split("/")),
                              [(fam, sl, seed, report)], run.meta(**meta))
                save(params, run.path(*f"{cell}/checkpoint.json".split("/")))
                rows.append((fam, sl, seed, report))
                reps.append(report)
            avg = average_reports(reps)
            averaged.append((fam, sl, "avg", avg))
            results[(fam, sl)] = avg
    if write_table:
        write_reports(run.path("table3.csv"), averaged + rows,
                      run.meta(seeds="/".join(map(str, cfg.seeds)), lam=cfg.lam,
                               params=_param_summary(cfg)))
    return results


def _param_summary(cfg):
    return ",".join(f"{f}:{build(ArchSpec(f, 3), 0).param_count}" for f in cfg.families
                    if f in SPAN_FAMILIES)


def run_table3(run):
    return run_span_models(run, write_table=True)


def run_criticality(run):
    cfg = run.cfg
    train_paths, test_paths = market_pair(cfg)
    out = []
    for sl in cfg.span_lengths:
        rows = []
        for seed in cfg.seeds:
            params, _, _, _, te = span_cell(cfg, "attention", sl, seed, train_paths, test_paths)
            row = criticality(params, te.x)
            rows.append((seed, row))
            out.append((sl, seed, row, max_position(row)))
        mean_w = np.mean([r.weights for _, r in rows], axis=0)
        from .analysis import CriticalityRow
        rows.append(("avg", CriticalityRow(sl, tuple(float(v) for v in mean_w / mean_w.sum()))))
        write_criticality(run.path(f"criticality_sl{sl}.csv"), rows,
                          run.meta(span=sl, params=ArchSpec("attention", sl).param_count))
    run.write_csv("criticality_argmax.csv", ["span_length", "seed", "argmax", "argmax_is_last"],
                  [[sl, seed, m, int(m == sl - 1)] for sl, seed, _, m in out])
    return out


RUNNERS = {
    "approx_delta": run_approx_delta,
    "approx_pnl": run_approx_pnl,
    "pretrain_compare": run_pretrain_compare,
    "data_poor": run_data_poor,
    "span_models": run_span_models,
    "table3": run_table3,
    "criticality": run_criticality,
}


def run(cfg):
    """Execute one experiment; returns the runner's summary object."""
    warnings, errors = validate(cfg)
    if errors:
        raise ConfigError("; ".join(errors))
    r = Run(cfg)
    r.root.mkdir(parents=True, exist_ok=True)
    with open(r.path("config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    result = RUNNERS[cfg.experiment](r)
    r.finish()
    return result
