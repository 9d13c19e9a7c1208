"""Command line front end.

Verbs: simulate, train, evaluate, criticality, experiment, validate.
Exit codes: 0 success, 1 configuration error, 2 runtime or numeric failure.
"""
import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__, kernels
from .analysis import criticality, max_position, write_criticality
from .autodiff import ShapeError
from .experiments import (EXPERIMENTS, ExperimentConfig, HIST_HEADER,
                          default_out_root, histogram_rows, run, terminal_data, validate)
from .market import ConfigError, MarketConfig, build_span_dataset, simulate_paths
from .models import FAMILIES, SPAN_FAMILIES, IntegrityError, SpecError, ArchSpec, build, load, save
from .risk import NumericError, RiskDomainError, evaluate, model_pnl, write_reports
from .training import HedgeData, TrainConfig, TrainingError, train

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

_MARKET_FLAGS = {"s0": float, "strike": float, "rate": float, "vol": float,
                 "horizon_days": int, "n_paths": int}
_TRAIN_FLAGS = {"batch_size": int, "epochs": int, "lr": float, "weight_decay": float,
                "loss": str, "transaction_cost": float}


def _add_market(p):
    for name, typ in _MARKET_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), type=typ, default=None)
    p.add_argument("--market-seed", type=int, default=None)


def _add_train(p):
    for name, typ in _TRAIN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), type=typ, default=None)


def _market(args, base=None):
    values = dict(base or {})
    for name in _MARKET_FLAGS:
        if getattr(args, name) is not None:
            values[name] = getattr(args, name)
    if args.market_seed is not None:
        values["seed"] = args.market_seed
    return values


def _train(args, base=None):
    values = dict(base or {})
    for name in _TRAIN_FLAGS:
        if getattr(args, name, None) is not None:
            values[name] = getattr(args, name)
    return values


def parser():
    top = argparse.ArgumentParser(prog="hedgelab", description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version", version=f"hedgelab {__version__}")
    sub = top.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate", help="simulate GBM paths to CSV")
    _add_market(p)
    p.add_argument("--seed", type=int, default=None, help="alias for --market-seed")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one model and save a checkpoint")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--span", type=int, default=None, help="span length (span families; default 3)")
    _add_market(p)
    _add_train(p)
    p.add_argument("--seed", type=int, default=0, help="init and shuffle seed")
    p.add_argument("--out", default=None, help="output directory")

    for verb in ("evaluate", "criticality"):
        p = sub.add_parser(verb, help=f"{verb} a checkpoint on fresh paths")
        p.add_argument("--checkpoint", required=True)
        _add_market(p)
        p.add_argument("--lam", type=float, default=1.0)
        p.add_argument("--transaction-cost", type=float, default=5.0)
        p.add_argument("--out", default=None)

    for verb in ("experiment", "validate"):
        p = sub.add_parser(verb, help=f"{verb} an experiment config")
        p.add_argument("name", nargs="?", choices=EXPERIMENTS)
        p.add_argument("--config", default=None, help="JSON config file; flags override it")
        _add_market(p)
        _add_train(p)
        p.add_argument("--seeds", type=int, nargs="+", default=None)
        p.add_argument("--families", nargs="+", default=None)
        p.add_argument("--spans", type=int, nargs="+", default=None)
        p.add_argument("--lam", type=float, default=None)
        p.add_argument("--record-timing", action="store_true")
        p.add_argument("--out", default=None)
    return top


def _experiment_dict(args):
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    if args.name:
        raw["experiment"] = args.name
    if "experiment" not in raw:
        raise ConfigError("give an experiment name or a config with an 'experiment' entry")
    market = _market(args, raw.get("market"))
    if market:
        raw["market"] = market
    tr = _train(args, raw.get("train"))
    if tr:
        raw["train"] = tr
    for flag, key in (("seeds", "seeds"), ("families", "families"), ("spans", "span_lengths"),
                      ("lam", "lam"), ("out", "out_dir")):
        if getattr(args, flag) is not None:
            raw[key] = getattr(args, flag)
    if args.record_timing:
        raw["record_timing"] = True
    return raw


def _dataset(model, market_cfg):
    if model.family in ("snn", "snn_pnl"):
        return terminal_data(market_cfg)
    ds = build_span_dataset(simulate_paths(market_cfg), model.spec.span_length)
    return HedgeData.from_dataset(ds, market_cfg)


def _meta(**extra):
    return {"hedgelab": __version__, "backend": kernels.BACKEND, "rng": kernels.RNG_NAME, **extra}


def cmd_simulate(args):
    values = _market(args)
    if args.seed is not None:
        values.setdefault("seed", args.seed)
    paths = simulate_paths(MarketConfig(**values))
    paths.to_csv(args.out)
    print(f"wrote {paths.n_paths} paths x {paths.horizon_days + 1} days to {args.out}")


def cmd_train(args):
    market = MarketConfig(**_market(args))
    tcfg = TrainConfig(**_train(args), seed=args.seed)
    problems = tcfg.problems()
    if problems:
        raise ConfigError("; ".join(problems))
    span = args.span
    if span is None and args.family in SPAN_FAMILIES:
        span = 3
    spec = ArchSpec(args.family, span)
    params = build(spec, args.seed)
    data = _dataset(params, market)
    trace = train(params, data, tcfg)
    out = Path(args.out or Path(default_out_root()) / f"train_{args.family}_seed{args.seed}")
    out.mkdir(parents=True, exist_ok=True)
    meta = _meta(family=args.family, span=span, seed=args.seed, market_seed=market.seed,
                 params=params.param_count)
    trace.to_csv(out / "trace.csv", include_timing=False, meta=meta)
    save(params, out / "checkpoint.json")
    print(f"{args.family}: {params.param_count} params, final running loss "
          f"{trace.losses[-1]:.6g}; checkpoint in {out}")


def _checkpoint_data(args):
    params = load(args.checkpoint)
    market = MarketConfig(**_market(args))
    return params, market, _dataset(params, market)


def cmd_evaluate(args):
    params, market, data = _checkpoint_data(args)
    report = evaluate(params, data, args.lam, args.transaction_cost)
    out = Path(args.out or Path(default_out_root()) / "evaluate")
    out.mkdir(parents=True, exist_ok=True)
    meta = _meta(family=params.family, market_seed=market.seed, lam=args.lam)
    write_reports(out / "report.csv", [(params.family, params.spec.span_length,
                                        params.init_seed, report)], meta)
    pnl = model_pnl(params, data, args.transaction_cost)
    with open(out / "pnl_hist.csv", "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh)
        w.writerow(HIST_HEADER)
        w.writerows(histogram_rows(pnl))
    print(f"erm={report.erm:.6g} mean={report.mean:.6g} var99={report.var99:.6g} "
          f"var50={report.var50:.6g}")


def cmd_criticality(args):
    params, market, data = _checkpoint_data(args)
    if params.family != "attention":
        raise ConfigError(f"criticality needs an attention checkpoint, got {params.family}")
    row = criticality(params, data.x)
    out = Path(args.out or Path(default_out_root()) / "criticality")
    out.mkdir(parents=True, exist_ok=True)
    write_criticality(out / "criticality.csv", [(params.init_seed, row)],
                      _meta(market_seed=market.seed, span=row.span_length))
    print("weights " + " ".join(f"{w:.4f}" for w in row.weights)
          + f"; most critical position {max_position(row)}")


def cmd_validate(args):
    raw = _experiment_dict(args)
    warnings, errors = validate(raw)
    for w in warnings:
        print(f"warning: {w}")
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    if errors:
        return EXIT_CONFIG
    print("config ok")
    return EXIT_OK


def cmd_experiment(args):
    cfg = ExperimentConfig.from_dict(_experiment_dict(args))
    for w in validate(cfg)[0]:
        print(f"warning: {w}", file=sys.stderr)
    run(cfg)
    print(f"{cfg.experiment}: outputs in {cfg.out_dir}")


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate,
            "criticality": cmd_criticality, "experiment": cmd_experiment,
            "validate": cmd_validate}


def main(argv=None):
    args = parser().parse_args(argv)
    try:
        code = COMMANDS[args.verb](args)
    except (ConfigError, SpecError, IntegrityError, TypeError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingError, NumericError, RiskDomainError, ShapeError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
