"""Entropic risk, value-at-risk and the per-model risk report."""
import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .models import forward
from .training import pnl_values

_TIE_TOL = 1e-9
VAR_LEVELS = (0.99, 0.95, 0.90, 0.80, 0.50)
REPORT_COLUMNS = ("model", "span", "seed", "erm", "mean", "var99", "var95", "var90",
                  "var80", "var50", "lambda")


class RiskDomainError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def _values(dist):
    x = np.asarray(dist, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise RiskDomainError("empty PnL distribution")
    if not np.all(np.isfinite(x)):
        raise RiskDomainError("PnL distribution contains non-finite values")
    return x


def erm(dist, lam=1.0):
    """Entropic risk log(E[exp(-lam X)]) / lam, shifted by the sample minimum.

    With m = min X the sum is over exp(-lam (X - m)) <= 1, so nothing
    overflows, and a constant sample returns exactly -m.
    """
    if not lam > 0:
        raise RiskDomainError(f"lambda must be positive, got {lam}")
    x = _values(dist)
    low = float(np.min(x))
    with np.errstate(over="ignore", invalid="ignore"):
        total = float(np.sum(np.exp(-lam * (x - low))))
    out = -low + math.log(total / x.size) / lam
    if not math.isfinite(out):
        raise NumericError(f"entropic risk overflowed (lambda={lam})")
    return out


def value_at_risk(dist, level):
    """Lower-tail quantile inf{x : F(x) > 1 - level}, reported signed.

    F is the empirical CDF of the sample; no interpolation.
    """
    if not 0 < level < 1:
        raise RiskDomainError(f"level must lie in (0, 1), got {level}")
    x = np.sort(_values(dist))
    n = x.size
    # levels are decimal inputs; 1 - 0.8 is 0.19999999999999996 in binary, so
    # compare with a tolerance well below 1/n to keep exact ties as ties
    u = 1.0 - level
    k = min(int(math.floor(u * n + _TIE_TOL)) + 1, n)
    return float(x[k - 1])


@dataclass(frozen=True)
class RiskReport:
    erm: float
    mean: float
    var99: float
    var95: float
    var90: float
    var80: float
    var50: float
    lam: float

    def row(self, model="", span="", seed=""):
        return [model, span, seed, *(repr(v) for v in (
            self.erm, self.mean, self.var99, self.var95, self.var90, self.var80,
            self.var50, self.lam))]

    def as_dict(self):
        return asdict(self)


def risk_report(pnl, lam=1.0):
    x = _values(pnl)
    var = [value_at_risk(x, lvl) for lvl in VAR_LEVELS]
    return RiskReport(erm(x, lam), float(np.mean(x)), *var, lam)


def average_reports(reports):
    """Field-wise mean, the way seed-averaged rows are formed."""
    fields = ("erm", "mean", "var99", "var95", "var90", "var80", "var50")
    vals = {f: float(np.mean([getattr(r, f) for r in reports])) for f in fields}
    return RiskReport(**vals, lam=reports[0].lam)


def model_pnl(params, data, cost):
    delta = np.asarray(forward(params, data.x).data)
    return pnl_values(delta, data.s0, data.s1, data.premium, data.strike, cost)


def evaluate(params, data, lam=1.0, cost=5.0):
    """PnL under the model's deltas (with the per-unit trading cost), then all statistics."""
    return risk_report(model_pnl(params, data, cost), lam)


def write_reports(path, rows, meta=None):
    """rows: iterable of (model, span, seed, RiskReport)."""
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for model, span, seed, rep in rows:
            w.writerow(rep.row(model, span, seed))
