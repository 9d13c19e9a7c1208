"""Attention criticality: how much each span position feeds the attention delta.

For a probe span the query weights are w = softmax(W_Q z + b_Q). Position j
is credited c_j = sum_n w_n * W_V[n, j]. Query weights are averaged over the
probe set first (contributions are linear in w, so this equals averaging the
contributions), and |c| is normalised to unit sum.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .models import attention_parts


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class CriticalityRow:
    span_length: int
    weights: tuple

    def __post_init__(self):
        if len(self.weights) != self.span_length:
            raise ContractError(f"{len(self.weights)} weights for span length {self.span_length}")


def mean_query(model, probe_spans):
    if model.family != "attention":
        raise ContractError(f"criticality needs an attention model, got {model.family}")
    probe = np.atleast_2d(np.asarray(probe_spans, dtype=np.float64))
    if probe.shape[0] == 0:
        raise ContractError("empty probe set")
    _, query, _, _ = attention_parts(model, probe)
    return query.data.mean(axis=0)


def criticality(model, probe_spans):
    """``probe_spans`` are model inputs (already normalised), shape (n, span_length)."""
    w = mean_query(model, probe_spans)
    contrib = np.abs(w @ model.tensors["value.weight"].data)
    total = contrib.sum()
    if total == 0:
        weights = np.full(contrib.shape, 1.0 / contrib.size)
    else:
        weights = contrib / total
    return CriticalityRow(model.spec.span_length, tuple(float(v) for v in weights))


def max_position(row):
    """Argmax with first-index tie-break."""
    return int(np.argmax(np.asarray(row.weights)))


def write_criticality(path, rows, meta=None):
    """rows: iterable of (label, CriticalityRow); label is usually the seed."""
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh)
        w.writerow(["span_length", "position", "weight", "seed"])
        for label, row in rows:
            for j, v in enumerate(row.weights):
                w.writerow([row.span_length, j, repr(v), label])
