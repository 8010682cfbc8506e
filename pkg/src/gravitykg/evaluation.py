"""Regression and binary-classification metrics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class RegressionMetrics:
    mae: float
    mape: float
    mpe: float
    r_square: float
    n: int = 0
    skipped_zero_actual: int = 0

    @property
    def percentage_defined(self) -> bool:
        return not math.isnan(self.mape)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("mape", "mpe"):
            if math.isnan(d[k]):
                d[k] = None
        return d


def regression_metrics(actual: Sequence[float], predicted: Sequence[float]) -> RegressionMetrics:
    """MAE, MAPE, MPE (percent, sign convention (y - yhat) / y) and R^2.

    Rows with y == 0 are excluded from MAPE/MPE and counted; if every actual is
    zero both are NaN. A constant actual vector gives R^2 = 1 for a perfect fit
    and -inf otherwise.
    """
    y = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if y.shape != p.shape:
        raise ShapeError(f"length mismatch: {y.size} actual vs {p.size} predicted")
    if y.size == 0:
        raise ShapeError("empty inputs")
    err = y - p
    mae = float(np.mean(np.abs(err)))
    nz = y != 0
    skipped = int((~nz).sum())
    if nz.any():
        with np.errstate(over="ignore"):
            rel = err[nz] / y[nz]
        mape = 100.0 * float(np.mean(np.abs(rel)))
        mpe = 100.0 * float(np.mean(rel))
    else:
        mape = mpe = math.nan
    ss_res = float(np.sum(err ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else -math.inf
    return RegressionMetrics(mae, mape, mpe, r2, int(y.size), skipped)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @staticmethod
    def _rate(num, den):
        return 100.0 * num / den if den else math.nan

    @property
    def tp_rate(self):
        return self._rate(self.tp, self.tp + self.fn)

    @property
    def fn_rate(self):
        return self._rate(self.fn, self.tp + self.fn)

    @property
    def fp_rate(self):
        return self._rate(self.fp, self.fp + self.tn)

    @property
    def tn_rate(self):
        return self._rate(self.tn, self.fp + self.tn)

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self):
        return (self.tp + self.tn) / self.total if self.total else math.nan

    def to_dict(self) -> dict:
        out = {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}
        for k in ("tp_rate", "fp_rate", "fn_rate", "tn_rate", "accuracy"):
            v = getattr(self, k)
            out[k] = None if math.isnan(v) else v
        return out


def confusion(actual: Sequence[int], scores: Sequence[float], threshold: float = 0.5) -> ConfusionMatrix:
    y = np.asarray(actual).ravel()
    s = np.asarray(scores, dtype=float).ravel()
    if y.shape != s.shape:
        raise ShapeError(f"length mismatch: {y.size} labels vs {s.size} scores")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    pred = s >= threshold
    pos = y == 1
    return ConfusionMatrix(int((pred & pos).sum()), int((pred & ~pos).sum()),
                           int((~pred & pos).sum()), int((~pred & ~pos).sum()))
