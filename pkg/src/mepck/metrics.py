"""Validation-set error metrics for surrogate accuracy assessment.

The coefficient of determination here is the squared Pearson correlation
(covariance squared over the product of variances), not 1 - NRMSE; a
perfectly anti-correlated prediction therefore also scores 1 and is flagged
separately. The maximum-error metric divides by K times the standard
deviation, so it shrinks with the validation size; the raw maximum error is
reported alongside it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _check_pair(truth, pred):
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError("truth and pred must be 1-D arrays of equal length")
    if truth.size < 2:
        raise ValueError("need at least two validation points")
    return truth, pred


def quasi_std(values) -> float:
    """Standard deviation with the K - 1 denominator."""
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(np.sum((values - values.mean()) ** 2) / (values.size - 1)))


def nrmse(truth, pred) -> float:
    """Sum of squared errors over sum of squared deviations from the mean."""
    truth, pred = _check_pair(truth, pred)
    denom = float(np.sum((truth.mean() - truth) ** 2))
    if denom <= 0.0:
        raise ValueError("constant truth: normalization undefined")
    return float(np.sum((pred - truth) ** 2)) / denom


def naae(truth, pred) -> float:
    truth, pred = _check_pair(truth, pred)
    sigma = quasi_std(truth)
    if sigma <= 0.0:
        raise ValueError("constant truth: normalization undefined")
    return float(np.sum(np.abs(pred - truth))) / (truth.size * sigma)


def nmae(truth, pred) -> float:
    truth, pred = _check_pair(truth, pred)
    sigma = quasi_std(truth)
    if sigma <= 0.0:
        raise ValueError("constant truth: normalization undefined")
    return float(np.max(np.abs(pred - truth))) / (truth.size * sigma)


def r2(truth, pred) -> float:
    """Squared correlation; undefined for constant truth or prediction."""
    truth, pred = _check_pair(truth, pred)
    st, sp = quasi_std(truth), quasi_std(pred)
    if st <= 0.0 or sp <= 0.0:
        raise ValueError("constant truth or prediction: R^2 undefined")
    cov = float(np.sum((truth - truth.mean()) * (pred - pred.mean()))) / (truth.size - 1)
    return cov**2 / (st**2 * sp**2)


@dataclass(frozen=True)
class ValidationReport:
    nrmse: float
    naae: float
    nmae: float
    r2: float
    K: int
    max_abs_error: float
    anticorrelated: bool
    construction_seconds: float | None = None
    evaluation_seconds: float | None = None
    evaluation_seconds_per_point: float | None = field(default=None)

    def as_dict(self) -> dict:
        return {
            "NRMSE": self.nrmse,
            "NAAE": self.naae,
            "NMAE": self.nmae,
            "R2": self.r2,
            "K": self.K,
            "max_abs_error": self.max_abs_error,
            "anticorrelated": self.anticorrelated,
            "t_c": self.construction_seconds,
            "t_e": self.evaluation_seconds_per_point,
            "t_e_VS": self.evaluation_seconds,
        }


def compute_metrics(
    truth,
    pred,
    construction_seconds=None,
    evaluation_seconds=None,
) -> ValidationReport:
    truth, pred = _check_pair(truth, pred)
    cov = float(np.sum((truth - truth.mean()) * (pred - pred.mean())))
    per_point = (
        evaluation_seconds / truth.size if evaluation_seconds is not None else None
    )
    return ValidationReport(
        nrmse=nrmse(truth, pred),
        naae=naae(truth, pred),
        nmae=nmae(truth, pred),
        r2=r2(truth, pred),
        K=truth.size,
        max_abs_error=float(np.max(np.abs(pred - truth))),
        anticorrelated=cov < 0.0,
        construction_seconds=construction_seconds,
        evaluation_seconds=evaluation_seconds,
        evaluation_seconds_per_point=per_point,
    )
