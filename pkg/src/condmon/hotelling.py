"""Hotelling T2 multivariate control chart, used as the comparison detector.

Phase one estimates the nominal mean and sample covariance from historical
data and derives 3-sigma control limits on the training T2 values:

    t2(r) = (r - mu) C^-1 (r - mu)^T
    UCL   = mean(t2) + 3 std(t2)
    LCL   = max(mean(t2) - 3 std(t2), 0)

Phase two scores new patterns against the UCL. Only the UCL opens warning
episodes: a small T2 means unusually central data and is informational.
T2 values are not filtered before thresholding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractViolationError,
    InsufficientDataError,
    InvalidInputError,
    SingularCovarianceError,
)

# Covariance condition numbers beyond this are treated as rank deficient.
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class HotellingBaseline:
    """Phase-one statistics plus control limits, immutable after fit."""

    mean: np.ndarray
    covariance: np.ndarray
    covariance_inverse: np.ndarray
    t2_mean: float
    t2_std: float
    ucl: float
    lcl: float

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _near_collinear_suspects(cov: np.ndarray, names: list[str] | None) -> list[str]:
    """Variables loading most on the smallest-eigenvalue direction."""
    vals, vecs = np.linalg.eigh(cov)
    v = np.abs(vecs[:, 0])
    order = np.argsort(v)[::-1]
    picked = [int(i) for i in order[:3] if v[i] > 0.1 * v[order[0]]]
    if names:
        return [names[i] for i in picked]
    return [f"var{i}" for i in picked]


def fit_baseline(
    train_data: np.ndarray,
    variable_names: list[str] | None = None,
    ridge: float = 0.0,
) -> HotellingBaseline:
    """Estimate mean, covariance and T2 control limits from nominal data.

    Raises ``SingularCovarianceError`` naming the most collinear variables
    when the covariance condition number exceeds ``CONDITION_LIMIT``. An
    optional ridge (epsilon added to the diagonal) is available for rank
    deficient plants; it is off by default.
    """
    x = np.asarray(train_data, dtype=float)
    if x.ndim != 2:
        raise ContractViolationError(f"expected 2-D data, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise InvalidInputError("training data contains non-finite entries")
    n_obs, n_var = x.shape
    if n_obs < n_var + 1:
        raise InsufficientDataError(
            f"need at least {n_var + 1} observations for {n_var} variables, got {n_obs}"
        )
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n_obs - 1)
    cov = (cov + cov.T) / 2.0
    if ridge > 0.0:
        cov = cov + ridge * np.eye(n_var)
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals[0] <= 0 or eigvals[-1] / eigvals[0] > CONDITION_LIMIT:
        suspects = _near_collinear_suspects(cov, variable_names)
        raise SingularCovarianceError(
            "covariance is singular or near-singular "
            f"(condition number > {CONDITION_LIMIT:.0e}); "
            f"near-collinear variables: {', '.join(suspects)}",
            suspects=suspects,
        )
    cov_inv = np.linalg.inv(cov)
    cov_inv = (cov_inv + cov_inv.T) / 2.0
    t2_train = _t2_of(centered, cov_inv)
    t2_mean = float(t2_train.mean())
    t2_std = float(t2_train.std(ddof=1)) if n_obs > 1 else 0.0
    return HotellingBaseline(
        mean=mean,
        covariance=cov,
        covariance_inverse=cov_inv,
        t2_mean=t2_mean,
        t2_std=t2_std,
        ucl=t2_mean + 3.0 * t2_std,
        lcl=max(t2_mean - 3.0 * t2_std, 0.0),
    )


def _t2_of(centered: np.ndarray, cov_inv: np.ndarray) -> np.ndarray:
    vals = np.einsum("ij,jk,ik->i", centered, cov_inv, centered)
    return np.maximum(vals, 0.0)


def t2(baseline: HotellingBaseline, pattern: np.ndarray) -> float:
    """Squared Mahalanobis distance of one pattern from the nominal mean."""
    p = np.asarray(pattern, dtype=float)
    if p.ndim != 1 or p.shape[0] != baseline.dim:
        raise ContractViolationError(
            f"pattern has shape {p.shape}, expected ({baseline.dim},)"
        )
    if not np.isfinite(p).all():
        raise InvalidInputError("pattern contains non-finite entries")
    diff = (p - baseline.mean)[None, :]
    return float(_t2_of(diff, baseline.covariance_inverse)[0])


def t2_many(baseline: HotellingBaseline, patterns: np.ndarray) -> np.ndarray:
    """T2 of each row; rows with any NaN yield NaN (no-data)."""
    x = np.asarray(patterns, dtype=float)
    if x.ndim != 2 or x.shape[1] != baseline.dim:
        raise ContractViolationError(
            f"patterns have shape {x.shape}, expected (N, {baseline.dim})"
        )
    out = np.full(x.shape[0], np.nan)
    complete = ~np.isnan(x).any(axis=1)
    if complete.any():
        diff = x[complete] - baseline.mean
        out[complete] = _t2_of(diff, baseline.covariance_inverse)
    return out
