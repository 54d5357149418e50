"""Per-variable contribution of a pattern to the map's distortion measure.

For a pattern r with BMU c, the signed average distance vector

    d(r) = (1/D) * sum_i w[c, i] * (r - m_i)

is squared componentwise and normalized to unit sum,

    d_n(r) = (d o d) / ||d||^2,

so its entries say which variables carry the deviation. Averaging d_n over
the nominal training set gives the nominal profile; the componentwise ratio
of a monitored pattern's d_n to that profile flags the variables whose
share of the deviation exceeds the nominal share (ratio above the
threshold, default 1.3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, DegenerateVectorError, InvalidInputError
from .som import SomModel, _as_matrix, _as_pattern, _distance_matrix

# Floor applied to nominal profile components before division so a variable
# that never deviates in training cannot yield an infinite ratio.
BASELINE_FLOOR = 1e-6

DEFAULT_RATIO_THRESHOLD = 1.3


@dataclass(frozen=True)
class ContributionVector:
    """Unit-sum squared-deviation shares per variable.

    ``neutral`` marks a pattern whose distance vector was exactly zero; the
    shares are then the uninformative uniform vector and should not be used
    to implicate variables.
    """

    values: np.ndarray
    neutral: bool = False


@dataclass(frozen=True)
class ContributionRatios:
    ratios: np.ndarray
    flagged: tuple[int, ...]
    threshold: float


def distance_vector(model: SomModel, pattern: np.ndarray) -> np.ndarray:
    """Signed neighbourhood-weighted mean deviation (1/D) sum_i w[c,i] (r - m_i).

    Entries of ``pattern`` that are NaN (missing during monitoring) contribute
    zero deviation: no evidence either way for that variable.
    """
    p = np.asarray(pattern, dtype=float)
    if p.ndim != 1 or p.shape[0] != model.dim:
        raise ContractViolationError(
            f"pattern has shape {p.shape}, expected ({model.dim},)"
        )
    missing = np.isnan(p)
    if missing.all():
        raise InvalidInputError("pattern has no observed variables")
    if np.isinf(p).any():
        raise InvalidInputError("pattern contains non-finite entries")
    filled = np.where(missing, 0.0, p)
    dist = np.linalg.norm(
        np.where(missing[None, :], 0.0, model.codebook - filled[None, :]), axis=1
    )
    c = int(np.argmin(dist))
    w_c = model.weights()[c]
    d = (w_c @ (filled[None, :] - model.codebook)) / model.n_cells
    d[missing] = 0.0
    return d


def distance_vectors(model: SomModel, patterns: np.ndarray) -> np.ndarray:
    """Batch form of :func:`distance_vector` for fully observed rows."""
    m = _as_matrix(patterns, model.dim)
    dist = _distance_matrix(model.codebook, m)
    bmus = np.argmin(dist, axis=1)
    w = model.weights()[bmus]
    return (w.sum(axis=1)[:, None] * m - w @ model.codebook) / model.n_cells


def normalized_squared(d: np.ndarray) -> np.ndarray:
    """Squared components of d normalized to unit sum: (d o d) / ||d||^2."""
    d = np.asarray(d, dtype=float)
    sq = d * d
    total = sq.sum()
    if total == 0.0:
        raise DegenerateVectorError("distance vector is zero; shares undefined")
    return sq / total


def contribution_vector(model: SomModel, pattern: np.ndarray) -> ContributionVector:
    """Contribution shares of one pattern; uniform and neutral when degenerate."""
    d = distance_vector(model, pattern)
    try:
        return ContributionVector(values=normalized_squared(d))
    except DegenerateVectorError:
        n = model.dim
        return ContributionVector(values=np.full(n, 1.0 / n), neutral=True)


def baseline_contribution(model: SomModel, train_data: np.ndarray) -> np.ndarray:
    """Mean contribution shares over the nominal training set."""
    m = _as_matrix(train_data, model.dim)
    if m.shape[0] == 0:
        raise InvalidInputError("cannot build a contribution baseline from empty data")
    d = distance_vectors(model, m)
    sq = d * d
    totals = sq.sum(axis=1)
    shares = np.empty_like(sq)
    degenerate = totals == 0.0
    shares[~degenerate] = sq[~degenerate] / totals[~degenerate, None]
    shares[degenerate] = 1.0 / m.shape[1]
    return shares.mean(axis=0)


def contribution_ratios(
    baseline: np.ndarray,
    shares: np.ndarray,
    threshold: float = DEFAULT_RATIO_THRESHOLD,
) -> ContributionRatios:
    """Componentwise ratio of a pattern's shares to the nominal profile.

    Baseline components are floored at ``BASELINE_FLOOR`` before dividing.
    Variables with ratio strictly above ``threshold`` are flagged.
    """
    b = np.asarray(baseline, dtype=float)
    s = np.asarray(shares, dtype=float)
    if b.shape != s.shape:
        raise ContractViolationError(
            f"baseline shape {b.shape} != shares shape {s.shape}"
        )
    if threshold <= 0:
        raise ContractViolationError(f"threshold must be positive, got {threshold}")
    ratios = s / np.maximum(b, BASELINE_FLOOR)
    flagged = tuple(int(i) for i in np.nonzero(ratios > threshold)[0])
    return ContributionRatios(ratios=ratios, flagged=flagged, threshold=threshold)
