"""Self-organizing map on a fixed rectangular grid, trained in batch mode.

The map is a set of D model vectors (the codebook), one per cell of a
rows x cols grid. Cells are indexed row-major; the grid distance between
two cells is the Euclidean distance between their integer coordinates.
A Gaussian neighbourhood function couples cells:

    w[c, i] = exp(-d(c, i)^2 / (2 * sigma^2))

The quantity monitored downstream is the distortion measure of a pattern r,

    DM(r) = sum_i w[c, i] * ||r - m_i||      with c = bmu(r),

and its average over a dataset. Note the norm is NOT squared.

Training is batch: each epoch assigns all patterns to their BMUs and moves
every model vector toward the neighbourhood-weighted mean of the assigned
patterns. The full step is the classic batch update

    m_i <- sum_r w[c(r), i] * r / sum_r w[c(r), i]

but the raw full step minimizes the *squared*-distance objective and can
slightly increase the non-squared distortion near convergence. Each epoch
therefore backtracks the step (halving toward the current codebook) until
the epoch's distortion does not increase; early epochs take the full step,
late epochs are damped. This keeps the average distortion non-increasing
at fixed sigma by construction while preserving the classic update as the
primary move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolationError, InsufficientDataError, InvalidInputError

GRID_METRIC = "euclidean-on-grid-indices"

# Rows per chunk when streaming pattern-to-codebook distances; bounds peak
# memory at ~chunk * D floats.
_CHUNK_ROWS = 8192

_BACKTRACK_TRIES = 30


@dataclass(frozen=True)
class GridTopology:
    """Fixed 2-D rectangular grid of cells, indexed row-major."""

    rows: int
    cols: int
    metric: str = GRID_METRIC

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ContractViolationError(
                f"grid must have positive dimensions, got {self.rows}x{self.cols}"
            )
        if self.metric != GRID_METRIC:
            raise ContractViolationError(f"unsupported grid metric {self.metric!r}")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def coordinates(self) -> np.ndarray:
        """Integer (row, col) coordinates of every cell, shape (D, 2)."""
        rr, cc = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing="ij")
        return np.column_stack([rr.ravel(), cc.ravel()]).astype(float)

    def cell_distances(self) -> np.ndarray:
        """Pairwise Euclidean distances between cell coordinates, shape (D, D)."""
        xy = self.coordinates()
        diff = xy[:, None, :] - xy[None, :, :]
        return np.sqrt((diff**2).sum(axis=2))


def neighborhood_weights(topology: GridTopology, sigma: float) -> np.ndarray:
    """Gaussian neighbourhood matrix w[c, i] = exp(-d(c,i)^2 / (2 sigma^2)).

    Diagonal entries are exactly 1; all entries lie in (0, 1] and decrease
    strictly with grid distance.
    """
    if sigma <= 0:
        raise ContractViolationError(f"sigma must be positive, got {sigma}")
    d = topology.cell_distances()
    return np.exp(-(d**2) / (2.0 * sigma * sigma))


@dataclass(frozen=True)
class TrainingMeta:
    epochs: int
    final_distortion: float
    data_fingerprint: str


@dataclass(frozen=True)
class SomModel:
    """Trained map: codebook on a grid plus the neighbourhood width sigma.

    Immutable; safe to share across threads. ``sigma`` is the final width of
    the training schedule and is reused for every distortion computation so
    the monitoring statistic matches the training objective.
    """

    topology: GridTopology
    codebook: np.ndarray
    sigma: float
    training_meta: TrainingMeta
    _weights_cache: dict = field(
        default_factory=dict, repr=False, compare=False, hash=False
    )

    def __post_init__(self):
        cb = np.asarray(self.codebook, dtype=float)
        if cb.ndim != 2 or cb.shape[0] != self.topology.n_cells:
            raise ContractViolationError(
                f"codebook shape {cb.shape} does not match grid with "
                f"{self.topology.n_cells} cells"
            )
        if not np.isfinite(cb).all():
            raise InvalidInputError("codebook contains non-finite entries")
        if self.sigma <= 0:
            raise ContractViolationError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "codebook", cb)

    @property
    def dim(self) -> int:
        return self.codebook.shape[1]

    @property
    def n_cells(self) -> int:
        return self.topology.n_cells

    def weights(self) -> np.ndarray:
        """Neighbourhood matrix at the model's sigma (computed once, cached)."""
        w = self._weights_cache.get("w")
        if w is None:
            w = neighborhood_weights(self.topology, self.sigma)
            self._weights_cache["w"] = w
        return w


@dataclass(frozen=True)
class TrainConfig:
    """Batch-training parameters.

    ``rows``/``cols`` of None trigger the sizing heuristic: the smallest
    near-square grid with at least 5*sqrt(N) cells, capped at 400.
    ``sigma_initial`` of None defaults to max(rows, cols) / 2; sigma decays
    linearly to ``sigma_final`` over the epochs.
    """

    rows: int | None = None
    cols: int | None = None
    epochs: int = 30
    sigma_initial: float | None = None
    sigma_final: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractViolationError(f"epochs must be >= 1, got {self.epochs}")
        if self.sigma_final <= 0:
            raise ContractViolationError(
                f"sigma_final must be positive, got {self.sigma_final}"
            )


def default_grid(n_samples: int) -> tuple[int, int]:
    """Smallest near-square grid with at least 5*sqrt(N) cells, capped at 400."""
    target = min(int(math.ceil(5.0 * math.sqrt(max(n_samples, 1)))), 400)
    rows = max(int(math.floor(math.sqrt(target))), 1)
    cols = int(math.ceil(target / rows))
    return rows, cols


def sigma_schedule(config: TrainConfig, rows: int, cols: int) -> np.ndarray:
    """Per-epoch sigma values: linear decay ending exactly at sigma_final."""
    sigma0 = config.sigma_initial
    if sigma0 is None:
        sigma0 = max(rows, cols) / 2.0
    sigma0 = max(float(sigma0), config.sigma_final)
    if config.epochs == 1:
        return np.array([config.sigma_final])
    return np.linspace(sigma0, config.sigma_final, config.epochs)


def _as_pattern(model: SomModel, pattern: np.ndarray) -> np.ndarray:
    p = np.asarray(pattern, dtype=float)
    if p.ndim != 1 or p.shape[0] != model.dim:
        raise ContractViolationError(
            f"pattern has shape {p.shape}, expected ({model.dim},)"
        )
    if not np.isfinite(p).all():
        raise InvalidInputError("pattern contains non-finite entries")
    return p


def _as_matrix(data: np.ndarray, dim: int | None = None) -> np.ndarray:
    m = np.asarray(data, dtype=float)
    if m.ndim != 2:
        raise ContractViolationError(f"expected 2-D data, got shape {m.shape}")
    if dim is not None and m.shape[1] != dim:
        raise ContractViolationError(
            f"data has {m.shape[1]} columns, expected {dim}"
        )
    if not np.isfinite(m).all():
        raise InvalidInputError("data contains non-finite entries")
    return m


def _distance_matrix(codebook: np.ndarray, patterns: np.ndarray) -> np.ndarray:
    """Euclidean distances patterns x cells, shape (N, D)."""
    d2 = (
        (patterns**2).sum(axis=1)[:, None]
        - 2.0 * patterns @ codebook.T
        + (codebook**2).sum(axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def bmu(model: SomModel, pattern: np.ndarray) -> int:
    """Index of the cell whose model vector is Euclidean-nearest to pattern.

    Ties break to the lowest cell index (argmin picks the first minimum).
    """
    p = _as_pattern(model, pattern)
    dist = np.linalg.norm(model.codebook - p[None, :], axis=1)
    return int(np.argmin(dist))


def bmu_many(model: SomModel, patterns: np.ndarray) -> np.ndarray:
    """BMU indices for a batch of patterns, shape (N,)."""
    m = _as_matrix(patterns, model.dim)
    out = np.empty(m.shape[0], dtype=np.int64)
    for lo in range(0, m.shape[0], _CHUNK_ROWS):
        chunk = m[lo : lo + _CHUNK_ROWS]
        out[lo : lo + chunk.shape[0]] = np.argmin(
            _distance_matrix(model.codebook, chunk), axis=1
        )
    return out


def distortion_single(model: SomModel, pattern: np.ndarray) -> float:
    """Distortion measure of one pattern: sum_i w[c,i] * ||pattern - m_i||."""
    p = _as_pattern(model, pattern)
    dist = np.linalg.norm(model.codebook - p[None, :], axis=1)
    c = int(np.argmin(dist))
    return float(model.weights()[c] @ dist)


def distortion_many(model: SomModel, patterns: np.ndarray) -> np.ndarray:
    """Distortion measure of each row of ``patterns``, shape (N,)."""
    m = _as_matrix(patterns, model.dim)
    w = model.weights()
    out = np.empty(m.shape[0])
    for lo in range(0, m.shape[0], _CHUNK_ROWS):
        chunk = m[lo : lo + _CHUNK_ROWS]
        dist = _distance_matrix(model.codebook, chunk)
        bmus = np.argmin(dist, axis=1)
        out[lo : lo + chunk.shape[0]] = (w[bmus] * dist).sum(axis=1)
    return out


def distortion_average(model: SomModel, data: np.ndarray) -> float:
    """Mean distortion over a dataset; on the training set this is DM_delta."""
    m = _as_matrix(data, model.dim)
    if m.shape[0] == 0:
        raise InvalidInputError("cannot average distortion over empty data")
    return float(distortion_many(model, m).mean())


def _distortion_of(codebook: np.ndarray, data: np.ndarray, w: np.ndarray) -> tuple[float, np.ndarray]:
    """Average non-squared distortion and BMU assignments for raw arrays."""
    total = 0.0
    bmus = np.empty(data.shape[0], dtype=np.int64)
    for lo in range(0, data.shape[0], _CHUNK_ROWS):
        chunk = data[lo : lo + _CHUNK_ROWS]
        dist = _distance_matrix(codebook, chunk)
        b = np.argmin(dist, axis=1)
        bmus[lo : lo + chunk.shape[0]] = b
        total += float((w[b] * dist).sum())
    return total / data.shape[0], bmus


def _batch_target(
    codebook: np.ndarray, data: np.ndarray, bmus: np.ndarray, w: np.ndarray
) -> np.ndarray:
    """Neighbourhood-weighted mean target of the classic batch update.

    Cells whose weighted denominator is zero keep their previous vector.
    """
    n_cells = codebook.shape[0]
    counts = np.zeros(n_cells)
    sums = np.zeros_like(codebook)
    np.add.at(counts, bmus, 1.0)
    np.add.at(sums, bmus, data)
    num = w @ sums
    den = w @ counts
    target = codebook.copy()
    nz = den > 0
    target[nz] = num[nz] / den[nz, None]
    return target


def _pca_linear_init(
    data: np.ndarray, rows: int, cols: int, rng: np.random.Generator
) -> np.ndarray:
    """Deterministic linear initialization along the top two principal axes.

    Falls back to small seeded noise around the mean when the covariance is
    degenerate (constant data, single sample).
    """
    n = data.shape[1]
    mean = data.mean(axis=0)
    codebook = np.tile(mean, (rows * cols, 1))
    if data.shape[0] < 2:
        return codebook + 1e-6 * rng.standard_normal(codebook.shape)
    cov = np.atleast_2d(np.cov(data - mean, rowvar=False, ddof=1))
    if not np.isfinite(cov).all() or float(np.abs(cov).max()) == 0.0:
        return codebook + 1e-6 * rng.standard_normal(codebook.shape)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    # Fix eigenvector signs so the init does not depend on LAPACK conventions.
    for k in range(vecs.shape[1]):
        j = int(np.argmax(np.abs(vecs[:, k])))
        if vecs[j, k] < 0:
            vecs[:, k] = -vecs[:, k]
    coords = GridTopology(rows, cols).coordinates()
    used_any = False
    for axis, extent in enumerate((rows, cols)):
        if axis >= n or vals[axis] <= 0:
            continue
        if extent == 1:
            continue
        span = np.linspace(-1.0, 1.0, extent)
        offset = span[coords[:, axis].astype(int)]
        codebook = codebook + np.outer(offset, vecs[:, axis] * 2.0 * np.sqrt(vals[axis]))
        used_any = True
    if not used_any and rows * cols > 1:
        codebook = codebook + 1e-6 * rng.standard_normal(codebook.shape)
    return codebook


def _damped_epoch(
    codebook: np.ndarray, data: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, float]:
    """One batch epoch with a monotonicity guard.

    Assign BMUs with the current codebook, build the weighted-mean target,
    then take the largest step toward it (alpha = 1, 1/2, 1/4, ...) whose
    average distortion does not exceed the pre-step value. If no step
    qualifies the codebook is left unchanged for this epoch.
    """
    dm_prev, bmus = _distortion_of(codebook, data, w)
    target = _batch_target(codebook, data, bmus, w)
    alpha = 1.0
    for _ in range(_BACKTRACK_TRIES):
        candidate = codebook + alpha * (target - codebook)
        dm_cand, _ = _distortion_of(candidate, data, w)
        if dm_cand <= dm_prev:
            return candidate, dm_cand
        alpha *= 0.5
    return codebook, dm_prev


def train_batch(
    data: np.ndarray, config: TrainConfig, data_fingerprint: str = ""
) -> SomModel:
    """Train a map on cleaned, normalized observations.

    Deterministic for identical data, config and seed. Requires at least as
    many observations as grid cells.
    """
    m = _as_matrix(data)
    rows, cols = config.rows, config.cols
    if rows is None or cols is None:
        rows, cols = default_grid(m.shape[0])
    topology = GridTopology(rows, cols)
    if m.shape[0] < topology.n_cells:
        raise InsufficientDataError(
            f"need at least {topology.n_cells} observations for a "
            f"{rows}x{cols} grid, got {m.shape[0]}"
        )
    rng = np.random.default_rng(config.seed)
    codebook = _pca_linear_init(m, rows, cols, rng)
    final_dm = float("nan")
    for sigma in sigma_schedule(config, rows, cols):
        w = neighborhood_weights(topology, float(sigma))
        codebook, final_dm = _damped_epoch(codebook, m, w)
    model = SomModel(
        topology=topology,
        codebook=codebook,
        sigma=config.sigma_final,
        training_meta=TrainingMeta(
            epochs=config.epochs,
            final_distortion=float("nan"),
            data_fingerprint=data_fingerprint,
        ),
    )
    # The schedule ends at sigma_final, so the last epoch's distortion is
    # already measured at the stored sigma.
    meta = replace(model.training_meta, final_distortion=final_dm)
    return replace(model, training_meta=meta, _weights_cache={})
