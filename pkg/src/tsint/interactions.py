"""Distance matrices, observed masks, and teacher-based selection of positives."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class SelectionState:
    """Running cutting value. ``d_cut`` is None until the first batch is seen."""

    beta: float = 0.9
    d_cut: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError(f"cutting-value momentum must be in [0, 1), got {self.beta}")


def pairwise_distances(z) -> np.ndarray:
    """Euclidean distances between all rows; exactly symmetric with a zero diagonal."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ContractError(f"embeddings must be 2-D, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ContractError("embeddings contain non-finite values")
    b = z.shape[0]
    iu, ju = np.triu_indices(b, k=1)
    upper = np.sqrt(np.sum((z[iu] - z[ju]) ** 2, axis=1))
    dist = np.zeros((b, b))
    dist[iu, ju] = upper
    dist[ju, iu] = upper
    return dist


def distances_backward(z, dist, grad_dist) -> np.ndarray:
    """Map dL/dD to dL/dz. Pairs at zero distance contribute no gradient."""
    z = np.asarray(z, dtype=np.float64)
    g = np.asarray(grad_dist, dtype=np.float64)
    g = g + g.T
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(dist > 0, g / dist, 0.0)
    np.fill_diagonal(w, 0.0)
    # sum_j w_ij (z_i - z_j)
    return w.sum(axis=1)[:, None] * z - w @ z


def observed_masks(labels) -> tuple[np.ndarray, np.ndarray]:
    """Positive mask (same label, diagonal included) and its complement."""
    labels = np.asarray(labels)
    pos = labels[:, None] == labels[None, :]
    return pos, ~pos


def _nearest_rank(n, q):
    # round() guards against products like 0.3 * 10 = 3.0000000000000004
    return max(1, math.ceil(round(q * n, 9)))


def positive_percentile(dist_teacher, pos, tau) -> float:
    """Nearest-rank tau-percentile of teacher distances on observed positives."""
    if not 0.0 < tau <= 1.0:
        raise ConfigError(f"tau must be in (0, 1], got {tau}")
    values = np.sort(np.asarray(dist_teacher)[np.asarray(pos, dtype=bool)])
    if values.size == 0:
        raise ContractError("no observed positive interactions in the batch")
    return float(values[_nearest_rank(values.size, tau) - 1])


def update_cut(state: SelectionState, d_b: float) -> SelectionState:
    if not (math.isfinite(d_b) and d_b >= 0):
        raise ContractError(f"batch percentile must be finite and >= 0, got {d_b}")
    if state.d_cut is None:
        return replace(state, d_cut=float(d_b))
    return replace(state, d_cut=state.beta * state.d_cut + (1.0 - state.beta) * d_b)


def selection_mask(dist_teacher, pos, d_cut) -> np.ndarray:
    """Keep observed positives whose teacher distance is at most ``d_cut``."""
    if d_cut is None:
        raise ContractError("cutting value unset; call update_cut first")
    return (np.asarray(dist_teacher) <= d_cut) & np.asarray(pos, dtype=bool)


def estimate_tau(rate: float, k: int) -> float:
    """Expected share of clean interactions among observed positives, diagonal included."""
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"noise rate must be in [0, 1], got {rate}")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    return ((1.0 - rate) ** 2 * (k * k - k) + k) / (k * k)


def select_interactions(dist_teacher, pos, tau, state: SelectionState):
    """One selection step: percentile, cutting-value update, mask.

    Returns ``(mask, new_state, d_b)``.
    """
    d_b = positive_percentile(dist_teacher, pos, tau)
    state = update_cut(state, d_b)
    return selection_mask(dist_teacher, pos, state.d_cut), state, d_b
