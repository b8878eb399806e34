"""Contrastive margin loss over interaction masks and its selected-positive variant."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossResult:
    value: float
    grad: np.ndarray  # dL/dD, same shape as D
    pos_loss: float = 0.0
    neg_loss: float = 0.0


def _masked_margin_loss(dist, pos, neg, margin, q):
    dist = np.asarray(dist, dtype=np.float64)
    pos = np.asarray(pos, dtype=bool)
    neg = np.asarray(neg, dtype=bool)
    if dist.shape != pos.shape or dist.shape != neg.shape:
        raise ContractError("distance matrix and masks must share a shape")
    if not margin > 0:
        raise ConfigError(f"margin must be > 0, got {margin}")
    if q not in (1, 2):
        raise ConfigError(f"distance exponent must be 1 or 2, got {q}")

    grad = np.zeros_like(dist)
    n_pos = int(pos.sum())
    n_neg = int(neg.sum())

    pos_loss = 0.0
    if n_pos:
        d = dist[pos]
        pos_loss = float(np.sum(d ** q) / n_pos)
        grad[pos] = (1.0 if q == 1 else 2.0 * d) / n_pos
    else:
        log.warning("no positive interactions selected; positive term set to 0")

    neg_loss = 0.0
    if n_neg:
        hinge = np.maximum(0.0, margin - dist[neg])
        neg_loss = float(np.sum(hinge ** q) / n_neg)
        active = hinge > 0
        g = np.zeros_like(hinge)
        g[active] = -(1.0 if q == 1 else 2.0 * hinge[active]) / n_neg
        grad[neg] = g
    else:
        log.warning("no negative interactions in batch; negative term set to 0")

    return LossResult(pos_loss + neg_loss, grad, pos_loss, neg_loss)


def contrastive_loss(dist, pos, neg, margin=0.5, q=1) -> LossResult:
    """Mean of D^q over positives plus mean of max(0, m - D)^q over negatives."""
    return _masked_margin_loss(dist, pos, neg, margin, q)


def tsint_loss(dist, pos_selected, neg, margin=0.5) -> LossResult:
    """Margin loss on the main model's distances with only the selected positives."""
    return _masked_margin_loss(dist, pos_selected, neg, margin, 1)


def interaction_losses(dist, pos, margin=0.5, q=1) -> np.ndarray:
    """Per-entry loss matrix: D^q on positives, hinge^q elsewhere."""
    dist = np.asarray(dist, dtype=np.float64)
    return np.where(pos, dist ** q, np.maximum(0.0, margin - dist) ** q)


def interaction_loss_grad(dist, pos, margin=0.5, q=1) -> np.ndarray:
    """Elementwise derivative of ``interaction_losses`` with respect to D."""
    dist = np.asarray(dist, dtype=np.float64)
    hinge = np.maximum(0.0, margin - dist)
    g_pos = np.ones_like(dist) if q == 1 else 2.0 * dist
    g_neg = np.where(hinge > 0, -1.0 if q == 1 else -2.0 * hinge, 0.0)
    return np.where(pos, g_pos, g_neg)
