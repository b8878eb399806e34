"""Sample selection by class-center agreement with a memory bank (PRISM-style).

Only the selection mechanism is provided; the memory-bank loss term is not.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .losses import LossResult, contrastive_loss
from .interactions import observed_masks

log = logging.getLogger(__name__)


@dataclass
class PrismState:
    """Mutable selector state, owned by one training loop."""

    noise_rate: float = 0.5
    window: int = 10
    capacity: int = 8192
    temperature: float = 1.0
    batches_seen: int = 0
    q_history: deque = field(default_factory=deque)
    _emb: np.ndarray | None = field(default=None, repr=False)
    _lab: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigError(f"estimated noise rate must be in [0, 1), got {self.noise_rate}")
        if self.window < 1 or self.capacity < 1:
            raise ConfigError("window and capacity must be >= 1")
        if not self.temperature > 0:
            raise ConfigError("temperature must be > 0")
        self.q_history = deque(self.q_history, maxlen=self.window)

    @property
    def memory_size(self):
        return 0 if self._lab is None else self._lab.size

    @property
    def threshold(self):
        """Mean of the stored batch percentiles, or None before any were recorded."""
        return float(np.mean(self.q_history)) if self.q_history else None

    def push_memory(self, emb, labels):
        emb = np.asarray(emb, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if self._lab is None:
            self._emb, self._lab = emb.copy(), labels.copy()
        else:
            self._emb = np.concatenate([self._emb, emb])
            self._lab = np.concatenate([self._lab, labels])
        if self._lab.size > self.capacity:
            self._emb = self._emb[-self.capacity:]
            self._lab = self._lab[-self.capacity:]

    def centers(self):
        """Per-class mean of stored embeddings as ``(classes, centers)``."""
        if self._lab is None:
            return np.empty(0, dtype=np.int64), np.empty((0, 0))
        classes = np.unique(self._lab)
        cents = np.stack([self._emb[self._lab == c].mean(axis=0) for c in classes])
        return classes, cents


def clean_probability(z, labels, classes, centers, temperature=1.0):
    """Softmax over cosine similarity to class centers, read at each observed label.

    Samples whose class has no center get NaN.
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    out = np.full(labels.shape, np.nan)
    if len(classes) == 0:
        return out
    zn = z / np.linalg.norm(z, axis=1, keepdims=True)
    cn = centers / np.maximum(np.linalg.norm(centers, axis=1, keepdims=True), 1e-12)
    logits = zn @ cn.T / temperature
    logits -= logits.max(axis=1, keepdims=True)
    prob = np.exp(logits)
    prob /= prob.sum(axis=1, keepdims=True)
    col = {int(c): j for j, c in enumerate(classes)}
    for i, y in enumerate(labels):
        j = col.get(int(y))
        if j is not None:
            out[i] = prob[i, j]
    return out


def _percentile(values, q):
    values = np.sort(values)
    rank = max(1, math.ceil(round(q * values.size, 9)))
    return float(values[rank - 1])


def prism_select(z, labels, state: PrismState):
    """Return indices of samples judged clean and the (mutated) state.

    During the first ``window`` batches every sample is kept while the memory and
    percentile history fill up.
    """
    labels = np.asarray(labels)
    classes, cents = state.centers()
    p_clean = clean_probability(z, labels, classes, cents, state.temperature)
    known = ~np.isnan(p_clean)
    if not np.all(known) and state.batches_seen >= state.window:
        log.info("%d samples have no class center; kept unconditionally", int((~known).sum()))
    if np.any(known):
        state.q_history.append(_percentile(p_clean[known], state.noise_rate))

    m = state.threshold
    if state.batches_seen < state.window or m is None:
        keep = np.ones(labels.shape, dtype=bool)
    else:
        keep = ~known | (np.where(known, p_clean, 0.0) >= m)
    state.batches_seen += 1
    kept = np.flatnonzero(keep)
    state.push_memory(np.asarray(z)[kept], labels[kept])
    return kept, state


def prism_loss(dist, kept, labels, margin=0.5, q=1) -> LossResult:
    """Contrastive loss on the sub-batch of kept samples; gradient embedded in B x B."""
    dist = np.asarray(dist, dtype=np.float64)
    kept = np.asarray(kept, dtype=np.int64)
    grad = np.zeros_like(dist)
    if kept.size < 2:
        log.warning("fewer than 2 samples kept; loss set to 0")
        return LossResult(0.0, grad)
    sub = dist[np.ix_(kept, kept)]
    pos, neg = observed_masks(np.asarray(labels)[kept])
    res = contrastive_loss(sub, pos, neg, margin, q)
    grad[np.ix_(kept, kept)] = res.grad
    return LossResult(res.value, grad, res.pos_loss, res.neg_loss)
