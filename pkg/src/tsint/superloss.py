"""Confidence-weighted interaction loss with closed-form per-interaction confidence.

For an input loss ``l`` with threshold ``tau`` and regularizer ``lam`` the
confidence minimizing ``(l - tau) * sigma + lam * log(sigma)**2`` is
``exp(-W0(max(-2/e, (l - tau) / lam) / 2))`` where ``W0`` is the principal
branch of the Lambert W function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ContractError
from .losses import LossResult, interaction_loss_grad, interaction_losses

INV_E = math.exp(-1.0)
MODES = ("global", "exp")


def _initial_guess(x):
    # branch-point series near -1/e, log1p for moderate x, asymptotic for large x
    w = np.empty_like(x)
    near = x < -0.25
    p = np.sqrt(np.maximum(2.0 * (math.e * x[near] + 1.0), 0.0))
    w[near] = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    mid = ~near & (x <= 3.0)
    w[mid] = np.log1p(x[mid]) * 0.75
    big = x > 3.0
    lx = np.log(x[big])
    w[big] = lx - np.log(lx)
    return w


def _halley(x, w, max_iter):
    # on w * exp(w) - x; used for x <= e where exp(w) cannot overflow
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(max_iter):
            ew = np.exp(w)
            f = w * ew - x
            wp1 = w + 1.0
            denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
            step = np.where((wp1 != 0) & np.isfinite(denom) & (denom != 0), f / denom, 0.0)
            w_new = np.maximum(w - step, -1.0)
            done = np.abs(w_new - w) <= 1e-15 * (1.0 + np.abs(w_new))
            w = w_new
            if np.all(done):
                break
    return w


def _log_newton(x, w, max_iter):
    # on w + log(w) - log(x); overflow-free for large x (w > 1 here)
    lx = np.log(x)
    for _ in range(max_iter):
        w_new = w - (w + np.log(w) - lx) / (1.0 + 1.0 / w)
        done = np.abs(w_new - w) <= 1e-15 * np.abs(w_new)
        w = w_new
        if np.all(done):
            break
    return w


def lambert_w0(x, max_iter=50):
    """Principal branch of Lambert W (w >= -1) by Halley iteration.

    Accepts scalars or arrays. Inputs within 1e-12 below -1/e are clamped to the
    branch point.
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr).copy()
    if np.any(np.isnan(arr)) or np.any(arr < -INV_E - 1e-12):
        raise ContractError("Lambert W0 is undefined below -1/e")
    arr = np.maximum(arr, -INV_E)
    w = _initial_guess(arr)
    big = arr > math.e
    small = ~big
    if np.any(small):
        w[small] = _halley(arr[small], w[small], max_iter)
    if np.any(big):
        w[big] = _log_newton(arr[big], w[big], max_iter)
    w[arr == 0] = 0.0
    w[arr == -INV_E] = -1.0
    return float(w[0]) if scalar else w


def superloss_sigma(loss, tau, lam):
    """Closed-form optimal confidence; 1 at ``loss == tau``, decreasing in ``loss``."""
    if not lam > 0:
        raise ConfigError(f"lambda must be > 0, got {lam}")
    beta = (np.asarray(loss, dtype=np.float64) - tau) / lam
    y = 0.5 * np.maximum(-2.0 * INV_E, beta)
    out = np.exp(-lambert_w0(y))
    return float(out) if np.ndim(out) == 0 else out


def superloss_objective(loss, tau, lam):
    """Value of the minimized objective ``(l - tau) sigma* + lam log(sigma*)^2``."""
    sigma = superloss_sigma(loss, tau, lam)
    return (np.asarray(loss) - tau) * sigma + lam * np.log(sigma) ** 2


@dataclass(frozen=True)
class SuperLossState:
    lam: float = 0.1
    mode: str = "global"
    smoothing: float = 0.9
    tau_pos: float | None = None
    tau_neg: float | None = None
    count_pos: int = 0
    count_neg: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")
        if self.mode not in MODES:
            raise ConfigError(f"threshold mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigError(f"smoothing must be in [0, 1), got {self.smoothing}")


def _update_threshold(mode, smoothing, tau, count, values):
    if values.size == 0:
        return tau, count
    mean = float(values.mean())
    if tau is None:
        return mean, values.size
    if mode == "global":
        total = count + values.size
        return tau + (float(values.sum()) - values.size * tau) / total, total
    return smoothing * tau + (1.0 - smoothing) * mean, count + values.size


@dataclass(frozen=True)
class SuperLossResult:
    loss: LossResult
    sigma: np.ndarray  # per-interaction weight matrix
    mean_sigma_pos: float
    mean_sigma_neg: float


def superloss_wrap(dist, pos, neg, state: SuperLossState, margin=0.5, q=1):
    """Weight each interaction loss by its optimal confidence and aggregate.

    Positives use the threshold ``tau_pos``, negatives ``tau_neg``. The reported
    value is ``mean_P(sigma * l) + mean_N(sigma * l)``; weights are treated as
    constants in the gradient, which equals the gradient of the minimized
    objective. Thresholds are updated after weighting; on the first batch they
    start at that batch's mean loss. Diagonal entries (always zero loss) do not
    feed the positive threshold.

    Returns ``(SuperLossResult, new_state)``.
    """
    dist = np.asarray(dist, dtype=np.float64)
    pos = np.asarray(pos, dtype=bool)
    neg = np.asarray(neg, dtype=bool)
    losses = interaction_losses(dist, pos, margin, q)
    dl = interaction_loss_grad(dist, pos, margin, q)

    off_diag = ~np.eye(dist.shape[0], dtype=bool)
    pos_vals = losses[pos & off_diag]
    neg_vals = losses[neg]
    tau_pos = state.tau_pos if state.tau_pos is not None else (
        float(pos_vals.mean()) if pos_vals.size else 0.0)
    tau_neg = state.tau_neg if state.tau_neg is not None else (
        float(neg_vals.mean()) if neg_vals.size else 0.0)

    sigma = np.ones_like(dist)
    sigma[pos] = superloss_sigma(losses[pos], tau_pos, state.lam)
    sigma[neg] = superloss_sigma(losses[neg], tau_neg, state.lam)

    grad = np.zeros_like(dist)
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    pos_loss = neg_loss = 0.0
    if n_pos:
        pos_loss = float(np.sum(sigma[pos] * losses[pos]) / n_pos)
        grad[pos] = sigma[pos] * dl[pos] / n_pos
    if n_neg:
        neg_loss = float(np.sum(sigma[neg] * losses[neg]) / n_neg)
        grad[neg] = sigma[neg] * dl[neg] / n_neg

    new_tp, new_cp = _update_threshold(state.mode, state.smoothing, state.tau_pos,
                                       state.count_pos, pos_vals)
    new_tn, new_cn = _update_threshold(state.mode, state.smoothing, state.tau_neg,
                                       state.count_neg, neg_vals)
    new_state = replace(state, tau_pos=new_tp, tau_neg=new_tn,
                        count_pos=new_cp, count_neg=new_cn)
    result = SuperLossResult(
        LossResult(pos_loss + neg_loss, grad, pos_loss, neg_loss),
        sigma,
        float(sigma[pos & off_diag].mean()) if np.any(pos & off_diag) else 1.0,
        float(sigma[neg].mean()) if n_neg else 1.0,
    )
    return result, new_state
