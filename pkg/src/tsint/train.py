"""Training loop wiring data, embedder, selection methods and evaluation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .dataset import (BatchSampler, Dataset, SyntheticSpec, gen_synthetic,
                      inject_uniform_noise, load_dataset, split_per_class)
from .embedder import (Architecture, TeacherState, backward, ema_update, forward,
                       init_params, load_checkpoint, save_checkpoint, sgd_step)
from .errors import ContractError, NumericError
from .interactions import (SelectionState, distances_backward, observed_masks,
                           pairwise_distances, select_interactions)
from .losses import contrastive_loss, tsint_loss
from .metrics import MetricsReport, evaluate
from .prism import PrismState, prism_loss, prism_select
from .superloss import SuperLossState, superloss_wrap

log = logging.getLogger(__name__)

ITER_COLUMNS = ("iter", "loss", "pos_loss", "neg_loss", "d_cut", "sel_ratio",
                "sel_precision", "sel_recall", "extra1", "extra2")
EPOCH_COLUMNS = ("epoch", "p_at_1", "map_at_r", "mean_ap")

EXTRA_COLUMNS = {
    "contrastive": ("n_pos", "n_neg"),
    "tsint": ("n_selected", "d_b"),
    "superloss": ("mean_sigma_pos", "mean_sigma_neg"),
    "prism": ("n_kept", "threshold"),
}

LOSS_SCALING = "mean over positives + mean over negatives; constant 1/B^2 factor dropped"


@dataclass
class RunReport:
    config: dict
    iterations: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    final: MetricsReport | None = None
    wall_clock: float = 0.0
    version: str = __version__
    n_train: int = 0
    n_test: int = 0
    train_corrupted_fraction: float = 0.0
    params: object = None
    teacher_params: object = None


def clean_data(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    """Train and test splits before any label noise."""
    if cfg.train_path is not None:
        train, test = load_dataset(cfg.train_path), load_dataset(cfg.test_path)
        if train.d_in != test.d_in:
            raise ContractError("train and test feature dimensions differ")
        return train, test
    spec = SyntheticSpec(cfg.n_classes, cfg.per_class, cfg.d_in, cfg.separation,
                         cfg.within_std, cfg.data_seed)
    return split_per_class(gen_synthetic(spec), cfg.train_fraction, cfg.data_seed)


def prepare_data(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    """Train split with noise injected once, and the clean test split.

    With ``noise_rate`` 0 the training labels are used as stored, so files
    corrupted beforehand with ``tsint corrupt`` train as given.
    """
    train, test = clean_data(cfg)
    if cfg.noise_rate == 0:
        return train, test
    return inject_uniform_noise(train, cfg.noise_rate, cfg.noise_seed), test


def selection_quality(selected, pos, clean_labels):
    """Precision and recall of kept off-diagonal positives against clean-label agreement.

    Empty denominators count as 1.0.
    """
    off = ~np.eye(pos.shape[0], dtype=bool)
    true_pos = (clean_labels[:, None] == clean_labels[None, :]) & pos & off
    sel = selected & off
    n_sel, n_true = int(sel.sum()), int(true_pos.sum())
    hit = int((sel & true_pos).sum())
    precision = hit / n_sel if n_sel else 1.0
    recall = hit / n_true if n_true else 1.0
    return precision, recall


def _embed(params, feats):
    return forward(params, np.asarray(feats, dtype=np.float64))


def run_train(cfg: RunConfig, data: tuple[Dataset, Dataset] | None = None,
              checkpoint_dir=None) -> RunReport:
    """Train one model end to end. Fully determined by the config and its seeds.

    ``data`` overrides dataset preparation (used by sweeps that reshape data).
    On a non-finite loss the last good parameters are written to
    ``checkpoint_dir/last_good.nmlp`` (when given) before raising.
    """
    cfg = cfg.resolved()
    start = time.perf_counter()
    train, test = data if data is not None else prepare_data(cfg)
    if train.d_in != test.d_in:
        raise ContractError("train and test feature dimensions differ")

    arch = Architecture(train.d_in, cfg.d_out, cfg.hidden, cfg.nonlinear)
    params = init_params(arch, cfg.train_seed, cfg.init_scale)
    teacher = TeacherState(params.copy(), cfg.alpha)
    sampler = BatchSampler(train, cfg.batch_size, cfg.k, cfg.train_seed)
    sel_state = SelectionState(cfg.beta if cfg.dcut_ema else 0.0)
    sl_state = SuperLossState(cfg.superloss_lambda, cfg.superloss_mode,
                              cfg.superloss_smoothing)
    prism_state = PrismState(cfg.prism_rate, cfg.prism_window, cfg.prism_capacity,
                             cfg.prism_temperature)

    report = RunReport(config=cfg.to_dict(), n_train=len(train), n_test=len(test),
                       train_corrupted_fraction=train.corrupted_fraction)
    iters_per_epoch = max(1, len(train) // cfg.batch_size)
    feats = train.features.astype(np.float64)
    step = 0

    for epoch in range(1, cfg.epochs + 1):
        for _ in range(iters_per_epoch):
            batch = sampler.sample()
            x = feats[batch.indices]
            clean = train.clean_labels[batch.indices]
            z = forward(params, x)
            dist = pairwise_distances(z)
            pos, neg = observed_masks(batch.labels)
            selected = pos
            d_cut = None

            if cfg.method == "contrastive":
                res = contrastive_loss(dist, pos, neg, cfg.margin, cfg.q)
                extras = (int(pos.sum()), int(neg.sum()))
            elif cfg.method == "tsint":
                dist_t = pairwise_distances(forward(teacher.params, x))
                selected, sel_state, d_b = select_interactions(dist_t, pos, cfg.tau, sel_state)
                d_cut = sel_state.d_cut
                res = tsint_loss(dist, selected, neg, cfg.margin)
                extras = (int(selected.sum()), d_b)
            elif cfg.method == "superloss":
                sl, sl_state = superloss_wrap(dist, pos, neg, sl_state, cfg.margin, cfg.q)
                res = sl.loss
                extras = (sl.mean_sigma_pos, sl.mean_sigma_neg)
            else:
                kept, prism_state = prism_select(z, batch.labels, prism_state)
                res = prism_loss(dist, kept, batch.labels, cfg.margin, cfg.q)
                in_kept = np.zeros(len(z), dtype=bool)
                in_kept[kept] = True
                selected = pos & in_kept[:, None] & in_kept[None, :]
                thr = prism_state.threshold
                extras = (int(kept.size), thr if thr is not None else float("nan"))

            if not math.isfinite(res.value):
                _abort(params, checkpoint_dir, f"non-finite loss at iteration {step}")
            grad_z = distances_backward(z, dist, res.grad)
            try:
                params_next = sgd_step(params, backward(params, x, grad_z), cfg.lr)
            except NumericError as exc:
                _abort(params, checkpoint_dir, f"{exc} at iteration {step}")
            if not params_next.is_finite():
                _abort(params, checkpoint_dir, f"non-finite parameters at iteration {step}")
            params = params_next
            if cfg.teacher_ema:
                teacher = ema_update(teacher, params)

            precision, recall = selection_quality(selected, pos, clean)
            report.iterations.append((
                step, res.value, res.pos_loss, res.neg_loss, d_cut,
                float(selected.sum()) / float(pos.sum()), precision, recall,
                float(extras[0]), float(extras[1]),
            ))
            step += 1

        metrics = evaluate(_embed(params, test.features), test.clean_labels)
        report.epochs.append((epoch, metrics.precision_at_1, metrics.map_at_r, metrics.mean_ap))
        log.info("epoch %d: P@1=%.4f MAP@R=%.4f mAP=%.4f", epoch, metrics.precision_at_1,
                 metrics.map_at_r, metrics.mean_ap)

    report.final = (metrics if cfg.epochs else
                    evaluate(_embed(params, test.features), test.clean_labels))
    report.params = params
    report.teacher_params = teacher.params
    report.wall_clock = time.perf_counter() - start
    return report


def _abort(params, checkpoint_dir, message):
    if checkpoint_dir is not None:
        path = Path(checkpoint_dir) / "last_good.nmlp"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(params, path)
        message = f"{message}; last good parameters saved to {path}"
    raise NumericError(message)


def run_eval(checkpoint, dataset) -> MetricsReport:
    """Embed a dataset with a saved model and score it against clean labels."""
    params = load_checkpoint(checkpoint) if not hasattr(checkpoint, "tensors") else checkpoint
    data = load_dataset(dataset) if not isinstance(dataset, Dataset) else dataset
    if data.d_in != params.arch.d_in:
        raise ContractError(
            f"checkpoint expects d_in={params.arch.d_in}, dataset has {data.d_in}"
        )
    return evaluate(_embed(params, data.features), data.clean_labels)
