"""Grid sweeps over noise rate, selection tau, or class-subset size."""

from __future__ import annotations

import dataclasses
import logging
import re
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dataset import inject_uniform_noise, restrict_classes
from .errors import ConfigError
from .interactions import estimate_tau
from .report import emit_report, fmt
from .train import clean_data, run_train

log = logging.getLogger(__name__)

AXES = ("noise", "tau", "subset")
SWEEP_COLUMNS = ("axis", "value", "method", "noise_rate", "tau", "p_at_1", "map_at_r",
                 "mean_ap", "sel_precision", "sel_recall", "ratio", "status")
SWEEP_FILE = "sweep.csv"
DEFAULT_GRIDS = {
    "noise": ("0", "0.1", "0.2", "0.5", "0.7"),
    "tau": ("auto-0.1", "auto", "auto+0.1"),
    "subset": ("20", "40"),
}

_AUTO = re.compile(r"^auto(?:([+-])(\d*\.?\d+))?$")


def resolve_tau_token(token, noise_rate, k) -> float:
    """Turn ``0.4``, ``auto``, ``auto+0.1`` or ``auto-0.05`` into a tau value."""
    token = str(token).strip()
    match = _AUTO.match(token)
    if match is None:
        try:
            return float(token)
        except ValueError:
            raise ConfigError(f"bad tau grid entry {token!r}") from None
    value = estimate_tau(noise_rate, k)
    if match.group(1):
        delta = float(match.group(2))
        value += delta if match.group(1) == "+" else -delta
    return value


def parse_grid(axis, grid):
    if axis not in AXES:
        raise ConfigError(f"sweep axis must be one of {AXES}, got {axis!r}")
    if grid is None or len(grid) == 0:
        grid = DEFAULT_GRIDS[axis]
    if isinstance(grid, str):
        grid = [g for g in grid.split(",") if g.strip()]
    out = []
    for g in grid:
        try:
            if axis == "noise":
                out.append(float(g))
            elif axis == "subset":
                out.append(int(g))
            else:
                out.append(str(g).strip())
        except ValueError:
            raise ConfigError(f"bad {axis} grid entry {g!r}") from None
    return out


def _mean_selection(report):
    if not report.iterations:
        return float("nan"), float("nan")
    arr = np.array([(row[6], row[7]) for row in report.iterations], dtype=float)
    return float(arr[:, 0].mean()), float(arr[:, 1].mean())


def _row(axis, value, cfg, report=None, ratio=None, error=None):
    row = dict.fromkeys(SWEEP_COLUMNS)
    row.update(axis=axis, value=value, method=cfg.method, noise_rate=cfg.noise_rate,
               tau=cfg.tau if cfg.method == "tsint" else None, ratio=ratio)
    if report is not None:
        prec, rec = _mean_selection(report)
        row.update(p_at_1=report.final.precision_at_1, map_at_r=report.final.map_at_r,
                   mean_ap=report.final.mean_ap, sel_precision=prec, sel_recall=rec,
                   status="ok")
    else:
        row["status"] = f"error: {error}".replace(",", ";").replace("\n", " ")
    return row


def _run_point(cfg, data, run_dir):
    report = run_train(cfg, data=data, checkpoint_dir=run_dir)
    if run_dir is not None:
        emit_report(report, run_dir)
    return report


def run_sweep(base: RunConfig, axis: str, grid=None, methods=None, out_dir=None):
    """Run every grid point for every method; returns a list of row dicts.

    All points share ``data_seed``. Noise-axis points use ``noise_seed + index``;
    the other axes keep ``noise_seed`` fixed so only the swept value changes.
    A failing point is recorded in its row and the sweep continues.
    """
    auto_tau = base.tau == "auto"
    base = base.resolved()
    values = parse_grid(axis, grid)
    methods = list(methods or [base.method])
    out = Path(out_dir) if out_dir is not None else None
    rows = []
    clean_train, clean_test = clean_data(base)

    for i, value in enumerate(values):
        for method in methods:
            run_dir = out / f"{axis}_{i:02d}_{method}" if out is not None else None
            cfg = dataclasses.replace(base, method=method)
            try:
                if axis == "noise":
                    cfg = dataclasses.replace(cfg, noise_rate=value, noise_seed=base.noise_seed + i)
                    cfg = dataclasses.replace(cfg, tau="auto" if auto_tau else base.tau,
                                              prism_rate=min(value, 0.99)).resolved()
                    train = inject_uniform_noise(clean_train, value, cfg.noise_seed)
                    rows.append(_row(axis, value, cfg, _run_point(cfg, (train, clean_test), run_dir)))
                elif axis == "tau":
                    tau = resolve_tau_token(value, base.noise_rate, base.k)
                    cfg = dataclasses.replace(cfg, tau=tau).resolved()
                    train = inject_uniform_noise(clean_train, cfg.noise_rate, cfg.noise_seed)
                    rows.append(_row(axis, value, cfg, _run_point(cfg, (train, clean_test), run_dir)))
                else:
                    rows.extend(_subset_rows(cfg, value, clean_train, clean_test, run_dir,
                                             auto_tau))
            except Exception as exc:  # noqa: BLE001 - recorded in the sweep table
                log.error("sweep point %s=%s method=%s failed: %s", axis, value, method, exc)
                rows.append(_row(axis, value, cfg, error=exc))

    if out is not None:
        write_sweep_csv(rows, out / SWEEP_FILE)
    return rows


def _subset_rows(cfg, n_classes, clean_train, clean_test, run_dir, auto_tau):
    train = restrict_classes(clean_train, n_classes)
    test = restrict_classes(clean_test, n_classes)
    clean_cfg = dataclasses.replace(cfg, noise_rate=0.0, prism_rate=0.0,
                                    tau="auto" if auto_tau else cfg.tau).resolved()
    noisy_cfg = cfg
    base_dir = None if run_dir is None else run_dir.with_name(run_dir.name + "_r0")
    clean_report = _run_point(clean_cfg, (train, test), base_dir)
    noisy_train = inject_uniform_noise(train, cfg.noise_rate, cfg.noise_seed)
    noisy_report = _run_point(noisy_cfg, (noisy_train, test), run_dir)
    p0 = clean_report.final.precision_at_1
    ratio = noisy_report.final.precision_at_1 / p0 if p0 > 0 else float("nan")
    return [
        _row("subset", n_classes, clean_cfg, clean_report, 1.0),
        _row("subset", n_classes, noisy_cfg, noisy_report, ratio),
    ]


def write_sweep_csv(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        cells = []
        for col in SWEEP_COLUMNS:
            v = row[col]
            cells.append(v if isinstance(v, str) else fmt(v))
        lines.append(",".join(cells))
    path.write_bytes(("\n".join(lines) + "\n").encode())
