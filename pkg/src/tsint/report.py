"""Deterministic run output: manifest.json, iters.csv, epochs.csv, model.nmlp."""

from __future__ import annotations

import json
import math
from pathlib import Path

from .embedder import save_checkpoint
from .train import EPOCH_COLUMNS, EXTRA_COLUMNS, ITER_COLUMNS, LOSS_SCALING, RunReport

MANIFEST = "manifest.json"
ITERS = "iters.csv"
EPOCHS = "epochs.csv"
CHECKPOINT = "model.nmlp"


def fmt(value) -> str:
    """Shortest round-trip text for a CSV cell; empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_bytes(("\n".join(lines) + "\n").encode())


def manifest(report: RunReport) -> dict:
    """Structured run description. Wall-clock time is left out so files stay reproducible."""
    method = report.config["method"]
    final = report.final
    return {
        "version": report.version,
        "config": report.config,
        "data": {
            "n_train": report.n_train,
            "n_test": report.n_test,
            "train_corrupted_fraction": report.train_corrupted_fraction,
        },
        "loss_scaling": LOSS_SCALING,
        "iters_columns": list(ITER_COLUMNS),
        "extra_columns": {"extra1": EXTRA_COLUMNS[method][0],
                          "extra2": EXTRA_COLUMNS[method][1]},
        "epochs_columns": list(EPOCH_COLUMNS),
        "n_iterations": len(report.iterations),
        "final_metrics": None if final is None else {
            "precision_at_1": final.precision_at_1,
            "map_at_r": final.map_at_r,
            "mean_ap": final.mean_ap,
            "n_queries": final.n_queries,
            "n_excluded": final.n_excluded,
        },
    }


def emit_report(report: RunReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / MANIFEST, out / ITERS, out / EPOCHS]
        text = json.dumps(manifest(report), indent=2, allow_nan=True) + "\n"
        paths[0].write_bytes(text.encode())
        _write_csv(paths[1], ITER_COLUMNS, report.iterations)
        _write_csv(paths[2], EPOCH_COLUMNS, report.epochs)
        if report.params is not None:
            paths.append(out / CHECKPOINT)
            save_checkpoint(report.params, paths[-1])
    except OSError as exc:
        raise OSError(f"cannot write run report to {out}: {exc}") from exc
    return paths
