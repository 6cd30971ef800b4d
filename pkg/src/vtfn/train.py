"""Training loop and evaluation over a manifest's train/test split."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data.checkpoint import save_checkpoint
from .data.dataset import DatasetManifest, WindowIndex, batched, epoch_order
from .metrics import Metrics
from .model import ModelConfig, VTFN

log = logging.getLogger(__name__)

LOG_HEADER = "epoch,train_loss,test_macro_f1"
DEFAULT_LR = 1e-4
PUBLISHED_LR = 1e-7  # published preset; far too slow for desk-scale epoch budgets
EVAL_BATCH = 16


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    final: Metrics
    best: Metrics
    best_epoch: int
    losses: list[float]
    model: VTFN  # weights after the last epoch


def epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, 0xE90C]).generate_state(1)[0])


def predict_index(model: VTFN, index: WindowIndex, batch: int = EVAL_BATCH) -> np.ndarray:
    preds = []
    for chunk in batched(np.arange(len(index)), batch):
        preds.append(model.predict(index.windows(chunk)))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=int)


def evaluate(model: VTFN, manifest: DatasetManifest | WindowIndex, split: str = "test",
             stride: int = 1) -> Metrics:
    if isinstance(manifest, WindowIndex):
        index = manifest
    else:
        cfg = model.config
        index = WindowIndex(manifest, split, cfg.m, stride, cfg.image_size)
    if len(index) == 0:
        raise ValueError(f"split {split!r} has no windows")
    return Metrics.from_predictions(index.labels(), predict_index(model, index))


def train(manifest: DatasetManifest, config: ModelConfig, epochs: int = 15, lr: float = DEFAULT_LR,
          seed: int = 0, ckpt_out=None, log_out=None, stride: int = 1, batch: int = 8,
          cap: int | None | str = "manifest") -> TrainResult:
    """Train from Xavier init; log one CSV row per epoch; keep the best-test-F1 checkpoint."""
    model = VTFN(config, seed=seed, lr=lr)
    train_idx = WindowIndex(manifest, "train", config.m, stride, config.image_size, cap)
    test_idx = WindowIndex(manifest, "test", config.m, stride, config.image_size, cap)
    if len(train_idx) == 0:
        raise ValueError("train split has no windows")
    if log_out:
        Path(log_out).write_text(LOG_HEADER + "\n")
    best, best_epoch, final = None, -1, None
    losses = []
    for epoch in range(1, epochs + 1):
        order = epoch_order(len(train_idx), "train", epoch_seed(seed, epoch))
        total, count = 0.0, 0
        for b, chunk in enumerate(batched(order, batch)):
            windows = train_idx.windows(chunk)
            try:
                loss = model.train_step(windows)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"epoch {epoch} batch {b}: {exc}") from exc
            total += loss * len(windows)
            count += len(windows)
        mean_loss = total / count
        losses.append(mean_loss)
        final = evaluate(model, test_idx)
        row = f"{epoch},{mean_loss:.6f},{final.macro_f1:.4f}"
        if log_out:
            with open(log_out, "a") as fh:
                fh.write(row + "\n")
        log.info("epoch %d  loss %.4f  test %s", epoch, mean_loss, final.summary())
        if best is None or final.macro_f1 > best.macro_f1:
            best, best_epoch = final, epoch
            if ckpt_out:
                save_checkpoint(model, ckpt_out)
    return TrainResult(final, best, best_epoch, losses, model)
