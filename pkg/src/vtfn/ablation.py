"""Sweep harness over sequence length, frame stride, image size and modality."""
from __future__ import annotations

import csv
import itertools
import logging
import time
from dataclasses import dataclass
from pathlib import Path

from .metrics import confusion_csv
from .model import IMAGE_SIZES, MODALITIES, ModelConfig
from .train import train

log = logging.getLogger(__name__)

RESULTS_HEADER = ["cell_id", "modality", "m", "stride", "img", "params",
                  "macro_p", "macro_r", "macro_f1", "seconds"]
BIG_IMAGES = (224, 512)


@dataclass(frozen=True)
class AblationGrid:
    ms: tuple[int, ...] = (5,)
    strides: tuple[int, ...] = (1,)
    images: tuple[int, ...] = (64,)
    modalities: tuple[str, ...] = ("fusion",)
    epochs: int = 15
    seeds: tuple[int, ...] = (0,)
    lr: float = 1e-4
    batch: int = 8
    cap: int | None | str = "manifest"
    allow_big: bool = False

    def __post_init__(self):
        axes = dict(ms=self.ms, strides=self.strides, images=self.images,
                    modalities=self.modalities, seeds=self.seeds)
        for name, values in axes.items():
            if not values:
                raise ValueError(f"ablation axis {name} is empty")
        if not all(3 <= m <= 8 for m in self.ms):
            raise ValueError(f"sequence lengths must lie in 3..8, got {self.ms}")
        if not set(self.strides) <= {1, 2, 3}:
            raise ValueError(f"strides must be 1, 2 or 3, got {self.strides}")
        if not set(self.images) <= set(IMAGE_SIZES):
            raise ValueError(f"image sizes must be among {IMAGE_SIZES}, got {self.images}")
        if not self.allow_big and set(self.images) & set(BIG_IMAGES):
            raise ValueError("224/512 px cells need allow_big (--big on the command line)")
        if not set(self.modalities) <= set(MODALITIES):
            raise ValueError(f"modalities must be among {MODALITIES}, got {self.modalities}")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")

    def cells(self):
        for modality, m, stride, img, seed in itertools.product(
                self.modalities, self.ms, self.strides, self.images, self.seeds):
            yield Cell(modality, m, stride, img, seed)


@dataclass(frozen=True)
class Cell:
    modality: str
    m: int
    stride: int
    img: int
    seed: int

    @property
    def cell_id(self) -> str:
        return f"{self.modality}-m{self.m}-s{self.stride}-img{self.img}-seed{self.seed}"

    def config(self) -> ModelConfig:
        return ModelConfig(self.modality, self.m, image_size=self.img)


def read_results(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_ablation(grid: AblationGrid, manifest, out_dir) -> list[dict]:
    """Train and evaluate every cell; skips cells already in results.csv.

    A failing cell is logged to failures.csv and the sweep moves on.
    """
    out = Path(out_dir)
    (out / "confusion").mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(exist_ok=True)
    results = out / "results.csv"
    failures = out / "failures.csv"
    done = {row["cell_id"] for row in read_results(results)}
    if not results.exists():
        results.write_text(",".join(RESULTS_HEADER) + "\n")
    for cell in grid.cells():
        if cell.cell_id in done:
            log.info("skip %s (already in results)", cell.cell_id)
            continue
        t0 = time.perf_counter()
        try:
            res = train(manifest, cell.config(), epochs=grid.epochs, lr=grid.lr, seed=cell.seed,
                        log_out=out / "logs" / f"{cell.cell_id}.csv", stride=cell.stride,
                        batch=grid.batch, cap=grid.cap)
        except Exception as exc:  # recorded, sweep continues
            log.error("cell %s failed: %s", cell.cell_id, exc)
            new = not failures.exists()
            with open(failures, "a") as fh:
                if new:
                    fh.write("cell_id,error\n")
                fh.write(f"{cell.cell_id},{type(exc).__name__}: {str(exc).replace(',', ';')}\n")
            continue
        seconds = time.perf_counter() - t0
        best = res.best
        (out / "confusion" / f"{cell.cell_id}.csv").write_text(confusion_csv(best.confusion))
        row = [cell.cell_id, cell.modality, cell.m, cell.stride, cell.img, res.model.param_count(),
               f"{best.macro_precision:.4f}", f"{best.macro_recall:.4f}", f"{best.macro_f1:.4f}",
               f"{seconds:.2f}"]
        with open(results, "a") as fh:
            fh.write(",".join(str(x) for x in row) + "\n")
    return read_results(results)
