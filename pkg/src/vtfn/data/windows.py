"""Cutting trials into classifier windows and resizing frames."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..model import GraspWindow


def window_starts(n_visual: int, n_tactile: int, m: int, stride: int) -> list[int]:
    """Visual start indices whose visual and tactile spans both fit in the trial."""
    if m < 3:
        raise ValueError("window length m must be >= 3")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    last_v = n_visual - 1 - (m - 1) * stride
    last_t = (n_tactile - 1 - (2 * m - 1) * stride) // 2
    last = min(last_v, last_t)
    return list(range(last + 1)) if last >= 0 else []


def capped(starts: list[int], cap: int | None) -> list[int]:
    """Evenly strided subset of at most ``cap`` starts."""
    if cap is None or len(starts) <= cap:
        return list(starts)
    idx = np.round(np.linspace(0, len(starts) - 1, cap)).astype(int)
    return [starts[i] for i in idx]


def visual_indices(start: int, m: int, stride: int) -> np.ndarray:
    return start + stride * np.arange(m)


def tactile_indices(start: int, m: int, stride: int) -> np.ndarray:
    # aligned to twice the visual start so both streams cover the same interval
    return 2 * start + stride * np.arange(2 * m)


@lru_cache(maxsize=16)
def _bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    scale = n_in / n_out
    src = np.clip((np.arange(n_out) + 0.5) * scale - 0.5, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    R = np.zeros((n_out, n_in))
    R[np.arange(n_out), i0] += 1 - frac
    R[np.arange(n_out), i1] += frac
    return R


def resize_frames(frames: np.ndarray, size: int) -> np.ndarray:
    """Bilinear (half-pixel centred) resize of (..., S, S) frames; identity when size matches."""
    S = frames.shape[-1]
    if size == S:
        return np.array(frames, dtype=np.float32)
    if size > S:
        raise ValueError(f"cannot upsample {S} px frames to {size}")
    R = _bilinear_matrix(S, size)
    out = np.einsum("ij,...jk,lk->...il", R, frames.astype(np.float64), R, optimize=True)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def make_window(visual, tactile, label, start, m, stride, size, provenance) -> GraspWindow:
    v = np.asarray(visual[:, visual_indices(start, m, stride)])
    t = np.asarray(tactile[:, tactile_indices(start, m, stride)], dtype=np.float32)
    return GraspWindow(resize_frames(v, size), t, int(label), tuple(provenance))


def window_trial(rec, m: int, stride: int, size: int, cap: int | None = None,
                 trial_id: int = 0) -> list[GraspWindow]:
    """All (or ``cap`` evenly spaced) windows of a trial; empty when the trial is too short."""
    if stride not in (1, 2, 3):
        raise ValueError("stride must be 1, 2 or 3")
    starts = capped(window_starts(rec.n_visual, rec.n_tactile, m, stride), cap)
    return [make_window(rec.visual, rec.tactile, rec.label, i, m, stride, size,
                        (rec.object_id, trial_id, i)) for i in starts]
