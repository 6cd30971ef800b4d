"""Procedural wrist-camera frames and 4x4 three-axis taxel frames."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .contact import G, ContactOutcome, ObjectSpec

FIELD_OF_VIEW_MM = 140.0
BACKGROUND = 0.5
PIXEL_NOISE = 0.02
FINGER_COLUMNS_MM = (60.0, 66.0)  # inner/outer edge of each finger bar from the image centre
FINGER_SHADE = 0.2
TEXTURE_CELL_MM = 4.0
TEXTURE_CONTRAST = 0.15


def px_per_mm(S: int) -> float:
    return S / FIELD_OF_VIEW_MM


@lru_cache(maxsize=64)
def _texture_lattice(seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.random((41, 41))  # covers +-80 mm at 4 mm spacing


def _value_noise(seed: int, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear value noise at object-relative coordinates (mm)."""
    lat = _texture_lattice(seed)
    gx = np.clip(u / TEXTURE_CELL_MM + 20.0, 0, 39.999)
    gy = np.clip(v / TEXTURE_CELL_MM + 20.0, 0, 39.999)
    x0 = gx.astype(int)
    y0 = gy.astype(int)
    fx, fy = gx - x0, gy - y0
    top = lat[y0, x0] * (1 - fx) + lat[y0, x0 + 1] * fx
    bot = lat[y0 + 1, x0] * (1 - fx) + lat[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


def object_axes_px(obj: ObjectSpec, rho: float, S: int) -> tuple[float, float]:
    """Horizontal and vertical semi-axes: squeezed across, bulging along."""
    ppm = px_per_mm(S)
    r = obj.d0 / 2.0
    return r * (1.0 - rho) * ppm, r * (1.0 + rho / 2.0) * ppm


def render_visual(obj: ObjectSpec, rho: float, z_offset_mm: float, S: int,
                  frame_seed, noise: bool = True) -> np.ndarray:
    """One (3, S, S) frame in [0, 1]: object ellipse between two static finger bars."""
    if not 0 <= rho < 1:
        raise ValueError(f"deformation fraction {rho} outside [0, 1)")
    if S < 16:
        raise ValueError("image size must be at least 16 px")
    ppm = px_per_mm(S)
    c = np.arange(S) + 0.5
    x = c[None, :] - S / 2.0
    y = c[:, None] - S / 2.0
    img = np.full((3, S, S), BACKGROUND)

    ax = np.abs(x[0]) / ppm
    finger = (ax >= FINGER_COLUMNS_MM[0]) & (ax <= FINGER_COLUMNS_MM[1])
    img[:, :, finger] = FINGER_SHADE

    a, b = object_axes_px(obj, rho, S)
    dy, dx = np.broadcast_arrays(y - z_offset_mm * ppm, x)
    r = np.sqrt((dx / a) ** 2 + (dy / b) ** 2)
    grad = np.sqrt((dx / a**2) ** 2 + (dy / b**2) ** 2) / np.maximum(r, 1e-9)
    sd = (r - 1.0) / np.maximum(grad, 1e-9)  # approximate signed distance, px
    cover = np.clip(0.5 - sd, 0.0, 1.0)

    tex = _value_noise(obj.texture_seed, dx / ppm, dy / ppm)
    shade = np.asarray(obj.albedo)[:, None, None] + TEXTURE_CONTRAST * (tex[None] - 0.5)
    img = img * (1.0 - cover) + shade * cover
    if noise:
        rng = np.random.default_rng(frame_seed)
        img = img + rng.normal(0.0, PIXEL_NOISE, img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


TAXELS = 4


def footprint(rho: float) -> np.ndarray:
    """Normalised Gaussian pressure footprint; widens as the object flattens."""
    sigma = 0.6 + 1.2 * rho
    i = np.arange(TAXELS) - (TAXELS - 1) / 2.0
    d2 = i[:, None] ** 2 + i[None, :] ** 2
    w = np.exp(-d2 / (2 * sigma**2))
    return w / w.sum()


def stick_slip_frequency(outcome: ContactOutcome, lift_speed: float = 10.0) -> float:
    return 8.0 + 40.0 * outcome.slip_velocity / lift_speed


def shear_load(outcome: ContactOutcome, obj: ObjectSpec, t: float, lift_speed: float = 10.0) -> float:
    """Total tangential (y) force on the sensorized finger at time t."""
    if not outcome.slips:
        return min(obj.mass * G / 2.0, obj.mu * outcome.N)
    # sawtooth: shear ramps up while stuck, drops on release
    phase = (stick_slip_frequency(outcome, lift_speed) * t) % 1.0
    return obj.mu * outcome.N * (2.0 * phase - 1.0)


def taxel_noise(outcome: ContactOutcome) -> float:
    return max(0.005, 0.01 * outcome.N)


def render_tactile(outcome: ContactOutcome, obj: ObjectSpec, t: float, frame_seed,
                   lift_speed: float = 10.0) -> np.ndarray:
    """One (3, 4, 4) taxel frame, channels (x shear, y shear, z normal), newtons."""
    frame = np.zeros((3, TAXELS, TAXELS))
    frame[2] = outcome.N * footprint(outcome.rho)
    frame[1] = shear_load(outcome, obj, t, lift_speed) / TAXELS**2
    rng = np.random.default_rng(frame_seed)
    frame += rng.normal(0.0, taxel_noise(outcome), frame.shape)
    return frame.astype(np.float32)
