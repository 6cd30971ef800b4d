"""One grasp-and-lift trial: a fixed preset, 30 Hz camera and 60 Hz taxel streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contact import ContactOutcome, GraspSetting, ObjectSpec, evaluate_contact
from .render import render_tactile, render_visual

VISUAL_HZ = 30
TACTILE_HZ = 60


@dataclass(frozen=True)
class SimConfig:
    lift_mm: float = 20.0
    lift_speed: float = 10.0  # mm/s
    img_size: int = 112

    @property
    def duration(self) -> float:
        return self.lift_mm / self.lift_speed


@dataclass
class TrialRecording:
    obj: ObjectSpec
    setting: GraspSetting
    label: int
    visual: np.ndarray   # (3, n_visual, S, S) float32
    tactile: np.ndarray  # (3, n_tactile, 4, 4) float32

    @property
    def object_id(self) -> int:
        return self.obj.id

    @property
    def n_visual(self) -> int:
        return self.visual.shape[1]

    @property
    def n_tactile(self) -> int:
        return self.tactile.shape[1]

    @property
    def img_size(self) -> int:
        return self.visual.shape[2]

    @property
    def visual_times(self) -> np.ndarray:
        return np.arange(self.n_visual) / VISUAL_HZ

    @property
    def tactile_times(self) -> np.ndarray:
        return np.arange(self.n_tactile) / TACTILE_HZ


def frame_seed(trial_seed, stream: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([*np.atleast_1d(trial_seed).tolist(), stream, index])


def render_frames(obj: ObjectSpec, outcome: ContactOutcome, S: int, visual_t, tactile_t,
                  z_visual, seed, lift_speed=10.0):
    """Visual and tactile stacks for the given frame times and slip offsets."""
    vis = np.stack([render_visual(obj, outcome.rho, z, S, frame_seed(seed, 0, i))
                    for i, z in enumerate(z_visual)], axis=1)
    tac = np.stack([render_tactile(outcome, obj, t, frame_seed(seed, 1, j), lift_speed)
                    for j, t in enumerate(tactile_t)], axis=1)
    return vis, tac


def simulate_trial(obj: ObjectSpec, setting: GraspSetting, cfg: SimConfig = SimConfig(),
                   seed=0) -> TrialRecording:
    outcome = evaluate_contact(obj, setting, cfg.lift_speed)
    n_vis = int(round(cfg.duration * VISUAL_HZ))
    n_tac = int(round(cfg.duration * TACTILE_HZ))
    tv = np.arange(n_vis) / VISUAL_HZ
    tt = np.arange(n_tac) / TACTILE_HZ
    z = outcome.slip_velocity * tv  # object drifts down relative to the fingers
    vis, tac = render_frames(obj, outcome, cfg.img_size, tv, tt, z, seed, cfg.lift_speed)
    return TrialRecording(obj, setting, int(outcome.label), vis, tac)
