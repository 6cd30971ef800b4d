"""Closed-loop grasp regulation: assess the grasp every tick, then nudge width and force."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import VTFN, GraspWindow
from .sim.contact import GraspSetting, ObjectSpec, evaluate_contact
from .sim.render import render_tactile, render_visual
from .sim.trial import TACTILE_HZ, VISUAL_HZ, SimConfig, frame_seed
from .states import GraspState

TELEMETRY_HEADER = "tick,seconds,width_mm,force_n,pred_state,true_state,normal_n,deform_frac"
CONVERGE_TICKS = 10
MAX_TICKS = 200


class PolicyVariant(str, enum.Enum):
    PAPER_LITERAL = "paper_literal"
    CORRECTED = "corrected"  # force backs off on an over-squeeze


@dataclass(frozen=True)
class Bounds:
    w_min: float = 0.0
    w_max: float = 110.0
    f_min: float = 1.0
    f_max: float = 40.0

    def clamp(self, w: float, f: float) -> tuple[float, float]:
        return (min(max(w, self.w_min), self.w_max), min(max(f, self.f_min), self.f_max))


DEFAULT_BOUNDS = Bounds()


def adjust(state, w: float, f: float, variant=PolicyVariant.PAPER_LITERAL,
           bounds: Bounds = DEFAULT_BOUNDS) -> tuple[float, float]:
    """One unit step of the piecewise width/force rule, clamped to ``bounds``."""
    state = GraspState(state)
    variant = PolicyVariant(variant)
    if state is GraspState.APPROPRIATE:
        return w, f
    if state is GraspState.SLIDING:
        dw, df = -1.0, 1.0
    elif variant is PolicyVariant.PAPER_LITERAL:
        dw, df = 1.0, 1.0
    else:
        dw, df = 1.0, -1.0
    return bounds.clamp(w + dw, f + df)


@dataclass
class TelemetryRow:
    tick: int
    seconds: float
    width_mm: float
    force_n: float
    pred_state: int
    true_state: int
    normal_n: float
    deform_frac: float

    def csv(self) -> str:
        return (f"{self.tick},{self.seconds:.4f},{self.width_mm:.3f},{self.force_n:.3f},"
                f"{self.pred_state},{self.true_state},{self.normal_n:.4f},{self.deform_frac:.5f}")


@dataclass
class EpisodeResult:
    object_id: int
    variant: PolicyVariant
    adjusting: bool
    rows: list[TelemetryRow] = field(default_factory=list)
    converged: bool = False

    @property
    def ticks(self) -> int:
        return len(self.rows)

    @property
    def final_setting(self) -> GraspSetting:
        last = self.rows[-1]
        return GraspSetting(last.width_mm, last.force_n)

    @property
    def truly_converged(self) -> bool:
        """Assessor converged and the grasp it settled on is really appropriate."""
        return self.converged and self.rows[-1].true_state == GraspState.APPROPRIATE

    def csv(self) -> str:
        return "\n".join([TELEMETRY_HEADER] + [r.csv() for r in self.rows]) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.csv())


def tick_window(obj: ObjectSpec, setting: GraspSetting, tick: int, m: int, S: int,
                z0_mm: float, seed, sim: SimConfig = SimConfig()):
    """Render the m camera frames and 2m taxel frames spanning one control tick."""
    outcome = evaluate_contact(obj, setting, sim.lift_speed)
    t0 = tick * m / VISUAL_HZ
    tv = t0 + np.arange(m) / VISUAL_HZ
    tt = t0 + np.arange(2 * m) / TACTILE_HZ
    ss = (*np.atleast_1d(seed).tolist(), tick)
    vis = np.stack([render_visual(obj, outcome.rho, z0_mm + outcome.slip_velocity * (t - t0), S,
                                  frame_seed(ss, 0, i)) for i, t in enumerate(tv)], axis=1)
    tac = np.stack([render_tactile(outcome, obj, t, frame_seed(ss, 1, j), sim.lift_speed)
                    for j, t in enumerate(tt)], axis=1)
    return GraspWindow(vis, tac, int(outcome.label), (obj.id, -1, tick)), outcome


def run_episode(obj: ObjectSpec, init: GraspSetting, assessor="oracle",
                variant=PolicyVariant.PAPER_LITERAL, max_ticks: int = MAX_TICKS,
                adjust_enabled: bool = True, seed=0, m: int | None = None,
                bounds: Bounds = DEFAULT_BOUNDS, sim: SimConfig = SimConfig(),
                telemetry_out=None) -> EpisodeResult:
    """Run one episode; ``assessor`` is ``"oracle"`` or a trained VTFN.

    Ends after ``max_ticks`` or once the assessed state has been appropriate for
    ten ticks in a row. With ``adjust_enabled=False`` the preset is held (WoA baseline).
    """
    variant = PolicyVariant(variant)
    model = None
    if isinstance(assessor, VTFN):
        model = assessor
        if m is not None and m != model.config.m:
            raise ValueError(f"episode window m={m} but the model expects m={model.config.m}")
        m = model.config.m
    elif assessor != "oracle":
        raise ValueError(f"assessor must be 'oracle' or a VTFN model, got {assessor!r}")
    m = 5 if m is None else m
    w, f = bounds.clamp(init.w, init.f)
    z = 0.0  # slip accumulated over the current run of sliding ticks
    streak = 0
    res = EpisodeResult(obj.id, variant, adjust_enabled)
    for tick in range(max_ticks):
        setting = GraspSetting(w, f)
        if model is None:
            outcome = evaluate_contact(obj, setting, sim.lift_speed)
            pred = outcome.label
        else:
            window, outcome = tick_window(obj, setting, tick, m, model.config.image_size, z, seed, sim)
            pred = model.classify(window)
        res.rows.append(TelemetryRow(tick, tick * m / VISUAL_HZ, w, f, int(pred),
                                     int(outcome.label), outcome.N, outcome.rho))
        z = (z + outcome.slip_velocity * m / VISUAL_HZ) % sim.lift_mm if outcome.slips else 0.0
        streak = streak + 1 if pred == GraspState.APPROPRIATE else 0
        if streak >= CONVERGE_TICKS:
            res.converged = True
            break
        if adjust_enabled:
            w, f = adjust(pred, w, f, variant, bounds)
    if telemetry_out is not None:
        res.write(telemetry_out)
    return res


def sliding_start(obj: ObjectSpec) -> GraspSetting:
    """Open fingers, light force: the object stays on the table."""
    return GraspSetting(obj.d0 + 8.0, 5.0)


def excessive_start(obj: ObjectSpec) -> GraspSetting:
    """Deep squeeze at high force."""
    return GraspSetting(obj.d0 - 0.3 * obj.d0, 32.0)
