"""Parametric deformable objects and the quasi-static grasp/slip rule that labels a trial."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..states import GraspState

G = 9.81          # m/s^2
LIFT_MARGIN = 1.1  # holding force must beat weight by 10% while accelerating


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    d0: float          # rest diameter along the grip axis, mm
    k: float           # contact stiffness, N/mm
    mu: float          # Coulomb friction
    mass: float        # kg
    delta_max: float   # safe deformation fraction
    f_crush: float     # N
    texture_seed: int
    albedo: tuple[float, float, float]

    def __post_init__(self):
        problems = []
        if not 30 <= self.d0 <= 110:
            problems.append(f"d0={self.d0} outside [30, 110] mm")
        if self.k <= 0:
            problems.append("k must be positive")
        if not 0.05 < self.mu < 1.5:
            problems.append(f"mu={self.mu} outside (0.05, 1.5)")
        if self.mass <= 0:
            problems.append("mass must be positive")
        if not 0 < self.delta_max < 0.5:
            problems.append(f"delta_max={self.delta_max} outside (0, 0.5)")
        if self.f_crush <= 0:
            problems.append("f_crush must be positive")
        if problems:
            raise ValueError(f"object {self.id}: " + "; ".join(problems))

    @property
    def weight(self) -> float:
        return self.mass * G


@dataclass(frozen=True)
class GraspSetting:
    w: float  # gripper width, mm
    f: float  # force limit, N

    def __post_init__(self):
        if self.w < 0 or not self.f > 0:
            raise ValueError(f"invalid grasp setting w={self.w}, f={self.f}")


@dataclass(frozen=True)
class ContactOutcome:
    N: float              # per-finger normal force, N
    delta: float          # squeeze depth, mm
    rho: float            # delta / d0
    slips: bool
    slip_velocity: float  # mm/s relative to the fingers
    label: GraspState


def evaluate_contact(obj: ObjectSpec, setting: GraspSetting, lift_speed: float = 10.0) -> ContactOutcome:
    """Squeeze depth is limited by the width stop or the force limit, whichever binds first.

    Precedence: sliding > excessive > appropriate.
    """
    delta = min(max(0.0, obj.d0 - setting.w), setting.f / obj.k)
    N = obj.k * delta
    hold = 2.0 * obj.mu * N
    slips = hold < obj.weight * LIFT_MARGIN
    rho = delta / obj.d0
    if slips:
        label = GraspState.SLIDING
        v = lift_speed * min(1.0, max(0.0, 1.0 - hold / obj.weight))
    else:
        v = 0.0
        if rho > obj.delta_max or N > obj.f_crush:
            label = GraspState.EXCESSIVE
        else:
            label = GraspState.APPROPRIATE
    return ContactOutcome(N, delta, rho, slips, v, label)


class UnreachableLabelError(RuntimeError):
    pass


MAX_DRAWS = 10_000


def setting_ranges(obj: ObjectSpec) -> tuple[tuple[float, float], tuple[float, float]]:
    return (obj.d0 - 0.6 * obj.d0, obj.d0 + 10.0), (0.0, 1.2 * obj.f_crush)


def hold_ratio(obj: ObjectSpec, out: ContactOutcome) -> float:
    """Friction hold over the required lift force; below 1 the object slips."""
    return 2.0 * obj.mu * out.N / (obj.weight * LIFT_MARGIN)


def load_ratio(obj: ObjectSpec, out: ContactOutcome) -> float:
    """Worst of deformation and force against their limits; above 1 is excessive."""
    return max(out.rho / obj.delta_max, out.N / obj.f_crush)


def clear_of_boundaries(obj: ObjectSpec, out: ContactOutcome, margin: float) -> bool:
    """True when the outcome sits at least ``margin`` (relative) inside its label region."""
    if margin <= 0:
        return True
    hold = hold_ratio(obj, out)
    if out.label == GraspState.SLIDING:
        return hold <= 1.0 - margin
    if hold < 1.0 + margin:
        return False
    load = load_ratio(obj, out)
    if out.label == GraspState.APPROPRIATE:
        return load <= 1.0 - margin
    return load >= 1.0 + margin


def sample_setting_for_label(obj: ObjectSpec, target: GraspState, rng: np.random.Generator,
                             margin: float = 0.0) -> GraspSetting:
    """Rejection-sample a preset (width, force) that produces ``target``.

    With ``margin > 0`` presets near a label boundary are rejected too.
    """
    (w_lo, w_hi), (_, f_hi) = setting_ranges(obj)
    target = GraspState(target)
    for _ in range(MAX_DRAWS):
        w = rng.uniform(w_lo, w_hi)
        f = f_hi * (1.0 - rng.random())  # (0, f_hi]
        s = GraspSetting(w, f)
        out = evaluate_contact(obj, s)
        if out.label == target and clear_of_boundaries(obj, out, margin):
            return s
    raise UnreachableLabelError(
        f"object {obj.id}: no setting labelled {target.label} in {MAX_DRAWS} draws")


def appropriate_band(obj: ObjectSpec) -> tuple[float, float]:
    """Squeeze depths (mm) that neither slip nor over-deform."""
    lo = LIFT_MARGIN * obj.weight / (2.0 * obj.mu * obj.k)
    hi = min(obj.delta_max * obj.d0, obj.f_crush / obj.k)
    return lo, hi


def generate_objects(n: int = 16, seed: int = 0, min_band_mm: float = 3.0) -> list[ObjectSpec]:
    """Draw ``n`` objects whose appropriate band is at least ``min_band_mm`` wide.

    f_crush is tied to the deformation limit so over-squeezing shows up as
    deformation before the crush force is reached.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0B1EC7]))
    objs = []
    while len(objs) < n:
        d0 = rng.uniform(50.0, 90.0)
        k = rng.uniform(0.5, 3.0)
        mu = rng.uniform(0.3, 1.0)
        mass = rng.uniform(0.05, 0.4)
        delta_max = rng.uniform(0.22, 0.28)
        f_crush = k * d0 * delta_max * rng.uniform(1.25, 1.6)
        bright = rng.random() < 0.5
        lo, hi = (0.65, 0.9) if bright else (0.08, 0.32)
        albedo = tuple(float(x) for x in rng.uniform(lo, hi, 3))
        tex = int(rng.integers(0, 2**31 - 1))
        obj = ObjectSpec(len(objs), float(d0), float(k), float(mu), float(mass),
                         float(delta_max), float(f_crush), tex, albedo)
        band_lo, band_hi = appropriate_band(obj)
        if band_hi - band_lo >= min_band_mm:
            objs.append(obj)
    return objs
