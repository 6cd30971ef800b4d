"""Finite-difference check of the whole network's analytic gradients in float64."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ops
from .model import GraspWindow, ModelConfig, VTFN

TOLERANCE = 1e-4


@dataclass
class TensorCheck:
    name: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradcheckReport:
    checks: list[TensorCheck] = field(default_factory=list)
    tolerance: float = TOLERANCE

    @property
    def max_rel_error(self) -> float:
        return max((c.rel_error for c in self.checks), default=0.0)

    @property
    def worst(self) -> TensorCheck | None:
        return max(self.checks, key=lambda c: c.rel_error, default=None)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def failures(self) -> list[TensorCheck]:
        return [c for c in self.checks if c.rel_error >= self.tolerance]

    def per_tensor(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for c in self.checks:
            out[c.name] = max(out.get(c.name, 0.0), c.rel_error)
        return out


def rel_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def random_windows(config: ModelConfig, batch: int, rng: np.random.Generator) -> list[GraspWindow]:
    S, m, n = config.image_size, config.m, config.n
    return [GraspWindow(rng.random((3, m, S, S)), rng.normal(0.0, 5.0, (3, n, 4, 4)),
                        int(rng.integers(0, 3))) for _ in range(batch)]


def condition(model: VTFN, rng: np.random.Generator, bias_std: float = 0.1) -> None:
    """Rescale weights to He variance and draw non-zero biases.

    Xavier init shrinks activations through the deep ReLU stack until the
    probe step itself crosses ReLU kinks; this keeps the check point generic.
    """
    for group, spec in model.plan.param_specs():
        fan_in, fan_out = spec.fans()
        model.params[f"{group}.{spec.name}.w"] *= np.sqrt((fan_in + fan_out) / fan_in)
        b = model.params[f"{group}.{spec.name}.b"]
        b[...] = rng.normal(0.0, bias_std, b.shape)


def activation_pattern(cache) -> list[np.ndarray]:
    """ReLU masks and max-pool winners: the loss is smooth while these stay fixed."""
    out = []
    for key in ("vis", "tac"):
        for c in cache.get(key, ()):
            out.append(c[1] if isinstance(c, tuple) else c.argmax)
    out.extend(cache.get("vis_fc", [])[1::2])
    out.append(cache["cls"][2])
    return out


def _same(a, b) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def _probe(model: VTFN, windows, flat, i, h, base, min_h=1e-8):
    """Central difference at coordinate i, shrinking h until no ReLU or pool decision flips."""
    old = flat[i]
    while True:
        vals, pats = [], []
        for sign in (1.0, -1.0):
            flat[i] = old + sign * h
            logits, _, cache = model.forward(windows, keep_cache=True)
            vals.append(np.mean([ops.softmax_xent(logits[k], int(w.label))[0]
                                 for k, w in enumerate(windows)]))
            pats.append(activation_pattern(cache))
        flat[i] = old
        if (_same(pats[0], base) and _same(pats[1], base)) or h / 10 < min_h:
            return (vals[0] - vals[1]) / (2 * h)
        h /= 10


def gradcheck(config: ModelConfig | None = None, samples: int = 6, h: float = 1e-4,
              batch: int = 2, seed: int = 0, model: VTFN | None = None,
              windows=None, recondition: bool = True) -> GradcheckReport:
    """Compare analytic gradients to central differences on sampled coordinates of every tensor.

    The step shrinks (by 10x) for a probe whose +-h evaluations change any ReLU mask
    or pool winner, since a difference across a kink is not a derivative estimate.
    """
    config = config or ModelConfig("fusion", m=3, image_size=16, reduced=True)
    rng = np.random.default_rng(seed)
    model = (model or VTFN(config, seed=seed)).astype(np.float64)
    if recondition:
        condition(model, rng)
    windows = windows if windows is not None else random_windows(config, batch, rng)
    _, grads = model.loss_and_grads(windows)
    base = activation_pattern(model.forward(windows, keep_cache=True)[2])
    report = GradcheckReport()
    for name, p in model.params.items():
        flat = p.reshape(-1)
        g = grads[name].reshape(-1)
        # half the probes on live coordinates: taps that only ever see padding have zero gradient
        live = np.flatnonzero(g)
        k_live = min(samples // 2, live.size)
        picks = rng.choice(live, size=k_live, replace=False) if k_live else np.zeros(0, dtype=int)
        rest = np.setdiff1d(np.arange(flat.size), picks)
        picks = np.concatenate([picks, rng.choice(rest, size=min(samples - k_live, rest.size),
                                                  replace=False)])
        for i in picks:
            num = _probe(model, windows, flat, i, h, base)
            idx = np.unravel_index(i, p.shape)
            report.checks.append(TensorCheck(name, tuple(int(x) for x in idx), float(g[i]),
                                             float(num), rel_error(float(g[i]), float(num))))
    return report


def describe(report: GradcheckReport) -> list[str]:
    lines = [f"{name:<26} max rel err {err:.3e}" for name, err in report.per_tensor().items()]
    w = report.worst
    if w is not None:
        lines.append(f"worst: {w.name}{list(w.index)} analytic {w.analytic:.6e} "
                     f"numeric {w.numeric:.6e}")
    lines.append(f"max relative error {report.max_rel_error:.3e} "
                 f"({'PASS' if report.passed else 'FAIL'} at {report.tolerance:g})")
    return lines
