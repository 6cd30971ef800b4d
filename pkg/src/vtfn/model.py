"""C3D visual-tactile fusion network: graph assembly, forward/backward, training step.

The visual branch is the C3D stack (five conv blocks, two FC layers, 4096-d
feature), the tactile branch three small conv blocks (32-d feature); the two
features are concatenated and classified by two FC layers into
sliding / appropriate / excessive.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .autodiff import ops
from .autodiff.adam import AdamState, adam_step
from .autodiff.layers import LayerSpec, xavier_init
from .autodiff.ops import ShapeError
from .states import CLASS_NAMES, GraspState  # noqa: F401

MODALITIES = ("fusion", "visual_only", "tactile_only")
IMAGE_SIZES = (32, 64, 112, 224, 512)
# 16 px is only reachable with reduced=True (gradient checks)
REDUCED_IMAGE_SIZES = (16,)
TAXEL_GRID = 4
N_CLASSES = 3
VISUAL_FEATURES = 4096
TACTILE_FEATURES = 32


@dataclass(frozen=True)
class ModelConfig:
    modality: str = "fusion"
    m: int = 5
    n: int | None = None
    image_size: int = 112
    tactile_scale: float = 0.1  # raw newtons -> network units
    reduced: bool = False

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if self.m < 3:
            raise ValueError(f"visual sequence length must be >= 3, got {self.m}")
        if self.n is None:
            object.__setattr__(self, "n", 2 * self.m)
        if self.n < 1:
            raise ValueError("tactile sequence length must be positive")
        allowed = IMAGE_SIZES + (REDUCED_IMAGE_SIZES if self.reduced else ())
        if self.image_size not in allowed:
            raise ValueError(f"image size must be one of {allowed}, got {self.image_size}")

    @property
    def uses_visual(self) -> bool:
        return self.modality != "tactile_only"

    @property
    def uses_tactile(self) -> bool:
        return self.modality != "visual_only"


@dataclass
class GraspWindow:
    visual: np.ndarray   # (3, m, S, S), values in [0, 1]
    tactile: np.ndarray  # (3, n, 4, 4), newtons
    label: int
    provenance: tuple = (0, 0, 0)  # (object id, trial id, start index)


@dataclass(frozen=True)
class PlannedLayer:
    spec: LayerSpec
    in_dims: tuple[int, ...]
    out_dims: tuple[int, ...]


def _conv(name, c_in, c_out, k=(3, 3, 3), p=(1, 1, 1)):
    return LayerSpec("conv3d", name, kernel=k, padding=p, c_in=c_in, c_out=c_out)


def _pool(name, k, s=None, p=(0, 0, 0)):
    return LayerSpec("maxpool3d", name, kernel=k, stride=s or k, padding=p)


def _visual_template():
    return [
        _conv("conv1", 3, 64), _pool("pool1", (1, 2, 2)),
        _conv("conv2", 64, 128), _pool("pool2", (2, 2, 2)),
        _conv("conv3a", 128, 256), _conv("conv3b", 256, 256), _pool("pool3", (2, 2, 2)),
        _conv("conv4a", 256, 512), _conv("conv4b", 512, 512), _pool("pool4", (1, 2, 2)),
        _conv("conv5a", 512, 512), _conv("conv5b", 512, 512),
        # spatial padding 1: 7x7 -> 4x4 at 112 px
        _pool("pool5", (1, 2, 2), p=(0, 1, 1)),
    ]


def _tactile_template():
    return [
        _conv("conv6", 3, 8), _pool("pool6", (2, 2, 2)),
        _conv("conv7", 8, 16), _pool("pool7", (2, 2, 2)),
        _conv("conv8", 16, 32, k=(3, 1, 1), p=(1, 0, 0)), _pool("pool8", (2, 1, 1)),
    ]


def _resolve(template, in_dims, global_last_pool=False):
    """Walk the shape algebra; temporal pooling larger than the remaining extent is clamped."""
    planned = []
    dims = tuple(in_dims)
    for i, spec in enumerate(template):
        c, t, h, w = dims
        if spec.kind == "maxpool3d":
            kt, kh, kw = spec.kernel
            st, sh, sw = spec.stride
            last = global_last_pool and i == len(template) - 1
            if last and t > kt:
                kt = st = t
            if kt > t + 2 * spec.padding[0]:
                kt = st = t
            spec = replace(spec, kernel=(kt, kh, kw), stride=(st, sh, sw))
            out = (c,) + ops.output_dims((t, h, w), spec.kernel, spec.stride, spec.padding)
        else:
            if spec.c_in != c:
                raise ShapeError(f"{spec.name}: expects {spec.c_in} channels, got {c}")
            out = (spec.c_out,) + ops.output_dims((t, h, w), spec.kernel, spec.stride, spec.padding)
        if min(out) < 1:
            raise ShapeError(f"{spec.name}: non-positive extent {out}")
        planned.append(PlannedLayer(spec, dims, out))
        dims = out
    return planned


@dataclass(frozen=True)
class Plan:
    visual: tuple[PlannedLayer, ...]
    tactile: tuple[PlannedLayer, ...]
    fc: tuple[LayerSpec, ...]  # visual fc1, fc2 (if any) then classifier fc3, fc4

    def param_specs(self):
        out = []
        for pl in self.visual:
            if pl.spec.has_params:
                out.append(("visual", pl.spec))
        for pl in self.tactile:
            if pl.spec.has_params:
                out.append(("tactile", pl.spec))
        for spec in self.fc:
            group = "visual" if spec.name in ("fc1", "fc2") else "classifier"
            out.append((group, spec))
        return out


def build_plan(config: ModelConfig) -> Plan:
    S, m, n = config.image_size, config.m, config.n
    visual, tactile, fc = (), (), []
    fused = 0
    if config.uses_visual:
        visual = tuple(_resolve(_visual_template(), (3, m, S, S)))
        flat = int(np.prod(visual[-1].out_dims))
        fc += [LayerSpec("linear", "fc1", n_in=flat, n_out=VISUAL_FEATURES),
               LayerSpec("linear", "fc2", n_in=VISUAL_FEATURES, n_out=VISUAL_FEATURES)]
        fused += VISUAL_FEATURES
    if config.uses_tactile:
        tactile = tuple(_resolve(_tactile_template(), (3, n, TAXEL_GRID, TAXEL_GRID),
                                 global_last_pool=True))
        flat = int(np.prod(tactile[-1].out_dims))
        if flat != TACTILE_FEATURES:
            raise ShapeError(f"tactile branch yields {flat} features, expected {TACTILE_FEATURES}")
        fused += TACTILE_FEATURES
    fc += [LayerSpec("linear", "fc3", n_in=fused, n_out=128),
           LayerSpec("linear", "fc4", n_in=128, n_out=N_CLASSES)]
    return Plan(visual, tactile, tuple(fc))


def _pname(group, spec, kind):
    return f"{group}.{spec.name}.{kind}"


class VTFN:
    """Parameters, optimizer state and the hand-wired graph for one ModelConfig."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None,
                 adam: AdamState | None = None, seed: int = 0, lr: float = 1e-4):
        self.config = config
        self.plan = build_plan(config)
        if params is None:
            params = self._init_params(seed)
        self.params = params
        self.adam = adam if adam is not None else AdamState.for_params(params, lr=lr)
        self.check_finite = True

    def _init_params(self, seed):
        rng = np.random.default_rng(seed)
        params = {}
        for group, spec in self.plan.param_specs():
            w, b = xavier_init(spec, rng)
            params[_pname(group, spec, "w")] = w
            params[_pname(group, spec, "b")] = b
        return params

    # partition of parameters into visual / tactile / classifier groups
    def groups(self) -> dict[str, list[str]]:
        out = {"visual": [], "tactile": [], "classifier": []}
        for name in self.params:
            out[name.split(".", 1)[0]].append(name)
        return out

    def param_count(self, group: str | None = None) -> int:
        return int(sum(p.size for k, p in self.params.items()
                       if group is None or k.startswith(group + ".")))

    def astype(self, dtype) -> "VTFN":
        """Copy with parameters cast (used by gradient checks in float64)."""
        params = {k: v.astype(dtype) for k, v in self.params.items()}
        clone = VTFN(self.config, params, AdamState.for_params(params, lr=self.adam.lr))
        clone.check_finite = self.check_finite
        return clone

    # ---- forward -------------------------------------------------------
    def _check(self, x, where):
        if self.check_finite and not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite values after layer {where}")

    def _branch_forward(self, x, layers, group):
        """Run a conv branch on a channels-last batch (N, T, H, W, C)."""
        caches = []
        for pl in layers:
            spec = pl.spec
            c, t, h, w = pl.in_dims
            if x.shape[1:] != (t, h, w, c):
                raise ShapeError(f"{group} input to {spec.name}: got {x.shape[1:]}, "
                                 f"expected {(t, h, w, c)} (T,H,W,C)")
            if spec.kind == "conv3d":
                wt = self.params[_pname(group, spec, "w")]
                b = self.params[_pname(group, spec, "b")]
                x, cc = ops.conv3d_cl_forward(x, wt, b, spec.stride, spec.padding)
                x, mask = ops.relu_forward(x)
                caches.append((cc, mask))
            else:
                x, pc = ops.maxpool3d_cl_forward(x, spec.kernel, spec.stride, spec.padding)
                caches.append(pc)
            self._check(x, f"{group}.{spec.name}")
        return x, caches

    def _branch_backward(self, g, layers, caches, group, grads):
        for i in range(len(layers) - 1, -1, -1):
            spec, cache = layers[i].spec, caches[i]
            if spec.kind == "conv3d":
                cc, mask = cache
                g = ops.relu_backward(g, mask)
                w = self.params[_pname(group, spec, "w")]
                gx, gw, gb = ops.conv3d_cl_backward(g, cc, w, need_input_grad=i > 0)
                grads[_pname(group, spec, "w")] = gw
                grads[_pname(group, spec, "b")] = gb
                g = gx
            else:
                g = ops.maxpool3d_cl_backward(g, cache)

    @staticmethod
    def _flatten_cl(y):
        # features flattened in (C, T, H, W) order
        return np.ascontiguousarray(y.transpose(0, 4, 1, 2, 3)).reshape(y.shape[0], -1)

    @staticmethod
    def _unflatten_cl(g, out_dims):
        c, t, h, w = out_dims
        return np.ascontiguousarray(g.reshape(-1, c, t, h, w).transpose(0, 2, 3, 4, 1))

    def _prepare(self, windows: Sequence[GraspWindow]):
        cfg = self.config
        dtype = next(iter(self.params.values())).dtype
        vis, tac = [], []
        for win in windows:
            if cfg.uses_visual:
                v = np.asarray(win.visual, dtype=dtype)
                want = (3, cfg.m, cfg.image_size, cfg.image_size)
                if v.shape != want:
                    raise ShapeError(f"visual window has shape {v.shape}, model expects {want}")
                vis.append(v.transpose(1, 2, 3, 0))
            if cfg.uses_tactile:
                t = np.asarray(win.tactile, dtype=dtype) * dtype.type(cfg.tactile_scale)
                want = (3, cfg.n, TAXEL_GRID, TAXEL_GRID)
                if t.shape != want:
                    raise ShapeError(f"tactile window has shape {t.shape}, model expects {want}")
                tac.append(t.transpose(1, 2, 3, 0))
        vis = np.stack(vis) if vis else None
        tac = np.stack(tac) if tac else None
        return vis, tac

    def forward(self, windows: Sequence[GraspWindow], keep_cache: bool = False):
        """Logits (N, 3) and per-sample feature vectors for a list of windows."""
        vis, tac = self._prepare(windows)
        N = len(windows)
        cache = {}
        parts = []
        feats = {}
        if self.config.uses_visual:
            y, cache["vis"] = self._branch_forward(vis, self.plan.visual, "visual")
            h = self._flatten_cl(y)
            fc_cache = []
            for spec in self.plan.fc[:2]:
                w = self.params[_pname("visual", spec, "w")]
                b = self.params[_pname("visual", spec, "b")]
                z = ops.linear_forward(h, w, b)
                fc_cache.append(h)
                h, mask = ops.relu_forward(z)
                fc_cache.append(mask)
                self._check(h, f"visual.{spec.name}")
            cache["vis_fc"] = fc_cache
            feats["visual"] = h
            parts.append(h)
        if self.config.uses_tactile:
            y, cache["tac"] = self._branch_forward(tac, self.plan.tactile, "tactile")
            ht = self._flatten_cl(y)
            feats["tactile"] = ht
            parts.append(ht)
        fused = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)
        feats["fused"] = fused
        fc3, fc4 = self.plan.fc[-2:]
        z3 = ops.linear_forward(fused, self.params[_pname("classifier", fc3, "w")],
                                self.params[_pname("classifier", fc3, "b")])
        h3, mask3 = ops.relu_forward(z3)
        logits = ops.linear_forward(h3, self.params[_pname("classifier", fc4, "w")],
                                    self.params[_pname("classifier", fc4, "b")])
        self._check(logits, "classifier.fc4")
        cache["cls"] = (fused, h3, mask3)
        assert logits.shape == (N, N_CLASSES)
        if keep_cache:
            return logits, feats, cache
        return logits, feats

    # ---- loss / backward -----------------------------------------------
    def loss(self, windows: Sequence[GraspWindow]) -> float:
        logits, _ = self.forward(windows)
        return float(np.mean([ops.softmax_xent(logits[i], int(w.label))[0]
                              for i, w in enumerate(windows)]))

    def loss_and_grads(self, windows: Sequence[GraspWindow]):
        """Mean cross-entropy over ``windows`` and gradients for every parameter.

        Samples are processed in the order given; callers wanting
        permutation invariance sort first (see ``train_step``).
        """
        logits, _, cache = self.forward(windows, keep_cache=True)
        N = len(windows)
        losses = []
        g_logits = np.empty_like(logits)
        for i, win in enumerate(windows):
            li, gi = ops.softmax_xent(logits[i], int(win.label))
            losses.append(li)
            g_logits[i] = gi / N
        loss = float(np.sum(losses) / N)
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite loss")
        grads: dict[str, np.ndarray] = {}

        fused, h3, mask3 = cache["cls"]
        fc3, fc4 = self.plan.fc[-2:]
        g, gw, gb = ops.linear_backward(g_logits, h3, self.params[_pname("classifier", fc4, "w")])
        grads[_pname("classifier", fc4, "w")], grads[_pname("classifier", fc4, "b")] = gw, gb
        g = ops.relu_backward(g, mask3)
        g, gw, gb = ops.linear_backward(g, fused, self.params[_pname("classifier", fc3, "w")])
        grads[_pname("classifier", fc3, "w")], grads[_pname("classifier", fc3, "b")] = gw, gb

        offset = 0
        if self.config.uses_visual:
            gv = g[:, :VISUAL_FEATURES]
            offset = VISUAL_FEATURES
            fc_cache = cache["vis_fc"]
            for j in (1, 0):
                spec = self.plan.fc[j]
                h_in, mask = fc_cache[2 * j], fc_cache[2 * j + 1]
                gv = ops.relu_backward(gv, mask)
                gv, gw, gb = ops.linear_backward(gv, h_in, self.params[_pname("visual", spec, "w")])
                grads[_pname("visual", spec, "w")], grads[_pname("visual", spec, "b")] = gw, gb
            self._branch_backward(self._unflatten_cl(gv, self.plan.visual[-1].out_dims),
                                  self.plan.visual, cache["vis"], "visual", grads)
        if self.config.uses_tactile:
            gt = g[:, offset:offset + TACTILE_FEATURES]
            self._branch_backward(self._unflatten_cl(gt, self.plan.tactile[-1].out_dims),
                                  self.plan.tactile, cache["tac"], "tactile", grads)
        for name in grads:
            self._check(grads[name], f"gradient of {name}")
        return loss, grads

    def train_step(self, windows: Sequence[GraspWindow], lr: float | None = None) -> float:
        """One Adam step on the mean loss of the batch; returns the pre-step loss."""
        if not windows:
            raise ValueError("empty batch")
        ordered = sorted(windows, key=lambda w: tuple(w.provenance))
        loss, grads = self.loss_and_grads(ordered)
        if lr is not None:
            self.adam.lr = lr
        adam_step(self.params, grads, self.adam)
        return loss

    def predict(self, windows: Sequence[GraspWindow]) -> np.ndarray:
        logits, _ = self.forward(windows)
        return logits.argmax(axis=1)  # first max wins: ties go to the lower class

    def classify(self, window: GraspWindow) -> GraspState:
        return GraspState(int(self.predict([window])[0]))


def classify_logits(logits) -> GraspState:
    return GraspState(int(np.argmax(np.asarray(logits))))


def build(config: ModelConfig, seed: int = 0, lr: float = 1e-4) -> VTFN:
    return VTFN(config, seed=seed, lr=lr)
