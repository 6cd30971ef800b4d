"""Model checkpoints (.vtfn).

Layout, little-endian:
    b"VTFN", u16 version
    config: u8 modality, u16 m, u16 n, u16 image size, f64 tactile scale
    u32 count, then per parameter: u16 name length, name, u8 rank, u32 extents[rank], f32 values
    b"ADAM", u64 step, f64 lr, beta1, beta2, eps, then first and second moments in the
    parameter scheme above (names prefixed "m:" / "v:")
"""
from __future__ import annotations

import io
import os
import struct

import numpy as np

from ..autodiff.adam import AdamState
from ..model import MODALITIES, ModelConfig, VTFN

MAGIC = b"VTFN"
ADAM_MARKER = b"ADAM"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_tensors(fh, tensors: dict[str, np.ndarray]):
    fh.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def _read_tensors(fh) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
    out = {}
    for _ in range(count):
        (ln,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
        name = _read_exact(fh, ln, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", _read_exact(fh, 1, f"{name} rank"))
        shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, f"{name} extents"))
        size = int(np.prod(shape))
        data = _read_exact(fh, 4 * size, f"{name} values")
        out[name] = np.frombuffer(data, "<f4").astype(np.float32).reshape(shape)
    return out


def save_checkpoint(model: VTFN, path) -> None:
    cfg = model.config
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    buf.write(struct.pack("<BHHHd", MODALITIES.index(cfg.modality), cfg.m, cfg.n,
                          cfg.image_size, cfg.tactile_scale))
    _write_tensors(buf, model.params)
    st = model.adam
    buf.write(ADAM_MARKER)
    buf.write(struct.pack("<Qdddd", st.step, st.lr, st.beta1, st.beta2, st.eps))
    _write_tensors(buf, {f"m:{k}": v for k, v in st.m.items()})
    _write_tensors(buf, {f"v:{k}": v for k, v in st.v.items()})
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path) -> VTFN:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a VTFN checkpoint")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        mod, m, n, S, scale = struct.unpack("<BHHHd", _read_exact(fh, 15, "config"))
        config = ModelConfig(MODALITIES[mod], m, n, S, scale, reduced=S < 32)
        params = _read_tensors(fh)
        if _read_exact(fh, 4, "optimizer marker") != ADAM_MARKER:
            raise CheckpointError(f"{path}: missing ADAM section")
        step, lr, b1, b2, eps = struct.unpack("<Qdddd", _read_exact(fh, 40, "optimizer header"))
        m1 = {k[2:]: v for k, v in _read_tensors(fh).items()}
        m2 = {k[2:]: v for k, v in _read_tensors(fh).items()}
    adam = AdamState(lr, b1, b2, eps, step, m1, m2)
    model = VTFN(config, params, adam)
    for group, spec in model.plan.param_specs():
        for kind, shape in (("w", spec.weight_shape), ("b", spec.bias_shape)):
            key = f"{group}.{spec.name}.{kind}"
            if key not in params or params[key].shape != tuple(shape):
                raise CheckpointError(f"{path}: parameter {key} missing or mis-shaped")
    return model
