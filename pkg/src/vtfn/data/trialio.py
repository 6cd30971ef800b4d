"""Binary trial files (.gsa).

Layout, little-endian:
    b"GSA1", u16 version
    object block: u32 id, f64 d0, k, mu, mass, delta_max, f_crush, u64 texture_seed,
                  f64 albedo[3], f64 preset width, f64 preset force
    u32 label, u32 n_visual, u16 S_raw, u32 n_tactile
    f32 visual[3, n_visual, S_raw, S_raw], f32 tactile[3, n_tactile, 4, 4]
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from ..sim.contact import GraspSetting, ObjectSpec
from ..sim.trial import TrialRecording

MAGIC = b"GSA1"
VERSION = 1
_PREAMBLE = struct.Struct("<4sH")
_OBJECT = struct.Struct("<I6dQ3d2d")
_COUNTS = struct.Struct("<IIHI")
HEADER_SIZE = _PREAMBLE.size + _OBJECT.size + _COUNTS.size
TAXELS = 4


class TrialFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrialHeader:
    obj: ObjectSpec
    setting: GraspSetting
    label: int
    n_visual: int
    img_size: int
    n_tactile: int

    @property
    def visual_shape(self):
        return (3, self.n_visual, self.img_size, self.img_size)

    @property
    def tactile_shape(self):
        return (3, self.n_tactile, TAXELS, TAXELS)

    @property
    def payload_size(self) -> int:
        return 4 * (int(np.prod(self.visual_shape)) + int(np.prod(self.tactile_shape)))


def _encode_header(rec: TrialRecording) -> bytes:
    o, s = rec.obj, rec.setting
    return (_PREAMBLE.pack(MAGIC, VERSION)
            + _OBJECT.pack(o.id, o.d0, o.k, o.mu, o.mass, o.delta_max, o.f_crush,
                           o.texture_seed, *o.albedo, s.w, s.f)
            + _COUNTS.pack(rec.label, rec.n_visual, rec.img_size, rec.n_tactile))


def write_trial(rec: TrialRecording, path) -> None:
    vis = np.ascontiguousarray(rec.visual, dtype="<f4")
    tac = np.ascontiguousarray(rec.tactile, dtype="<f4")
    if vis.shape[0] != 3 or vis.shape[2] != vis.shape[3] or tac.shape[0] != 3 or tac.shape[2:] != (4, 4):
        raise ValueError(f"unexpected frame shapes {vis.shape}, {tac.shape}")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_encode_header(rec))
        fh.write(vis.tobytes())
        fh.write(tac.tobytes())
    os.replace(tmp, path)


def _decode_header(buf: bytes, path) -> TrialHeader:
    if len(buf) < HEADER_SIZE:
        raise TrialFormatError(f"{path}: truncated header, expected {HEADER_SIZE} bytes, got {len(buf)}")
    magic, version = _PREAMBLE.unpack_from(buf, 0)
    if magic != MAGIC:
        raise TrialFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TrialFormatError(f"{path}: unsupported version {version}")
    f = _OBJECT.unpack_from(buf, _PREAMBLE.size)
    obj = ObjectSpec(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], (f[8], f[9], f[10]))
    setting = GraspSetting(f[11], f[12])
    label, nv, S, nt = _COUNTS.unpack_from(buf, _PREAMBLE.size + _OBJECT.size)
    return TrialHeader(obj, setting, label, nv, S, nt)


def read_header(path) -> TrialHeader:
    with open(path, "rb") as fh:
        return _decode_header(fh.read(HEADER_SIZE), path)


def _check_size(hdr: TrialHeader, path, actual: int):
    expected = HEADER_SIZE + hdr.payload_size
    if actual != expected:
        raise TrialFormatError(f"{path}: expected {expected} bytes, found {actual}")


def read_trial(path) -> TrialRecording:
    with open(path, "rb") as fh:
        data = fh.read()
    hdr = _decode_header(data, path)
    _check_size(hdr, path, len(data))
    nvis = int(np.prod(hdr.visual_shape))
    vis = np.frombuffer(data, "<f4", nvis, HEADER_SIZE).reshape(hdr.visual_shape)
    tac = np.frombuffer(data, "<f4", offset=HEADER_SIZE + 4 * nvis).reshape(hdr.tactile_shape)
    return TrialRecording(hdr.obj, hdr.setting, hdr.label,
                          vis.astype(np.float32), tac.astype(np.float32))


def map_trial(path):
    """(header, visual memmap, tactile memmap) without loading the frames."""
    hdr = read_header(path)
    _check_size(hdr, path, os.path.getsize(path))
    vis = np.memmap(path, "<f4", "r", HEADER_SIZE, hdr.visual_shape)
    off = HEADER_SIZE + 4 * int(np.prod(hdr.visual_shape))
    tac = np.memmap(path, "<f4", "r", off, hdr.tactile_shape)
    return hdr, vis, tac
