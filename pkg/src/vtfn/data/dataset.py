"""Synthetic corpus generation, the text manifest, and batch iteration."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ..model import GraspWindow
from ..sim.contact import ObjectSpec, generate_objects, sample_setting_for_label
from ..sim.trial import SimConfig, simulate_trial
from ..states import GraspState
from .trialio import map_trial, write_trial
from .windows import capped, make_window, window_starts

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
MANIFEST_FORMAT = "vtfn-gsa-manifest-1"
N_TEST_OBJECTS = 3
_OBJECT_FIELDS = ("d0", "k", "mu", "mass", "delta_max", "f_crush", "texture_seed", "albedo")


@dataclass
class DatasetManifest:
    root: Path
    master_seed: int
    objects: list[ObjectSpec]
    trials: dict[tuple[int, int], tuple[str, int]]  # (object, trial) -> (relative path, label)
    split: dict[str, list[int]]
    config: dict[str, str] = field(default_factory=dict)

    @property
    def window_cap(self) -> int | None:
        cap = self.config.get("window_cap", "none")
        return None if cap == "none" else int(cap)

    @property
    def img_raw(self) -> int:
        return int(self.config["img_raw"])

    def object(self, oid: int) -> ObjectSpec:
        return self.objects[oid]

    def trials_of(self, split: str) -> list[tuple[int, int]]:
        if split not in self.split:
            raise ValueError(f"unknown split {split!r}")
        ids = set(self.split[split])
        return sorted(k for k in self.trials if k[0] in ids)

    def path(self, key) -> Path:
        return self.root / self.trials[key][0]

    # --- text form ----------------------------------------------------
    def lines(self) -> list[str]:
        out = [f"format\t{MANIFEST_FORMAT}", f"master_seed\t{self.master_seed}"]
        out += [f"{k}\t{v}" for k, v in self.config.items()]
        out.append(f"n_objects\t{len(self.objects)}")
        for o in self.objects:
            for name in _OBJECT_FIELDS:
                val = getattr(o, name)
                if name == "albedo":
                    val = ",".join(repr(float(a)) for a in val)
                elif isinstance(val, float):
                    val = repr(val)
                out.append(f"object.{o.id:02d}.{name}\t{val}")
        for (oid, t), (rel, label) in sorted(self.trials.items()):
            out.append(f"trial.{oid:02d}.{t:03d}\t{rel}")
            out.append(f"label.{oid:02d}.{t:03d}\t{GraspState(label).label}")
        for name in ("train", "test"):
            out.append(f"split.{name}\t{','.join(str(i) for i in self.split[name])}")
        return out

    def write(self, path=None) -> Path:
        path = Path(path) if path else self.root / MANIFEST_NAME
        path.write_text("\n".join(self.lines()) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        rows = {}
        for ln in path.read_text(encoding="utf-8").splitlines():
            if ln.strip():
                key, _, val = ln.partition("\t")
                rows[key] = val
        if rows.get("format") != MANIFEST_FORMAT:
            raise ValueError(f"{path}: not a {MANIFEST_FORMAT} manifest")
        n = int(rows["n_objects"])
        objects = []
        for i in range(n):
            g = lambda name: rows[f"object.{i:02d}.{name}"]  # noqa: E731
            objects.append(ObjectSpec(
                i, float(g("d0")), float(g("k")), float(g("mu")), float(g("mass")),
                float(g("delta_max")), float(g("f_crush")), int(g("texture_seed")),
                tuple(float(a) for a in g("albedo").split(","))))
        trials = {}
        for key, val in rows.items():
            if key.startswith("trial."):
                _, o, t = key.split(".")
                label = GraspState.parse(rows[f"label.{o}.{t}"])
                trials[(int(o), int(t))] = (val, int(label))
        split = {name: [int(x) for x in rows[f"split.{name}"].split(",") if x]
                 for name in ("train", "test")}
        skip = {"format", "master_seed", "n_objects"}
        config = {k: v for k, v in rows.items()
                  if k not in skip and not k.startswith(("object.", "trial.", "label.", "split."))}
        return cls(path.parent, int(rows["master_seed"]), objects, trials, split, config)


LABEL_MARGIN = 0.15  # presets kept 15% clear of the slip and over-squeeze thresholds


def trial_seed(master_seed: int, oid: int, t: int) -> list[int]:
    return [master_seed, oid, t]


def build_dataset(out_dir, n_objects: int = 16, trials_per_object: int = 54, seed: int = 0,
                  img_size: int = 112, window_cap: int | None = 25,
                  sim: SimConfig | None = None, label_margin: float = LABEL_MARGIN) -> DatasetManifest:
    """Generate objects and trials; target labels cycle so classes stay balanced."""
    out = Path(out_dir)
    (out / "trials").mkdir(parents=True, exist_ok=True)
    sim = sim or SimConfig(img_size=img_size)
    if sim.img_size != img_size:
        raise ValueError("img_size disagrees with sim config")
    objects = generate_objects(n_objects, seed)
    trials = {}
    counter = 0
    for obj in objects:
        rng = np.random.default_rng(np.random.SeedSequence([seed, obj.id, 0x5E77]))
        for t in range(trials_per_object):
            target = GraspState(counter % 3)
            counter += 1
            setting = sample_setting_for_label(obj, target, rng, label_margin)
            rec = simulate_trial(obj, setting, sim, seed=trial_seed(seed, obj.id, t))
            rel = f"trials/obj{obj.id:02d}_trial{t:03d}.gsa"
            write_trial(rec, out / rel)
            trials[(obj.id, t)] = (rel, rec.label)
        log.info("object %d: %d trials", obj.id, trials_per_object)
    split_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B17]))
    n_test = min(N_TEST_OBJECTS, max(1, n_objects - 1))
    test = sorted(int(i) for i in split_rng.choice(n_objects, n_test, replace=False))
    train = [i for i in range(n_objects) if i not in test]
    config = {
        "img_raw": str(img_size),
        "trials_per_object": str(trials_per_object),
        "window_cap": "none" if window_cap is None else str(window_cap),
        "lift_mm": repr(sim.lift_mm),
        "lift_speed": repr(sim.lift_speed),
        "label_margin": repr(label_margin),
    }
    man = DatasetManifest(out, seed, objects, trials, {"train": train, "test": test}, config)
    man.write()
    return man


@dataclass(frozen=True)
class WindowRef:
    object_id: int
    trial_id: int
    start: int
    label: int


class WindowIndex:
    """Lazy window list over one split; frames are read through memory maps on demand."""

    def __init__(self, manifest: DatasetManifest, split: str, m: int, stride: int, size: int,
                 cap: int | None | str = "manifest"):
        self.manifest = manifest
        self.m, self.stride, self.size = m, stride, size
        if cap == "manifest":
            cap = manifest.window_cap
        self.refs: list[WindowRef] = []
        self._maps = {}
        for key in manifest.trials_of(split):
            hdr, vis, tac = self._map(key)
            starts = capped(window_starts(hdr.n_visual, hdr.n_tactile, m, stride), cap)
            self.refs += [WindowRef(key[0], key[1], s, hdr.label) for s in starts]

    def _map(self, key):
        if key not in self._maps:
            self._maps[key] = map_trial(self.manifest.path(key))
        return self._maps[key]

    def __len__(self):
        return len(self.refs)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.refs], dtype=int)

    def window(self, i: int) -> GraspWindow:
        r = self.refs[i]
        _, vis, tac = self._map((r.object_id, r.trial_id))
        return make_window(vis, tac, r.label, r.start, self.m, self.stride, self.size,
                           (r.object_id, r.trial_id, r.start))

    def windows(self, idx: Sequence[int]) -> list[GraspWindow]:
        return [self.window(i) for i in idx]


def batched(seq: Sequence, size: int) -> list:
    if size < 1:
        raise ValueError("batch size must be positive")
    return [seq[i : i + size] for i in range(0, len(seq), size)]


def epoch_order(n: int, split: str, epoch_seed: int) -> np.ndarray:
    if split == "train":
        return np.random.default_rng(epoch_seed).permutation(n)
    return np.arange(n)


def iterate_batches(manifest_or_index, split: str = "train", m: int = 5, stride: int = 1,
                    size: int = 64, batch: int = 8, epoch_seed: int = 0) -> Iterator[list[GraspWindow]]:
    """Batches of windows for one epoch; train order is shuffled by ``epoch_seed``, test is not."""
    if isinstance(manifest_or_index, WindowIndex):
        index = manifest_or_index
    else:
        index = WindowIndex(manifest_or_index, split, m, stride, size)
    if len(index) == 0:
        raise ValueError(f"split {split!r} has no windows")
    for chunk in batched(epoch_order(len(index), split, epoch_seed), batch):
        yield index.windows(chunk)
