"""Layer-by-layer shape report against the published reference table (H×W×T×C notation)."""
from __future__ import annotations

from dataclasses import dataclass

from .model import ModelConfig, build_plan

# name -> (kernel (T,H,W), stride, padding, c_out, printed output H×W×T×C)
REFERENCE = {
    "conv1": ((3, 3, 3), (1, 1, 1), (1, 1, 1), 64, (112, 112, 5, 64)),
    "pool1": ((1, 2, 2), (1, 2, 2), (0, 0, 0), None, (56, 56, 5, 64)),
    "conv2": ((3, 3, 3), (1, 1, 1), (1, 1, 1), 128, (56, 56, 5, 128)),
    "pool2": ((2, 2, 2), (2, 2, 2), (0, 0, 0), None, (28, 28, 2, 128)),
    "conv3a": ((3, 3, 3), (1, 1, 1), (1, 1, 1), 256, (28, 28, 2, 256)),
    "conv3b": ((3, 3, 3), (1, 1, 1), (1, 1, 1), 256, (28, 28, 2, 256)),
    "pool3": ((2, 2, 2), (2, 2, 2), (0, 0, 0), None, (14, 14, 1, 256)),
    "conv4a": ((3, 3, 3), (1, 1, 1), (1, 1, 1), 512, (14, 14, 1, 256)),
    "conv4b": ((3, 3, 3), (1, 1, 1), (1, 1, 1), 512, (14, 14, 1, 256)),
    "pool4": ((1, 2, 2), (1, 2, 2), (0, 0, 0), None, (7, 7, 1, 512)),
    "conv5a": ((3, 3, 3), (1, 1, 1), (1, 1, 1), 512, (7, 7, 1, 512)),
    "conv5b": ((3, 3, 3), (1, 1, 1), (1, 1, 1), 512, (7, 7, 1, 512)),
    "pool5": ((1, 2, 2), (1, 2, 2), (1, 0, 0), None, (4, 4, 1, 512)),
    "fc1": (None, None, None, 4096, (1, 1, 4096)),
    "fc2": (None, None, None, 4096, (1, 1, 4096)),
    "conv6": ((3, 3, 3), (1, 1, 1), (1, 1, 1), 8, (4, 4, 10, 8)),
    "pool6": ((2, 2, 2), (2, 2, 2), (0, 0, 0), None, (2, 2, 5, 8)),
    "conv7": ((3, 3, 3), (1, 1, 1), (1, 1, 1), 16, (2, 2, 5, 16)),
    "pool7": ((2, 2, 2), (2, 2, 2), (0, 0, 0), None, (1, 1, 2, 16)),
    "conv8": ((3, 1, 1), (1, 1, 1), (1, 0, 0), 32, (1, 1, 3, 32)),
    "pool8": ((2, 1, 1), (2, 1, 1), (0, 0, 0), None, (1, 1, 1, 32)),
    "fc3": (None, None, None, 128, (1, 1, 128)),
    "fc4": (None, None, None, 1, (1, 1, 1)),
}

# Known disagreements between the reference table and a consistent network.
DOCUMENTED = {
    "conv4a": "printed output channels 256 contradict the 512-filter kernel and pool4's 512 output; "
              "512 used",
    "conv4b": "printed output channels 256 contradict the 512-filter kernel and pool4's 512 output; "
              "512 used",
    "conv8": "pool7 leaves 2 time steps and a padded kernel of 3 preserves that; a printed "
             "extent of 3 is unreachable",
    "pool5": "printed pad (1,0,0) would give 3×3×3 from 7×7×1; spatial pad (0,1,1) "
             "yields the printed 4×4×1",
}

DEFAULT_M, DEFAULT_IMG = 5, 112


def fmt_dims(d) -> str:
    return "×".join(str(x) for x in d)


def hwtc(out_dims) -> tuple[int, ...]:
    c, t, h, w = out_dims
    return (h, w, t, c)


@dataclass
class ShapeLine:
    name: str
    computed: tuple
    printed: tuple | None
    status: str  # MATCH | DEVIATION | UNDOCUMENTED | n/a
    note: str = ""

    def __str__(self):
        printed = fmt_dims(self.printed) if self.printed else "n/a"
        s = f"{self.name:<7} table {printed:>14}  computed {fmt_dims(self.computed)} {self.status}"
        return s + (f"  ({self.note})" if self.note else "")


def _layer_rows(plan):
    for pl in plan.visual:
        yield pl.spec, hwtc(pl.out_dims)
        # fc rows follow the visual convs in the table
    for spec in plan.fc:
        if spec.name in ("fc1", "fc2"):
            yield spec, (1, 1, spec.n_out)
    for pl in plan.tactile:
        yield pl.spec, hwtc(pl.out_dims)
    for spec in plan.fc:
        if spec.name == "fc3":
            yield spec, (1, 1, spec.n_out)
        elif spec.name == "fc4":
            yield spec, (1, 1, 1)  # argmax over the class logits


def _matches(spec, ref) -> bool:
    kernel, stride, padding, c_out, printed = ref
    if spec.kind == "linear":
        return True
    same = (tuple(spec.kernel), tuple(spec.stride), tuple(spec.padding)) == (kernel, stride, padding)
    if spec.kind == "conv3d":
        same = same and spec.c_out == c_out
    return same


def shape_report(m: int = DEFAULT_M, img: int = DEFAULT_IMG, modality: str = "fusion"):
    """One ShapeLine per layer; the table is only comparable at its own (m, img)."""
    plan = build_plan(ModelConfig(modality, m, image_size=img))
    comparable = (m, img) == (DEFAULT_M, DEFAULT_IMG)
    lines = []
    for spec, dims in _layer_rows(plan):
        if not comparable:
            lines.append(ShapeLine(spec.name, dims, None, "n/a"))
            continue
        ref = REFERENCE[spec.name]
        ok = dims == ref[4] and _matches(spec, ref)
        if ok:
            lines.append(ShapeLine(spec.name, dims, ref[4], "MATCH"))
        elif spec.name in DOCUMENTED:
            lines.append(ShapeLine(spec.name, dims, ref[4], "DEVIATION", DOCUMENTED[spec.name]))
        else:
            lines.append(ShapeLine(spec.name, dims, ref[4], "UNDOCUMENTED"))
    return lines


def undocumented(lines) -> list[str]:
    return [ln.name for ln in lines if ln.status == "UNDOCUMENTED"]
