"""Command-line entry point: gen, train, eval, ablate, gradcheck, shapes, runloop.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 acceptance check failed.
Every run writes ``run.txt`` (tab-separated key/value) into its output directory;
``--config run.txt`` replays it. Precedence is flag > config file > default.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("vtfn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class Opt:
    dest: str
    default: object
    type: object = str
    nargs: str | None = None
    flag_only: bool = False  # store_true


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    if s.lower() in ("1", "true", "yes"):
        return True
    if s.lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _cap(s):
    return None if str(s).lower() == "none" else int(s)


class Command:
    """One subcommand: its parser plus the default table used for merging."""

    def __init__(self, sub, name, help):
        self.name = name
        self.parser = sub.add_parser(name, help=help, description=help)
        self.opts: dict[str, Opt] = {}
        self.required: list[str] = []
        self.add("--out", f"runs/{name}", help="output directory")
        self.add("--config", None, help="replay a run.txt; explicit flags still win")
        self.add("--deterministic", False, switch=True, help="force single-threaded math")

    def add(self, flag, default, type=str, unit="", help="", nargs=None, required=False,
            choices=None, switch=False):
        dest = flag.lstrip("-").replace("-", "_")
        shown = "required" if required else f"default: {default}"
        text = f"{help} [{unit}] ({shown})" if unit else f"{help} ({shown})"
        kw = dict(dest=dest, default=argparse.SUPPRESS, help=text)
        if switch:
            self.parser.add_argument(flag, action="store_true", **kw)
        else:
            self.parser.add_argument(flag, type=type, nargs=nargs, choices=choices, **kw)
        self.opts[dest] = Opt(dest, default, _bool if switch else type, nargs, switch)
        if required:
            self.required.append(dest)

    def resolve(self, ns: argparse.Namespace) -> dict:
        given = vars(ns)
        values = {k: o.default for k, o in self.opts.items()}
        cfg_path = given.get("config")
        if cfg_path:
            for key, raw in read_run_txt(cfg_path).items():
                if key == "command":
                    if raw != self.name:
                        raise UsageError(f"{cfg_path} records command {raw!r}, not {self.name!r}")
                    continue
                if key not in self.opts or key == "config":
                    continue
                o = self.opts[key]
                try:
                    if o.nargs:
                        values[key] = [o.type(x) for x in raw.split()]
                    else:
                        values[key] = None if raw == "None" else o.type(raw)
                except ValueError as exc:
                    raise UsageError(f"{cfg_path}: bad value for {key}: {exc}") from exc
        for k, v in given.items():
            if k in self.opts:
                values[k] = v
        missing = [k for k in self.required if values.get(k) in (None, "")]
        if missing:
            raise UsageError(f"{self.name}: missing required "
                             + ", ".join("--" + k.replace("_", "-") for k in missing))
        return values


def read_run_txt(path) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise UsageError(f"{path}:{n}: expected key<TAB>value")
        k, v = line.split("\t", 1)
        out[k] = v
    return out


def write_run_txt(out_dir, command: str, values: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"command\t{command}"]
    for k in sorted(values):
        if k == "config":
            continue
        v = values[k]
        v = " ".join(str(x) for x in v) if isinstance(v, (list, tuple)) else str(v)
        lines.append(f"{k}\t{v}")
    path = out / "run.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


# ---- subcommand bodies ---------------------------------------------------

def cmd_gen(v) -> int:
    from .data import build_dataset
    man = build_dataset(v["out"], n_objects=v["objects"], trials_per_object=v["trials"],
                        seed=v["seed"], img_size=v["img"], window_cap=v["window_cap"])
    print(f"wrote {len(man.trials)} trials for {len(man.objects)} objects to {v['out']}")
    print(f"train objects {man.split['train']}  test objects {man.split['test']}")
    return EXIT_OK


def _cap_or_manifest(cap):
    return "manifest" if cap is None else cap


def _model_config(v):
    from .model import ModelConfig
    return ModelConfig(v["modality"], v["m"], image_size=v["img"])


def _lr(v) -> float:
    from .train import PUBLISHED_LR
    return PUBLISHED_LR if v["published_lr"] else v["lr"]


def cmd_train(v) -> int:
    from .data import DatasetManifest
    from .train import train
    man = DatasetManifest.read(v["data"])
    out = Path(v["out"])
    res = train(man, _model_config(v), epochs=v["epochs"], lr=_lr(v), seed=v["seed"],
                ckpt_out=out / "model.vtfn", log_out=out / "train_log.csv", stride=v["stride"],
                batch=v["batch"], cap=_cap_or_manifest(v["window_cap"]))
    print(f"best epoch {res.best_epoch}: {res.best.summary()}")
    print(f"final: {res.final.summary()}")
    return EXIT_OK


def _metrics_table(m) -> str:
    from .states import CLASS_NAMES
    rows = ["class,precision,recall,f1"]
    for i, name in enumerate(CLASS_NAMES):
        rows.append(f"{name},{m.precision[i]:.4f},{m.recall[i]:.4f},{m.f1[i]:.4f}")
    rows.append(f"macro,{m.macro_precision:.4f},{m.macro_recall:.4f},{m.macro_f1:.4f}")
    return "\n".join(rows) + "\n"


def cmd_eval(v) -> int:
    from .data import DatasetManifest
    from .data.checkpoint import load_checkpoint
    from .metrics import confusion_csv
    from .train import evaluate
    model = load_checkpoint(v["ckpt"])
    man = DatasetManifest.read(v["data"])
    metrics = evaluate(model, man, v["split"], stride=v["stride"])
    out = Path(v["out"])
    (out / "metrics.csv").write_text(_metrics_table(metrics))
    (out / "confusion.csv").write_text(confusion_csv(metrics.confusion))
    print(metrics.summary())
    print(metrics.confusion)
    return EXIT_OK


def cmd_ablate(v) -> int:
    from .ablation import AblationGrid, run_ablation
    from .data import DatasetManifest
    from .model import MODALITIES
    mods = MODALITIES if "all" in v["modality"] else tuple(v["modality"])
    try:
        grid = AblationGrid(tuple(v["m"]), tuple(v["stride"]), tuple(v["img"]), mods,
                            v["epochs"], tuple(v["seed"]), _lr(v), v["batch"],
                            _cap_or_manifest(v["window_cap"]), v["big"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = run_ablation(grid, DatasetManifest.read(v["data"]), v["out"])
    print(f"{len(rows)} result rows in {Path(v['out']) / 'results.csv'}")
    for r in rows:
        print(f"{r['cell_id']:<36} params {r['params']:>10}  F1 {r['macro_f1']}")
    return EXIT_OK


def cmd_gradcheck(v) -> int:
    from .gradcheck import describe, gradcheck
    from .model import ModelConfig
    cfg = ModelConfig(v["modality"], v["m"], image_size=v["img"], reduced=v["img"] < 32)
    report = gradcheck(cfg, samples=v["samples"], h=v["h"], seed=v["seed"])
    for line in describe(report):
        print(line)
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_shapes(v) -> int:
    from .shapes import shape_report, undocumented
    lines = shape_report(v["m"], v["img"])
    for ln in lines:
        print(ln)
    bad = undocumented(lines)
    if bad:
        print("undocumented deviations: " + ", ".join(bad))
        return EXIT_CHECK
    return EXIT_OK


def cmd_runloop(v) -> int:
    from .control import GraspSetting, run_episode
    from .sim import generate_objects
    if v["data"]:
        from .data import DatasetManifest
        objects = DatasetManifest.read(v["data"]).objects
    else:
        objects = generate_objects(16, v["objects_seed"])
    if not 0 <= v["object"] < len(objects):
        raise UsageError(f"--object must be in 0..{len(objects) - 1}")
    obj = objects[v["object"]]
    assessor = "oracle"
    if v["assessor"] == "model":
        if not v["ckpt"]:
            raise UsageError("--assessor model needs --ckpt")
        from .data.checkpoint import load_checkpoint
        assessor = load_checkpoint(v["ckpt"])
    out = Path(v["out"])
    res = run_episode(obj, GraspSetting(v["init_w"], v["init_f"]), assessor, v["policy"],
                      v["max_ticks"], adjust_enabled=not v["no_adjust"], seed=v["seed"],
                      telemetry_out=out / "telemetry.csv")
    last = res.rows[-1]
    status = "converged" if res.converged else "not converged"
    print(f"object {obj.id} (d0 {obj.d0:.1f} mm): {status} after {res.ticks} ticks; "
          f"final w {last.width_mm:.1f} mm f {last.force_n:.1f} N true state {last.true_state}")
    return EXIT_OK


def build_parser():
    from .model import IMAGE_SIZES, MODALITIES
    parser = _Parser(prog="vtfn", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    cmds = {}

    c = cmds["gen"] = Command(sub, "gen", "generate the synthetic grasp corpus")
    c.add("--objects", 16, int, help="number of objects")
    c.add("--trials", 54, int, help="grasp trials per object")
    c.add("--img", 112, int, "px", "rendered image side")
    c.add("--seed", 0, int, help="master seed")
    c.add("--window-cap", 25, _cap, help="windows kept per trial, or none")

    c = cmds["train"] = Command(sub, "train", "train a model on a generated corpus")
    c.add("--data", None, help="corpus directory", required=True)
    c.add("--modality", "fusion", choices=MODALITIES, help="input branches")
    c.add("--m", 5, int, "frames", "visual sequence length")
    c.add("--stride", 1, int, "frames", "frame interval inside a window")
    c.add("--img", 64, int, "px", "network image side")
    c.add("--epochs", 15, int, help="training epochs")
    c.add("--lr", 1e-4, float, help="Adam learning rate")
    c.add("--published-lr", False, switch=True, help="use the published 1e-7 learning rate preset")
    c.add("--batch", 8, int, "windows", "batch size")
    c.add("--seed", 0, int, help="init and shuffle seed")
    c.add("--window-cap", None, int, help="override windows per trial (unset keeps the corpus cap)")

    c = cmds["eval"] = Command(sub, "eval", "evaluate a checkpoint on one split")
    c.add("--ckpt", None, help="checkpoint file", required=True)
    c.add("--data", None, help="corpus directory", required=True)
    c.add("--split", "test", choices=("train", "test"), help="split")
    c.add("--stride", 1, int, "frames", "frame interval inside a window")

    c = cmds["ablate"] = Command(sub, "ablate", "sweep sequence length, stride, image size, modality")
    c.add("--data", None, help="corpus directory", required=True)
    c.add("--m", [5], int, "frames", "sequence lengths", nargs="+")
    c.add("--stride", [1], int, "frames", "frame intervals", nargs="+")
    c.add("--img", [64], int, "px", f"image sides from {IMAGE_SIZES}", nargs="+")
    c.add("--modality", ["fusion"], choices=MODALITIES + ("all",), help="modalities", nargs="+")
    c.add("--epochs", 15, int, help="epochs per cell")
    c.add("--lr", 1e-4, float, help="Adam learning rate")
    c.add("--published-lr", False, switch=True, help="use the published 1e-7 learning rate preset")
    c.add("--batch", 8, int, "windows", "batch size")
    c.add("--seed", [0], int, help="seeds", nargs="+")
    c.add("--window-cap", None, int, help="override windows per trial (unset keeps the corpus cap)")
    c.add("--big", False, switch=True, help="allow 224 and 512 px cells")

    c = cmds["gradcheck"] = Command(sub, "gradcheck", "finite-difference gradient check, float64")
    c.add("--modality", "fusion", choices=MODALITIES, help="input branches")
    c.add("--m", 3, int, "frames", "visual sequence length")
    c.add("--img", 16, int, "px", "image side (16 is a reduced check size)")
    c.add("--samples", 6, int, help="probed coordinates per parameter tensor")
    c.add("--h", 1e-4, float, help="central-difference step")
    c.add("--seed", 0, int, help="seed")

    c = cmds["shapes"] = Command(sub, "shapes", "layer output sizes against the reference table")
    c.add("--m", 5, int, "frames", "visual sequence length")
    c.add("--img", 112, int, "px", "image side")

    c = cmds["runloop"] = Command(sub, "runloop", "closed-loop grasp regulation episode")
    c.add("--object", 0, int, help="object index")
    c.add("--data", None, help="take objects from this corpus instead of generating them")
    c.add("--objects-seed", 0, int, help="seed for generated objects when --data is absent")
    c.add("--init-w", 66.0, float, "mm", "initial gripper width")
    c.add("--init-f", 5.0, float, "N", "initial force limit")
    c.add("--assessor", "oracle", choices=("oracle", "model"), help="grasp state source")
    c.add("--ckpt", None, help="checkpoint for --assessor model")
    c.add("--policy", "paper_literal", choices=("paper_literal", "corrected"),
          help="excessive rule: literal raises force, corrected lowers it")
    c.add("--max-ticks", 200, int, "ticks", "episode length limit")
    c.add("--no-adjust", False, switch=True, help="hold the preset (no-adjustment baseline)")
    c.add("--seed", 0, int, help="render seed")
    return parser, cmds


HANDLERS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate,
            "gradcheck": cmd_gradcheck, "shapes": cmd_shapes, "runloop": cmd_runloop}


def main(argv=None) -> int:
    parser, cmds = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        cmd = cmds[ns.command]
        values = cmd.resolve(ns)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    guard = contextlib.nullcontext()
    if values["deterministic"]:
        from threadpoolctl import threadpool_limits
        guard = threadpool_limits(limits=1)
    try:
        with guard:
            write_run_txt(values["out"], ns.command, values)
            return HANDLERS[ns.command](values)
    except UsageError as exc:
        print(f"vtfn {ns.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"vtfn {ns.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
