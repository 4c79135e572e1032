"""Command-line interface: voxelize, gen-data, train, eval, saliency.

Options merge with precedence flags > config file > defaults.  The config
file is line-oriented `key=value` with `#` comments; keys must belong to the
subcommand's schema.  Exit codes: 0 success, 1 domain or argument error,
2 I/O error.  All outputs are written atomically (temp file then rename).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import datagen, evaluation, saliency
from .classes import LABEL_HUMAN, LABEL_MACHINE
from .errors import ArgumentError, ConfigError, VoxelformError
from .fileio import atomic_write_bytes, atomic_write_text
from .mesh import load_mesh, standardize
from .model import ModelConfig, build_model, load_checkpoint_file, save_checkpoint_file
from .training import TrainConfig, train, write_training_log
from .voxel import load_voxel_file, save_voxel_file
from .voxelize import voxelize


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_channels(text: str):
    try:
        channels = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"channels must be comma-separated integers, got {text!r}") from None
    return channels


# schema: key -> (converter, default, required)
_SCHEMAS = {
    "voxelize": {
        "in": (str, None, True),
        "out": (str, None, True),
        "res": (int, 32, False),
        "fill": (str, "surface", False),
    },
    "gen-data": {
        "out": (str, None, True),
        "train": (int, None, True),
        "test": (int, None, True),
        "res": (int, 32, False),
        "seed": (int, None, True),
    },
    "train": {
        "data": (str, None, True),
        "out": (str, None, True),
        "log": (str, None, False),
        "epochs": (int, 60, False),
        "lr": (float, 0.01, False),
        "momentum": (float, 0.9, False),
        "batch": (int, 8, False),
        "channels": (_parse_channels, (8, 16, 32, 64), False),
        "seed": (int, None, True),
        "shuffle": (_parse_bool, True, False),
    },
    "eval": {
        "model": (str, None, True),
        "data": (str, None, True),
        "split": (str, "test", False),
        "out": (str, None, True),
        "batch": (int, 8, False),
    },
    "saliency": {
        "model": (str, None, True),
        "in": (str, None, True),
        "out": (str, None, True),
        "mode": (str, "abs", False),
        "target": (str, "true", False),
        "label": (str, None, False),
        "score": (str, "logit", False),
        "proj": (str, None, False),
        "slice": (str, None, False),
        "ranks": (_parse_bool, False, False),
    },
}

_LIST_KEYS = {"proj", "slice"}  # repeatable flags, config value is comma-separated


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="voxelform", description="voxel form classification toolkit")
    sub = parser.add_subparsers(dest="command")
    for name, schema in _SCHEMAS.items():
        p = sub.add_parser(name, help=f"{name} subcommand")
        p.add_argument("--config", default=None, help="key=value config file")
        for key in schema:
            flag = f"--{key}"
            if key == "ranks":
                p.add_argument(flag, action="store_true", default=None)
            elif key in _LIST_KEYS:
                p.add_argument(flag, action="append", default=None)
            else:
                p.add_argument(flag, default=None)
    return parser


def _read_config_file(path: str, schema: dict) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in schema:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _convert_value(convert, key: str, raw: str):
    try:
        return convert(raw)
    except VoxelformError:
        raise
    except (ValueError, TypeError):
        raise ArgumentError(f"bad value for --{key}: {raw!r}") from None


def _merge_config(ns: argparse.Namespace, command: str) -> dict:
    schema = _SCHEMAS[command]
    file_values = {}
    if ns.config:
        file_values = _read_config_file(ns.config, schema)
    merged = {}
    for key, (convert, default, required) in schema.items():
        flag_value = getattr(ns, key.replace("-", "_"))
        if flag_value is not None:
            if key in _LIST_KEYS:
                merged[key] = list(flag_value)
            elif isinstance(flag_value, str):
                merged[key] = _convert_value(convert, key, flag_value)
            else:
                merged[key] = flag_value
        elif key in file_values:
            if key in _LIST_KEYS:
                merged[key] = [v.strip() for v in file_values[key].split(",") if v.strip()]
            else:
                merged[key] = _convert_value(convert, key, file_values[key])
        else:
            if required:
                raise ArgumentError(f"missing required option --{key}")
            merged[key] = default
    return merged


def cmd_voxelize(cfg: dict) -> int:
    mesh = load_mesh(cfg["in"])
    std, report = standardize(mesh)
    if cfg["fill"] not in ("surface", "solid"):
        raise ArgumentError(f"fill must be surface or solid, got {cfg['fill']!r}")
    grid = voxelize(std, cfg["res"], cfg["fill"])
    save_voxel_file(grid, cfg["out"])
    d, h, w = grid.dims
    print(
        f"wrote {cfg['out']}: dims {d}x{h}x{w}, occupancy {grid.occupancy_fraction():.6g}, "
        f"dropped {report.dropped_elements} degenerate triangles"
    )
    return 0


def cmd_gen_data(cfg: dict) -> int:
    manifest = datagen.gen_dataset(
        cfg["train"], cfg["test"], cfg["res"], cfg["seed"], cfg["out"]
    )
    per = {}
    for _, label, split in manifest.rows:
        per[(split, label)] = per.get((split, label), 0) + 1
    manifest_path = os.path.join(cfg["out"], "manifest.tsv")
    print(f"wrote {manifest_path}")
    for (split, label), count in sorted(per.items()):
        print(f"  {split}/{label}: {count}")
    return 0


def cmd_train(cfg: dict) -> int:
    manifest = datagen.load_manifest(cfg["data"])
    tx, ty = datagen.load_split_arrays(manifest, "train")
    val_split = "val" if any(s == "val" for _, _, s in manifest.rows) else "test"
    vx, vy = datagen.load_split_arrays(manifest, val_split)
    resolution = tx.shape[1]
    model_config = ModelConfig(resolution=resolution, channels=cfg["channels"])
    model = build_model(model_config, cfg["seed"])
    train_config = TrainConfig(
        seed=cfg["seed"],
        learning_rate=cfg["lr"],
        momentum=cfg["momentum"],
        batch_size=cfg["batch"],
        epochs=cfg["epochs"],
        shuffle=cfg["shuffle"],
    )
    model, records = train(model, (tx, ty), (vx, vy), train_config)
    save_checkpoint_file(model, cfg["out"])
    log_path = cfg["log"] or os.path.splitext(cfg["out"])[0] + "_log.csv"
    write_training_log(records, log_path)
    last = records[-1]
    print(
        f"wrote {cfg['out']} and {log_path}; epoch {last.epoch}: "
        f"train_acc {last.train_acc:.9g}, val_acc {last.val_acc:.9g} "
        f"(val split: {val_split})"
    )
    return 0


def cmd_eval(cfg: dict) -> int:
    model = load_checkpoint_file(cfg["model"])
    manifest = datagen.load_manifest(cfg["data"])
    items = manifest.items(cfg["split"])
    if not items:
        raise ArgumentError(f"manifest has no rows for split {cfg['split']!r}")
    cm, report, rows = evaluation.evaluate(model, items, cfg["batch"])
    atomic_write_text(cfg["out"], evaluation.format_report(cm, report, rows))
    print(f"wrote {cfg['out']}")
    print("confusion (true/pred):")
    for t in (LABEL_HUMAN, LABEL_MACHINE):
        cells = "  ".join(f"{p}={cm.cell(t, p)}" for p in (LABEL_HUMAN, LABEL_MACHINE))
        print(f"  true {t}: {cells}")
    print(
        f"accuracy {report.accuracy:.9g}, precision {report.precision:.9g}, "
        f"recall {report.recall:.9g} (positive: {report.positive_class})"
    )
    return 0


def _parse_slice_arg(text: str):
    axis, sep, idx = text.partition("=")
    if not sep:
        raise ArgumentError(f"slice must look like axis=index, got {text!r}")
    axis = axis.strip()
    if axis not in ("i", "j", "k"):
        raise ArgumentError(f"slice axis must be i, j, or k, got {axis!r}")
    try:
        index = int(idx)
    except ValueError:
        raise ArgumentError(f"slice index must be an integer, got {idx!r}") from None
    return axis, index


def cmd_saliency(cfg: dict) -> int:
    model = load_checkpoint_file(cfg["model"])
    grid = load_voxel_file(cfg["in"])
    if cfg["mode"] not in (saliency.MODE_ABS, saliency.MODE_SQUARE):
        raise ArgumentError(f"mode must be abs or square, got {cfg['mode']!r}")
    if cfg["score"] not in ("logit", "prob"):
        raise ArgumentError(f"score must be logit or prob, got {cfg['score']!r}")
    if cfg["target"] == "true":
        if cfg["label"] not in ("h", "m"):
            raise ArgumentError("--target true requires --label h or --label m")
        target = 0 if cfg["label"] == "h" else 1
        source = saliency.TARGET_TRUE
    elif cfg["target"] == "pred":
        probs, preds = evaluation.predict_batch(model, grid.data[None].astype(np.float64))
        target = int(preds[0])
        source = saliency.TARGET_PRED
    else:
        raise ArgumentError(f"target must be true or pred, got {cfg['target']!r}")
    result = saliency.compute_saliency(
        model, grid, target, mode=cfg["mode"], target_source=source, score=cfg["score"]
    )
    prefix = cfg["out"]
    written = []
    sal_path = f"{prefix}_saliency.vxg"
    save_voxel_file(saliency.to_scalar_grid(result.normalized), sal_path)
    written.append(sal_path)
    for axis in cfg["proj"] or []:
        proj = saliency.project(result.normalized, axis)
        pgm_path = f"{prefix}_proj_{proj.axis}.pgm"
        csv_path = f"{prefix}_proj_{proj.axis}.csv"
        atomic_write_bytes(pgm_path, saliency.pgm_bytes(proj.values))
        atomic_write_bytes(csv_path, saliency.csv_bytes(proj.values))
        written.extend([pgm_path, csv_path])
    for spec in cfg["slice"] or []:
        axis, index = _parse_slice_arg(spec)
        plane = saliency.slice_plane(result.normalized, axis, index)
        pgm_path = f"{prefix}_slice_{axis}{index}.pgm"
        csv_path = f"{prefix}_slice_{axis}{index}.csv"
        atomic_write_bytes(pgm_path, saliency.pgm_bytes(plane))
        atomic_write_bytes(csv_path, saliency.csv_bytes(plane))
        written.extend([pgm_path, csv_path])
    if cfg["ranks"]:
        bands = saliency.rank_bands(result.normalized, grid)
        ranks_path = f"{prefix}_ranks.vxg"
        save_voxel_file(saliency.to_scalar_grid(bands.bands), ranks_path)
        written.append(ranks_path)
    print(f"target class {target} ({source}), mode {result.mode}")
    for path in written:
        print(f"wrote {path}")
    return 0


_HANDLERS = {
    "voxelize": cmd_voxelize,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "saliency": cmd_saliency,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        if not ns.command:
            parser.print_usage(sys.stderr)
            return 1
        cfg = _merge_config(ns, ns.command)
        return _HANDLERS[ns.command](cfg)
    except VoxelformError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main(sys.argv[1:]))
