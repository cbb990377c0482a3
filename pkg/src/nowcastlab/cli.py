"""Command-line pipeline: synth, split, patchify, train, predict, evaluate, plot.

Every subcommand accepts ``--config``, an INI file whose keys override the
bundled toy config, and writes ``provenance.json`` beside its outputs.
Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import platform
import sys
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from . import grid_store as gs
from . import transform as tf
from .partition import SplitPlan, build_split
from .patchwork import PatchOperator, PatchSpec, naive_patch, patch_origin, resize_full_map, tile_grid

log = logging.getLogger("nowcastlab")

PROVENANCE_NAME = "provenance.json"
FORECAST_NAME = "forecast.json"
TILE_NAME = "tile.json"


class ConfigError(ValueError):
    """Invalid configuration; reported as a usage error."""


# -- configuration --------------------------------------------------------

def bundled_config_path(name: str = "toy.ini") -> Path:
    return Path(str(resources.files("nowcastlab") / "configs" / name))


def load_config(path=None) -> configparser.ConfigParser:
    """The bundled toy config, overlaid with ``path`` when given."""
    cp = configparser.ConfigParser()
    paths = [bundled_config_path()]
    if path:
        paths.append(Path(path))
        if not paths[-1].exists():
            raise ConfigError(f"config file not found: {path}")
    try:
        cp.read(paths)
    except configparser.Error as e:
        raise ConfigError(f"unreadable config {paths[-1]}: {' '.join(str(e).split())}") from None
    return cp


def _coerce(text: str, default):
    text = text.strip()
    if text.lower() == "none":
        return None
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        return tuple(kind(p) for p in text.split(","))
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if default is None:
        for kind in (int, float):
            try:
                return kind(text)
            except ValueError:
                pass
    return text


def section_to(cls, cp: configparser.ConfigParser, section: str, skip=(), **overrides):
    """Build dataclass ``cls`` from an INI section, then apply non-None overrides."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    kwargs = {}
    if cp.has_section(section):
        for key, text in cp.items(section):
            if key in skip:
                continue
            if key not in fields:
                raise ConfigError(f"[{section}] unknown key {key!r}")
            try:
                kwargs[key] = _coerce(text, getattr(defaults, key))
            except ValueError as e:
                raise ConfigError(f"[{section}] {key}: {e}") from None
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}] {e}") from None


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(_jsonable(cfg), sort_keys=True).encode()).hexdigest()


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def write_provenance(out_dir, command: str, cfg: dict, seed, argv) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "command": command,
        "config": _jsonable(cfg),
        "config_hash": config_hash({"command": command, **cfg}),
        "seed": seed,
        "argv": list(argv),
        "versions": {
            "python": platform.python_version(),
            **{d: _version(d) for d in ("nowcastlab", "numpy", "scipy", "torch")},
        },
    }
    path = out_dir / PROVENANCE_NAME
    path.write_text(json.dumps(record, indent=1, sort_keys=True))
    return path


# -- subcommands ------------------------------------------------------------

def cmd_synth(args, cp):
    from .synthgen import SceneConfig, generate_scene

    scene = section_to(SceneConfig, cp, "scene", seed=args.seed)
    seqs = generate_scene(scene)
    gs.write_dataset(seqs, args.out)
    write_provenance(args.out, "synth", {"scene": scene}, scene.seed, args.argv)
    print(f"wrote {scene.frame_count} frames of {scene.rows}x{scene.cols} to {args.out}")


def _split_settings(cp, args):
    sec = cp["split"] if cp.has_section("split") else {}
    k = args.k if getattr(args, "k", None) is not None else int(sec.get("k", 47))
    seed = args.seed if getattr(args, "seed", None) is not None else int(sec.get("seed", 0))
    return k, seed


def _n_frames(data_dir) -> int:
    seqs = gs.read_dataset(data_dir)
    if "precip_mm_per_h" not in seqs:
        raise gs.DatasetError(f"{data_dir} has no precipitation channel")
    return len(seqs["precip_mm_per_h"])


def cmd_split(args, cp):
    k, seed = _split_settings(cp, args)
    plan = build_split(_n_frames(args.data), k, seed)
    out = Path(args.out)
    plan.save(out)
    write_provenance(out.parent, "split", {"k": k, "data": str(args.data)}, seed, args.argv)
    print(f"{plan.n_sequences} sequences, {plan.discarded} frames discarded -> {out}")


def _unit_sequence(channel, values, timestamps):
    values = np.asarray(values, dtype=np.float32)
    return gs.FrameSequence(channel, gs.GridGeometry.unit(*values.shape[1:]), timestamps, values)


def _profile_fraction_channels(seqs):
    """Physical stack of the dynamic channels: precip plus one-hot profile fractions."""
    from .synthgen import N_PROFILE_TYPES

    p = seqs["precip_mm_per_h"]
    chans = {"precip_mm_per_h": p.values.astype(np.float64)}
    if "temp_profile_type" in seqs:
        oh = tf.one_hot(seqs["temp_profile_type"].values, N_PROFILE_TYPES)
        for c in range(N_PROFILE_TYPES):
            chans[f"temp_profile_frac_{c}"] = oh[:, c].astype(np.float64)
    return chans, p.timestamps


def cmd_patchify(args, cp):
    seqs = gs.read_dataset(args.data)
    if "precip_mm_per_h" not in seqs:
        raise gs.DatasetError(f"{args.data} has no precipitation channel")
    chans, ts = _profile_fraction_channels(seqs)
    relief = seqs["relief_m"] if "relief_m" in seqs else None
    out = Path(args.out)
    cfg = {"mode": args.mode, "isize": args.isize, "tsize": args.tsize, "step": args.step, "freq": args.freq,
           "data": str(args.data)}
    if args.mode == "resize":
        shape = (args.isize, args.isize)
        new = [_unit_sequence(c, np.maximum(resize_full_map(v, shape), 0) if c == "precip_mm_per_h"
                              else resize_full_map(v, shape), ts) for c, v in chans.items()]
        if relief is not None:
            new.append(_unit_sequence("relief_m", resize_full_map(relief.values, shape), relief.timestamps))
        gs.write_dataset(new, out)
        write_provenance(out, "patchify", cfg, None, args.argv)
        print(f"resized {len(ts)} frames to {args.isize}x{args.isize} -> {out}")
        return
    try:
        spec = PatchSpec(args.isize, args.tsize, args.step, args.freq)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    shape = seqs["precip_mm_per_h"].geometry.shape
    tiles = tile_grid(shape, spec.tsize)
    op = PatchOperator(spec) if args.mode == "patch" else None
    for tile in tiles:
        origin = patch_origin(tile, spec)

        def view(stack):
            if op is not None:
                return op.apply(np.concatenate([op.footprints(a, [origin]) for a in stack]))
            return np.stack([naive_patch(a, spec, origin) for a in stack])

        new = [_unit_sequence(c, view(v), ts) for c, v in chans.items()]
        if relief is not None:
            new.append(_unit_sequence("relief_m", view(relief.values.astype(np.float64)), relief.timestamps))
        d = out / f"tile_{tile.row}_{tile.col}"
        gs.write_dataset(new, d)
        meta = {**dataclasses.asdict(tile), "origin": list(origin), "map_shape": list(shape), "mode": args.mode,
                "spec": dataclasses.asdict(spec), "reach": op.reach if op else spec.margin}
        (d / TILE_NAME).write_text(json.dumps(meta, indent=1))
    write_provenance(out, "patchify", cfg, None, args.argv)
    print(f"{len(tiles)} tiles ({args.mode}) -> {out}")


def _loss_config(spec: str | None, cp):
    from .losses import LossConfig

    if spec and Path(spec).suffix == ".ini":
        return _preset_with_overrides(load_config(spec))
    if spec:
        try:
            return LossConfig.preset(spec)
        except ValueError as e:
            raise ConfigError(str(e)) from None
    return _preset_with_overrides(cp)


def _preset_with_overrides(cp):
    from .losses import LossConfig

    name = cp.get("loss", "preset", fallback="wssim_wmse")
    try:
        base = LossConfig.preset(name)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    extra = section_to(LossConfig, cp, "loss", skip=("preset",))
    given = {k for k in (cp["loss"] if cp.has_section("loss") else {}) if k != "preset"}
    return dataclasses.replace(base, **{k: getattr(extra, k) for k in given})


def _load_split_data(data_dir, plan_path, cp, args):
    from .samples import RawData

    raw = RawData.from_sequences(gs.read_dataset(data_dir))
    if plan_path:
        plan = SplitPlan.load(plan_path)
    else:
        k, seed = _split_settings(cp, args)
        plan = build_split(len(raw), k, seed)
    if plan.total_frames != len(raw):
        raise ConfigError(f"split plan covers {plan.total_frames} frames but {data_dir} has {len(raw)}")
    return raw, plan


def cmd_train(args, cp):
    from .models import ModelConfig, build_model
    from .samples import SampleSet, ViewSpec, fit_stats
    from .trainer import TrainConfig, train

    view = section_to(ViewSpec, cp, "view", mode=args.mode, spatial=args.spatial)
    model_cfg = section_to(ModelConfig, cp, "model", kind=args.model, base_width=args.scale,
                           spatial=view.spatial, seed=args.seed)
    train_cfg = section_to(TrainConfig, cp, "train", max_steps=args.steps, seed=args.seed,
                           checkpoint_dir=str(args.out))
    loss_cfg = _loss_config(args.loss, cp)
    raw, plan = _load_split_data(args.data, args.plan, cp, args)
    if view.mode == "full" and raw.shape != (view.spatial, view.spatial):
        raise ConfigError(f"view mode 'full' needs a {view.spatial}x{view.spatial} map, data is {raw.shape}")
    stats = fit_stats(raw, plan)
    tr, va = (SampleSet(raw, plan, s, view, stats) for s in ("train", "val"))
    if not len(tr) or not len(va):
        raise ConfigError("train or val split has no windows; the dataset is too short for this plan")
    model = build_model(model_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    plan.save(out / "split.json")
    meta = {"data": str(Path(args.data).resolve()), "plan": plan.to_dict()}
    result = train(model, tr, va, loss_cfg, train_cfg, meta)
    cfg = {"model": model_cfg, "train": train_cfg, "loss": loss_cfg, "view": view, "data": meta["data"],
           "split": {"k": plan.k, "seed": plan.seed}}
    write_provenance(out, "train", cfg, train_cfg.seed, args.argv)
    print(f"best val {result.best_val:.6g} at step {result.best_step} -> {result.checkpoint}")


def cmd_predict(args, cp):
    from .samples import RawData, SampleSet, ViewSpec
    from .trainer import load_checkpoint, predict

    model, payload = load_checkpoint(args.ckpt)
    data = args.data or payload.get("data")
    if not data:
        raise ConfigError("checkpoint records no dataset; pass --data")
    seqs = gs.read_dataset(data)
    raw = RawData.from_sequences(seqs)
    plan = SplitPlan.from_dict(payload["plan"])
    if plan.total_frames != len(raw):
        raise ConfigError(f"checkpoint split covers {plan.total_frames} frames but {data} has {len(raw)}")
    view = ViewSpec(**payload["view"])
    if model.config.spatial != view.spatial:
        raise ConfigError(f"checkpoint model side {model.config.spatial} does not match view side {view.spatial}")
    ss = SampleSet(raw, plan, args.split, view, payload["norm_stats"])
    geometry = seqs["precip_mm_per_h"].geometry
    out = Path(args.out)
    forecasts = predict(model, ss, seed=args.seed)
    for fc in forecasts:
        d = out / str(fc.issue_time)
        seq = gs.FrameSequence("precip_mm_per_h", geometry, fc.timestamps,
                               np.maximum(fc.values, 0).astype(np.float32))
        gs.write_dataset([seq], d)
        (d / FORECAST_NAME).write_text(json.dumps(
            {"issue_time": fc.issue_time, "lead_times": fc.lead_times, "window_index": fc.window_index}))
    write_provenance(out, "predict", {"ckpt": str(args.ckpt), "split": args.split, "data": str(data)},
                     args.seed, args.argv)
    print(f"{len(forecasts)} forecasts -> {out}")


def _forecast_dirs(pred_dir: Path):
    dirs = sorted((d for d in pred_dir.iterdir() if (d / FORECAST_NAME).exists()),
                  key=lambda d: int(d.name) if d.name.lstrip("-").isdigit() else d.name)
    if not dirs:
        raise gs.DatasetError(f"no forecasts under {pred_dir}")
    return dirs


def cmd_evaluate(args, cp):
    from .verify import score_run

    truth = gs.read_dataset(args.truth)["precip_mm_per_h"]
    where = {int(t): i for i, t in enumerate(truth.timestamps)}
    preds, truths, valid, truth_ts, leads = [], [], [], [], None
    for d in _forecast_dirs(Path(args.pred)):
        meta = json.loads((d / FORECAST_NAME).read_text())
        seq = gs.read_dataset(d)["precip_mm_per_h"]
        missing = [int(t) for t in seq.timestamps if int(t) not in where]
        if missing:
            raise gs.DatasetError(f"forecast {d.name}: no truth frame at time {missing[0]}")
        if leads is None:
            leads = meta["lead_times"]
        elif meta["lead_times"] != leads:
            raise gs.DatasetError(f"forecast {d.name}: lead times {meta['lead_times']} differ from {leads}")
        expected = [meta["issue_time"] + lt for lt in meta["lead_times"]]
        idx = [where[int(t)] for t in seq.timestamps]
        preds.append(seq.values)
        truths.append(truth.values[idx])
        valid.append(expected)
        truth_ts.append(truth.timestamps[idx])
    table = score_run(preds, truths, leads, valid_times=valid, truth_times=truth_ts)
    out = Path(args.out)
    table.write_csv(out)
    write_provenance(out.parent, "evaluate", {"pred": str(args.pred), "truth": str(args.truth)}, None, args.argv)
    print(f"scored {len(preds)} forecasts -> {out}")


def cmd_plot(args, cp):
    from .verify import ScoreTable, plot_scores

    tables = {}
    for item in args.scores:
        label, _, path = item.rpartition("=")
        path = Path(path)
        if not path.exists():
            raise gs.DatasetError(f"scores file not found: {path}")
        tables[label or path.stem] = ScoreTable.read_csv(path)
    paths = plot_scores(tables, args.out)
    write_provenance(args.out, "plot", {"scores": list(args.scores)}, None, args.argv)
    print(f"{len(paths)} figures -> {args.out}")


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nowcastlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="INI config (defaults to the bundled toy config)")
        sp.set_defaults(func=func)
        return sp

    sp = cmd("synth", cmd_synth, "generate a synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)

    sp = cmd("split", cmd_split, "build and save a block-sequence split plan")
    sp.add_argument("--data", required=True)
    sp.add_argument("--k", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True, help="plan JSON path")

    sp = cmd("patchify", cmd_patchify, "tile a dataset into patches, or resize it")
    sp.add_argument("--data", required=True)
    sp.add_argument("--isize", type=int, default=256)
    sp.add_argument("--tsize", type=int, default=128)
    sp.add_argument("--step", type=int, default=1)
    sp.add_argument("--freq", type=int, default=20)
    sp.add_argument("--mode", choices=("patch", "naive", "resize"), default="patch")
    sp.add_argument("--out", required=True)

    sp = cmd("train", cmd_train, "train a model")
    sp.add_argument("--data", required=True)
    sp.add_argument("--plan", help="split plan JSON (built from [split] when omitted)")
    sp.add_argument("--model", choices=("unet", "convlstm", "svglp"))
    sp.add_argument("--scale", type=float, help="channel-width multiplier")
    sp.add_argument("--loss", help="loss preset name or INI file with a [loss] section")
    sp.add_argument("--mode", choices=("full", "resize", "patch", "naive"), help="spatial view")
    sp.add_argument("--spatial", type=int, help="model input side")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = cmd("predict", cmd_predict, "write mm/h forecasts for one split")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--split", choices=("train", "val", "test"), default="test")
    sp.add_argument("--data", help="dataset (defaults to the one recorded in the checkpoint)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = cmd("evaluate", cmd_evaluate, "score forecasts against truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--out", required=True, help="scores CSV path")

    sp = cmd("plot", cmd_plot, "plot metric-vs-lead-time figures")
    sp.add_argument("--scores", required=True, nargs="+", help="CSV paths, optionally LABEL=PATH")
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cp = load_config(args.config)
        args.func(args, cp)
    except ConfigError as e:
        print(f"nowcastlab {args.command}: config error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print(f"nowcastlab {args.command}: interrupted", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - every failure becomes one diagnostic line
        msg = " ".join(str(e).split()) or type(e).__name__
        print(f"nowcastlab {args.command}: {type(e).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
