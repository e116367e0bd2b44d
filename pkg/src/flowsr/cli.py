"""Command-line entry point: prepare, train, infer, evaluate, profile, flowviz.

Every invocation writes ``<runs-root>/<timestamp>-<name>/manifest.json``.
Settings come from an optional YAML file (top-level globals plus one section
per command); command-line flags override file values.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import dataset, flow_io, metrics, pipeline
from .degradation import DegradationSpec
from .flow_ops import PyramidFlows
from .synthetic import translating_dataset
from .training import NonFiniteLossError, TrainConfig, load_model, read_metrics, train

logger = logging.getLogger("flowsr")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

GLOBAL_KEYS = ("name", "seed", "scale", "degradation", "border_crop")


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


# --- configuration --------------------------------------------------------------


def load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse {p}: {err}") from err
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return data


def resolve_config(args: argparse.Namespace, file_cfg: dict) -> dict:
    """Merge globals and the command's section of ``file_cfg`` with flag overrides."""
    section = file_cfg.get(args.command, {}) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"config section '{args.command}' must be a mapping")
    cfg = {k: file_cfg[k] for k in GLOBAL_KEYS if k in file_cfg}
    cfg.update(section)
    for key, value in vars(args).items():
        if key in ("command", "config", "runs_root", "func", "verbose"):
            continue
        if value is not None:
            cfg[key] = value
    cfg.setdefault("name", args.command)
    cfg.setdefault("seed", 0)
    cfg.setdefault("scale", 4)
    cfg.setdefault("degradation", "bi")
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) in (None, [], "")]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Run:
    """Run directory plus the manifest describing one command invocation."""

    def __init__(self, root: Path, command: str, cfg: dict, config_path: Optional[str]):
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
        base = root / f"{stamp}-{cfg['name']}"
        path, k = base, 1
        while path.exists():
            path = base.with_name(f"{base.name}-{k}")
            k += 1
        self.dir = path
        self.dir.mkdir(parents=True)
        self.manifest = {
            "command": command,
            "config_path": str(config_path) if config_path else None,
            "config": cfg,
            "config_hash": config_hash(cfg),
            "seed": cfg["seed"],
            "started": _timestamp(),
            "finished": None,
            "exit_code": None,
            "artifacts": [],
        }
        logger.info("resolved config: %s", json.dumps(cfg, sort_keys=True, default=str))

    def artifact(self, path) -> Path:
        self.manifest["artifacts"].append(str(path))
        return Path(path)

    def finish(self, code: int, error: Optional[str] = None) -> Path:
        self.manifest["finished"] = _timestamp()
        self.manifest["exit_code"] = code
        if error:
            self.manifest["error"] = error
        out = self.dir / "manifest.json"
        out.write_text(json.dumps(self.manifest, indent=2, sort_keys=True, default=str) + "\n")
        return out


# --- helpers --------------------------------------------------------------------


def _spec(model: str, cfg: dict) -> DegradationSpec:
    kwargs: dict[str, Any] = {"model": model, "scale": int(cfg["scale"])}
    for key in ("gaussian_sigma", "kernel_size", "phase"):
        if cfg.get(key) is not None:
            kwargs[key] = cfg[key]
    try:
        return DegradationSpec(**kwargs)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _clip_dirs(root: Path) -> list[Path]:
    """A directory of frames is one clip; otherwise each sub-directory is a clip."""
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    has_frames = any(p.suffix.lower() in dataset.IMAGE_SUFFIXES for p in root.iterdir())
    if has_frames or not subdirs:
        return [root]
    return subdirs


def _luminance_clip(directory: Path) -> tuple[list[np.ndarray], list[np.ndarray]]:
    frames = dataset.read_clip(directory)
    return [dataset.to_luminance(f) for f in frames], frames


def _check_model_scale(model, cfg: dict) -> None:
    if cfg.get("scale") is not None and int(cfg["scale"]) != model.scale:
        raise ConfigError(f"checkpoint is x{model.scale} but --scale {cfg['scale']} was requested")


def _load_model(cfg: dict):
    path = Path(cfg["checkpoint"])
    if not path.is_file():
        raise DataError(f"checkpoint {path} does not exist")
    return load_model(path)


# --- commands -------------------------------------------------------------------


def cmd_prepare(cfg: dict, run: Run) -> None:
    _require(cfg, "sources", "out")
    models = cfg.get("degradations") or [cfg["degradation"]]
    specs = [_spec(m, cfg) for m in models]
    sources = [Path(s) for s in cfg["sources"]]
    for s in sources:
        if not s.is_dir():
            raise DataError(f"source clip directory {s} does not exist")
    target = tuple(cfg["target_size"]) if cfg.get("target_size") else None
    manifest = dataset.prepare_dataset(sources, cfg["out"], specs, target_size=target, seed=cfg["seed"])
    run.artifact(Path(cfg["out"]) / dataset.MANIFEST_NAME)
    for entry in manifest["clips"]:
        print(f"{entry['name']}: {entry['frames']} frames, HR {entry['hr_size']}, LR {entry['lr_size']}")


def _train_config(cfg: dict) -> TrainConfig:
    fields = set(TrainConfig.__dataclass_fields__)
    d = {k: v for k, v in cfg.items() if k in fields and k != "degradation"}
    d["scale"] = int(cfg["scale"])
    deg = cfg["degradation"]
    if isinstance(deg, dict):
        deg = {**deg, "scale": d["scale"]}
    else:
        deg = _spec(deg, cfg).to_dict()
    d["degradation"] = deg
    try:
        return TrainConfig.from_dict(d)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid training config: {err}") from err


def cmd_train(cfg: dict, run: Run) -> None:
    config = _train_config(cfg)
    val_clips = None
    if cfg.get("synthetic"):
        n = int(cfg["synthetic"])
        lr_size = int(cfg.get("synthetic_size", 32))
        frames = int(cfg.get("synthetic_frames", 7))
        deg = config.degradation
        clips = [c.clip for c in translating_dataset(config.seed, n, lr_size, frames, deg)]
        val_clips = [c.clip for c in translating_dataset(config.seed + 1, max(1, n // 4), lr_size, frames, deg)]
    else:
        _require(cfg, "data")
        try:
            clips = dataset.load_clips(cfg["data"], config.degradation.model.value)
            if cfg.get("val_data"):
                val_clips = dataset.load_clips(cfg["val_data"], config.degradation.model.value)
        except (FileNotFoundError, KeyError) as err:
            raise DataError(str(err)) from err
    run_dir = Path(cfg["out"]) if cfg.get("out") else run.dir
    trainer = train(config, clips, run_dir, val_clips=val_clips, resume=cfg.get("resume"))
    run.artifact(run_dir / "metrics.jsonl")
    run.artifact(run_dir / "checkpoints" / "last.pt")
    last = read_metrics(run_dir)[-1]
    print(f"finished at iteration {trainer.iteration}: loss {last.get('loss')}")


def cmd_infer(cfg: dict, run: Run) -> None:
    _require(cfg, "checkpoint", "input")
    model = _load_model(cfg)
    _check_model_scale(model, cfg)
    out_root = Path(cfg["out"]) if cfg.get("out") else run.dir / "sr"
    src = Path(cfg["input"])
    for clip_dir in _clip_dirs(src):
        y, raw = _luminance_clip(clip_dir)
        res = pipeline.super_resolve_clip(y, model, batch_size=int(cfg.get("batch_size") or 1))
        frames = [np.clip(f, 0.0, 1.0) for f in res.frames]
        if cfg.get("color") and raw[0].ndim == 3:
            frames = []
            for sr_y, f in zip(res.frames, raw):
                ycc = dataset.to_ycbcr(f)
                frames.append(pipeline.recombine_color(sr_y, ycc[..., 1], ycc[..., 2], model.scale))
        dest = out_root if clip_dir == src else out_root / clip_dir.name
        dataset.write_clip(dest, frames)
        run.artifact(dest)
        print(f"{clip_dir.name}: {len(frames)} frames -> {dest}")


def _load_gt_flows(directory: Path) -> dict:
    """Ground-truth HR flows stored as ``<i>_<j>.flo`` (backward flow F_{i->j})."""
    flows = {}
    for p in sorted(directory.glob("*.flo")):
        try:
            i, j = (int(v) for v in p.stem.split("_"))
        except ValueError as err:
            raise DataError(f"flow file {p.name} is not named <i>_<j>.flo") from err
        flows[(i, j)] = flow_io.read_flo(p)
    if not flows:
        raise DataError(f"no .flo files in {directory}")
    return flows


def cmd_evaluate(cfg: dict, run: Run) -> None:
    _require(cfg, "sr", "hr")
    s = int(cfg["scale"])
    crop = cfg.get("border_crop")
    protocol = metrics.EvalProtocol.for_scale(s) if crop is None else metrics.EvalProtocol(border_crop=int(crop))
    sr_root, hr_root = Path(cfg["sr"]), Path(cfg["hr"])
    reports = []
    for hr_dir in _clip_dirs(hr_root):
        sr_dir = sr_root if hr_dir == hr_root else sr_root / hr_dir.name
        sr, _ = _luminance_clip(sr_dir)
        hr, _ = _luminance_clip(hr_dir)
        try:
            reports.append(metrics.evaluate_sequence(sr, hr, protocol, name=hr_dir.name))
        except ValueError as err:
            raise DataError(f"{hr_dir.name}: {err}") from err
    if cfg.get("flows"):
        _require(cfg, "checkpoint", "lr")
        model = _load_model(cfg)
        _check_model_scale(model, cfg)
        lr, _ = _luminance_clip(Path(cfg["lr"]))
        study = pipeline.flow_study(lr, model, _load_gt_flows(Path(cfg["flows"])))
        reports[0].mean_epe = {"super_resolved": study["super_resolved"], "upsampled": study["upsampled"]}
    out = run.artifact(run.dir / "report.json")
    body = {"protocol": asdict(protocol), "sequences": [r.to_record() for r in reports]}
    out.write_text(json.dumps(body, indent=2) + "\n")
    print(metrics.format_table(reports))


def cmd_profile(cfg: dict, run: Run) -> None:
    _require(cfg, "inputs")
    axis, index = cfg.get("axis") or "row", cfg.get("index")
    for src in cfg["inputs"]:
        frames, _ = _luminance_clip(Path(src))
        idx = int(index) if index is not None else frames[0].shape[0 if axis == "row" else 1] // 2
        try:
            prof = metrics.temporal_profile(frames, axis, idx)
        except ValueError as err:
            raise ConfigError(str(err)) from err
        out = run.artifact(run.dir / f"profile_{Path(src).name}_{axis}{idx}.png")
        dataset.write_frame(out, prof)
        print(f"{src}: {axis} {idx} -> {out}")


def cmd_flowviz(cfg: dict, run: Run) -> None:
    max_radius = cfg.get("max_radius")
    if cfg.get("flo"):
        for p in cfg["flo"]:
            flow = flow_io.read_flo(p)
            out = run.artifact(run.dir / f"{Path(p).stem}.png")
            dataset.write_frame(out, flow_io.flow_to_color(flow, max_radius) / 255.0, bit_depth=8)
        return
    _require(cfg, "checkpoint", "input")
    model = _load_model(cfg)
    _check_model_scale(model, cfg)
    lr, _ = _luminance_clip(Path(cfg["input"]))
    i, j = cfg.get("pair") or (0, 1)
    if not (0 <= i < len(lr) and 0 <= j < len(lr)):
        raise ConfigError(f"frame pair ({i}, {j}) outside the {len(lr)}-frame clip")
    flows = _pair_flows(lr, model, i, j)
    for tier, flow in zip(PyramidFlows._fields, flows):
        hw2 = flow[0].permute(1, 2, 0).numpy().astype(np.float64)
        flo = run.artifact(run.dir / f"flow_{tier}_{i}_{j}.flo")
        flow_io.write_flo(flo, hw2)
        png = run.artifact(run.dir / f"flow_{tier}_{i}_{j}.png")
        dataset.write_frame(png, flow_io.flow_to_color(hw2, max_radius) / 255.0, bit_depth=8)
    print(f"wrote flow renderings for pair ({i}, {j}) to {run.dir}")


def _pair_flows(lr, model, i, j) -> PyramidFlows:
    import torch

    dtype = next(model.parameters()).dtype
    pair = torch.as_tensor(np.stack([lr[i], lr[j]]), dtype=dtype)[:, None]
    if pair.shape[-2] % 2 or pair.shape[-1] % 2:
        raise DataError(f"flow rendering needs even LR frame sizes, got {tuple(pair.shape[-2:])}")
    with torch.no_grad():
        return model.ofrnet(pair[:1], pair[1:])


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "infer": cmd_infer,
    "evaluate": cmd_evaluate,
    "profile": cmd_profile,
    "flowviz": cmd_flowviz,
}


# --- argument parsing -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="YAML config file; flags override its values")
    g.add_argument("--seed", type=int)
    g.add_argument("--scale", type=int)
    g.add_argument("--degradation", choices=["bi", "bd"])
    g.add_argument("--border-crop", type=int, help="evaluation border crop (default 6+s)")
    g.add_argument("--name", help="run name used in the run directory")
    g.add_argument("--runs-root", default="runs", help="where run directories are created")
    g.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="flowsr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="build HR/LR dataset trees")
    p.add_argument("--sources", nargs="+", help="source clip directories")
    p.add_argument("--out", help="dataset root to create")
    p.add_argument("--target-size", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--degradations", nargs="+", choices=["bi", "bd"])
    p.add_argument("--kernel-size", type=int, help="BD Gaussian kernel size (odd)")
    p.add_argument("--gaussian-sigma", type=float)

    p = sub.add_parser("train", parents=[common], help="joint end-to-end training")
    p.add_argument("--data", help="prepared dataset root")
    p.add_argument("--val-data")
    p.add_argument("--synthetic", type=int, metavar="N", help="train on N synthetic translating clips")
    p.add_argument("--out", help="training directory (default: the run directory)")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--total-iters", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--patch", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--halving-period", type=int)

    p = sub.add_parser("infer", parents=[common], help="super-resolve frame directories")
    p.add_argument("--checkpoint")
    p.add_argument("--input", help="LR clip directory (or directory of clips)")
    p.add_argument("--out")
    p.add_argument("--color", action="store_true", default=None, help="recombine with upscaled chroma")
    p.add_argument("--batch-size", type=int)

    p = sub.add_parser("evaluate", parents=[common], help="PSNR/SSIM (and EPE) reports")
    p.add_argument("--sr", help="SR clip directory (or directory of clips)")
    p.add_argument("--hr", help="HR clip directory (or directory of clips)")
    p.add_argument("--flows", help="directory of ground-truth <i>_<j>.flo HR flows")
    p.add_argument("--checkpoint", help="model used for the flow study")
    p.add_argument("--lr", help="LR clip used for the flow study")

    p = sub.add_parser("profile", parents=[common], help="temporal profile images")
    p.add_argument("--inputs", nargs="+", help="clip directories")
    p.add_argument("--axis", choices=["row", "column"])
    p.add_argument("--index", type=int)

    p = sub.add_parser("flowviz", parents=[common], help="colour-wheel flow renderings")
    p.add_argument("--checkpoint")
    p.add_argument("--input", help="LR clip directory")
    p.add_argument("--pair", type=int, nargs=2, metavar=("I", "J"))
    p.add_argument("--flo", nargs="+", help="render existing .flo files instead")
    p.add_argument("--max-radius", type=float)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args, load_config_file(args.config))
    except ConfigError as err:
        fallback = {"name": args.name or args.command, "seed": args.seed}
        return _fail(Run(Path(args.runs_root), args.command, fallback, args.config), EXIT_CONFIG,
                     "configuration error", err)
    run = Run(Path(args.runs_root), args.command, cfg, args.config)
    started = time.time()
    try:
        COMMANDS[args.command](cfg, run)
    except ConfigError as err:
        return _fail(run, EXIT_CONFIG, "configuration error", err)
    except NonFiniteLossError as err:
        return _fail(run, EXIT_NUMERICAL, "numerical failure", err)
    except (DataError, FileNotFoundError, OSError) as err:
        return _fail(run, EXIT_DATA, "data error", err)
    except ValueError as err:
        return _fail(run, EXIT_CONFIG, "configuration error", err)
    run.manifest["elapsed_seconds"] = round(time.time() - started, 3)
    run.finish(EXIT_OK)
    return EXIT_OK


def _fail(run: Run, code: int, kind: str, err: Exception) -> int:
    print(f"{kind}: {err}", file=sys.stderr)
    run.finish(code, f"{kind}: {err}")
    return code


if __name__ == "__main__":
    sys.exit(main())
