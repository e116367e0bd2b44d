"""Frame-directory I/O, dataset preparation and loading.

Prepared layout::

    root/manifest.json
    root/hr/<clip>/00000.png
    root/lr_bi_x{s}/<clip>/00000.png
    root/lr_bd_x{s}/<clip>/00000.png

Frames are stored as 16-bit lossless PNG with the source channel count.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import cv2
import numpy as np

from .degradation import (
    Clip,
    DegradationModel,
    DegradationSpec,
    crop_to_multiple,
    degrade,
    imresize,
    rgb_to_luminance,
    rgb_to_ycbcr,
)

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".tif", ".tiff", ".bmp", ".ppm", ".pgm"}
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1

PathLike = Union[str, Path]


def read_frame(path: PathLike) -> np.ndarray:
    """Read an 8/16-bit image as float64 in [0, 1]; colour frames come back RGB."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FileNotFoundError(f"cannot read image {path}")
    if img.dtype == np.uint8:
        out = img.astype(np.float64) / 255.0
    elif img.dtype == np.uint16:
        out = img.astype(np.float64) / 65535.0
    else:
        raise ValueError(f"{path}: unsupported pixel type {img.dtype}")
    if out.ndim == 3:
        out = out[..., :3][..., ::-1]
    return np.ascontiguousarray(out)


def write_frame(path: PathLike, frame: np.ndarray, bit_depth: int = 16) -> None:
    frame = np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0)
    if bit_depth == 16:
        data = np.round(frame * 65535.0).astype(np.uint16)
    elif bit_depth == 8:
        data = np.round(frame * 255.0).astype(np.uint8)
    else:
        raise ValueError(f"bit depth must be 8 or 16, got {bit_depth}")
    if data.ndim == 3:
        data = np.ascontiguousarray(data[..., ::-1])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), data):
        raise OSError(f"failed to write {path}")


def list_frames(directory: PathLike) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"frame directory {d} does not exist")
    frames = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not frames:
        raise FileNotFoundError(f"no image frames in {d}")
    return frames


def read_clip(directory: PathLike) -> list[np.ndarray]:
    return [read_frame(p) for p in list_frames(directory)]


def write_clip(directory: PathLike, frames: Iterable[np.ndarray], bit_depth: int = 16) -> list[Path]:
    paths = []
    for t, f in enumerate(frames):
        p = Path(directory) / f"{t:05d}.png"
        write_frame(p, f, bit_depth)
        paths.append(p)
    return paths


def to_luminance(frame: np.ndarray) -> np.ndarray:
    return frame if frame.ndim == 2 else rgb_to_luminance(frame)


def to_ycbcr(frame: np.ndarray) -> np.ndarray:
    """(H, W, 3) YCbCr; single-channel frames get neutral chroma."""
    if frame.ndim == 2:
        neutral = np.full_like(frame, 128.0 / 255.0)
        return np.stack([frame, neutral, neutral], axis=-1)
    return rgb_to_ycbcr(frame)


def lr_dirname(spec: DegradationSpec) -> str:
    return f"lr_{spec.model.value}_x{spec.scale}"


def prepare_dataset(
    sources: Sequence[PathLike],
    out_root: PathLike,
    specs: Sequence[DegradationSpec],
    target_size: Optional[tuple[int, int]] = None,
    seed: int = 0,
) -> dict:
    """Build HR and LR trees from source clip directories and write a manifest.

    ``target_size`` first resizes each source frame (bicubic, antialiased),
    then frames are centre-cropped to a multiple of the scale.
    """
    if not specs:
        raise ValueError("at least one degradation spec is required")
    scales = {sp.scale for sp in specs}
    if len(scales) != 1:
        raise ValueError(f"all degradation specs must share one scale, got {sorted(scales)}")
    s = scales.pop()
    out_root = Path(out_root)
    clips = []
    for src in sources:
        src = Path(src)
        name = src.name
        frames = read_clip(src)
        hr_frames = []
        for f in frames:
            if target_size is not None and f.shape[:2] != tuple(target_size):
                f = np.clip(imresize(f, tuple(target_size)), 0.0, 1.0)
            hr_frames.append(crop_to_multiple(f, s))
        write_clip(out_root / "hr" / name, hr_frames)
        entry = {
            "name": name,
            "frames": len(hr_frames),
            "hr_size": list(hr_frames[0].shape[:2]),
            "channels": 1 if hr_frames[0].ndim == 2 else 3,
        }
        for sp in specs:
            lr = [degrade(f, sp) for f in hr_frames]
            write_clip(out_root / lr_dirname(sp) / name, lr)
            entry["lr_size"] = list(lr[0].shape[:2])
        clips.append(entry)
        logger.info("prepared clip %s (%d frames)", name, len(hr_frames))
    manifest = {
        "version": MANIFEST_VERSION,
        "scale": s,
        "seed": seed,
        "target_size": list(target_size) if target_size else None,
        "degradations": {lr_dirname(sp): sp.to_dict() for sp in specs},
        "clips": clips,
    }
    (out_root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(root: PathLike) -> dict:
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    return json.loads(path.read_text())


def load_clips(root: PathLike, degradation: str = "bi", names: Optional[Sequence[str]] = None) -> list[Clip]:
    """Load luminance clips of a prepared dataset for one degradation model."""
    manifest = read_manifest(root)
    s = manifest["scale"]
    lr_key = f"lr_{DegradationModel(degradation).value}_x{s}"
    if lr_key not in manifest["degradations"]:
        raise ValueError(f"dataset has no {lr_key} tree (available: {sorted(manifest['degradations'])})")
    clips = []
    for entry in manifest["clips"]:
        if names is not None and entry["name"] not in names:
            continue
        hr = np.stack([to_luminance(f) for f in read_clip(Path(root) / "hr" / entry["name"])])
        lr = np.stack([to_luminance(f) for f in read_clip(Path(root) / lr_key / entry["name"])])
        clips.append(Clip(entry["name"], lr.astype(np.float32), hr.astype(np.float32), s))
    return clips
