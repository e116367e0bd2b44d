import json

import numpy as np
import pytest

from flowsr.dataset import (
    lr_dirname,
    load_clips,
    list_frames,
    prepare_dataset,
    read_clip,
    read_manifest,
    to_luminance,
    write_clip,
)
from flowsr.degradation import DegradationModel, DegradationSpec, degrade_bi, rgb_to_luminance

BI4 = DegradationSpec(DegradationModel.BI, scale=4)
BD4 = DegradationSpec(DegradationModel.BD, scale=4)


def make_source(root, name, frames, rng):
    return write_clip(root / name, [rng.uniform(size=s) for s in frames])


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_full_hd_source_reaches_lr_geometry(tmp_path, rng):
    src = tmp_path / "src"
    make_source(src, "clip", [(1080, 1920, 3)] * 2, rng)
    manifest = prepare_dataset([src / "clip"], tmp_path / "out", [BI4, BD4], target_size=(540, 960))
    entry = manifest["clips"][0]
    assert entry["hr_size"] == [540, 960]
    assert entry["lr_size"] == [135, 240]
    for key in ("lr_bi_x4", "lr_bd_x4"):
        frames = read_clip(tmp_path / "out" / key / "clip")
        assert frames[0].shape == (135, 240, 3)


def test_prepare_is_byte_identical_on_rerun(tmp_path, rng):
    src = tmp_path / "src"
    make_source(src, "a", [(32, 48)] * 3, rng)
    make_source(src, "b", [(40, 36, 3)] * 2, rng)
    for out in ("one", "two"):
        prepare_dataset([src / "a", src / "b"], tmp_path / out, [BI4, BD4], seed=5)
    assert tree_bytes(tmp_path / "one") == tree_bytes(tmp_path / "two")


def test_manifest_contents(tmp_path, rng):
    src = tmp_path / "src"
    make_source(src, "a", [(34, 50)] * 2, rng)
    prepare_dataset([src / "a"], tmp_path / "out", [BI4])
    m = read_manifest(tmp_path / "out")
    assert m["scale"] == 4
    assert m["clips"][0]["hr_size"] == [32, 48]  # centre-cropped to a multiple of 4
    assert m["degradations"]["lr_bi_x4"]["model"] == "bi"
    json.dumps(m)


def test_prepare_rejects_mixed_scales(tmp_path):
    with pytest.raises(ValueError):
        prepare_dataset([], tmp_path, [BI4, DegradationSpec(scale=2)])
    with pytest.raises(ValueError):
        prepare_dataset([], tmp_path, [])


def test_missing_source_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        list_frames(tmp_path / "nope")
    (tmp_path / "empty").mkdir()
    with pytest.raises(FileNotFoundError):
        list_frames(tmp_path / "empty")


def test_load_clips_luminance_and_alignment(tmp_path, rng):
    src = tmp_path / "src"
    make_source(src, "c", [(32, 32, 3)] * 3, rng)
    prepare_dataset([src / "c"], tmp_path / "out", [BI4])
    (clip,) = load_clips(tmp_path / "out", "bi")
    assert clip.lr.shape == (3, 8, 8) and clip.hr.shape == (3, 32, 32)
    hr_rgb = read_clip(tmp_path / "out" / "hr" / "c")[0]
    np.testing.assert_allclose(clip.hr[0], rgb_to_luminance(hr_rgb), atol=1e-6)
    with pytest.raises(ValueError):
        load_clips(tmp_path / "out", "bd")


def test_lr_tree_matches_degradation(tmp_path, rng):
    src = tmp_path / "src"
    make_source(src, "g", [(16, 16)] * 2, rng)
    prepare_dataset([src / "g"], tmp_path / "out", [BI4])
    hr = read_clip(tmp_path / "out" / "hr" / "g")[0]
    lr = read_clip(tmp_path / "out" / lr_dirname(BI4) / "g")[0]
    np.testing.assert_allclose(lr, degrade_bi(hr, 4), atol=1 / 65535)


def test_to_luminance_passthrough():
    g = np.zeros((3, 3))
    assert to_luminance(g) is g
