"""Joint end-to-end training: batches, Adam with step-halving schedule, checkpoints."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
import torch

from .degradation import Clip, DegradationSpec, SampleConfig, TrainingSample, sample_training_example
from .losses import LossWeights, TierFrames, loss_ofr, loss_sr, loss_total
from .metrics import psnr
from .model import ModelConfig, VideoSR

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class NonFiniteLossError(RuntimeError):
    def __init__(self, iteration: int, diagnostics: dict):
        super().__init__(f"non-finite loss at iteration {iteration}: {diagnostics.get('losses')}")
        self.iteration = iteration
        self.diagnostics = diagnostics


@dataclass
class TrainConfig:
    name: str = "run"
    seed: int = 0
    scale: int = 4
    n_frames: int = 3
    patch: int = 32
    augment: bool = True
    batch_size: int = 16
    lr0: float = 1e-4
    halving_period: int = 50_000
    total_iters: int = 300_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: Optional[float] = None
    log_every: int = 100
    val_every: int = 5_000
    checkpoint_every: int = 5_000
    val_samples: int = 32
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    loss: LossWeights = field(default_factory=LossWeights)
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.degradation, dict):
            self.degradation = DegradationSpec(**self.degradation)
        if isinstance(self.loss, dict):
            self.loss = LossWeights(**self.loss)
        if self.n_frames % 2 == 0 or self.n_frames < 3:
            raise ValueError(f"n_frames must be odd and >= 3, got {self.n_frames}")
        if self.loss.n_frames != self.n_frames:
            raise ValueError(
                f"loss temporal window {self.loss.n_frames} does not match n_frames {self.n_frames}"
            )
        if self.degradation.scale != self.scale:
            raise ValueError(f"degradation scale {self.degradation.scale} != model scale {self.scale}")
        for name in ("batch_size", "lr0", "halving_period", "total_iters", "patch"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.patch % 2:
            raise ValueError("patch size must be even")

    def model_config(self) -> ModelConfig:
        return ModelConfig.from_dict({**self.model, "scale": self.scale, "n_frames": self.n_frames})

    def sample_config(self) -> SampleConfig:
        return SampleConfig(self.n_frames, self.patch, self.augment)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["degradation"] = self.degradation.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        deg = dict(d.get("degradation", {}))
        deg.setdefault("scale", d.get("scale", 4))
        d["degradation"] = deg
        if "loss" in d:
            d["loss"] = dict(d["loss"])
        return cls(**d)


def lr_at(iteration: int, config: TrainConfig) -> float:
    """Learning rate halved every ``halving_period`` iterations."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    return config.lr0 * 2.0 ** -(iteration // config.halving_period)


def sample_batch(clips: Sequence[Clip], config: TrainConfig, iteration: int) -> list[TrainingSample]:
    """Batch for one iteration; seeded by (seed, iteration) so resumes replay exactly."""
    if not clips:
        raise ValueError("no training clips")
    rng = np.random.default_rng([config.seed, iteration])
    scfg = config.sample_config()
    return [sample_training_example(clips[int(rng.integers(len(clips)))], rng, scfg) for _ in range(config.batch_size)]


def collate(samples: Sequence[TrainingSample], dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    lr = torch.as_tensor(np.stack([s.lr_frames for s in samples]), dtype=dtype)
    hr = torch.as_tensor(np.stack([s.hr_frames for s in samples]), dtype=dtype)
    return lr, hr


def compute_losses(model: VideoSR, lr: torch.Tensor, hr: torch.Tensor, weights: LossWeights) -> dict:
    """Forward pass and every loss term for a (B, N, h, w) / (B, N, sh, sw) batch."""
    out = model(lr)
    c = model.n_frames // 2
    center = TierFrames.from_lr_hr(lr[:, c : c + 1], hr[:, c : c + 1])
    sources = [TierFrames.from_lr_hr(lr[:, t : t + 1], hr[:, t : t + 1]) for t in model.neighbor_indices()]
    l_sr = loss_sr(out.sr, hr[:, c : c + 1], weights.reduction)
    l_ofr = loss_ofr(out.flows, sources, center, weights)
    return {
        "total": loss_total(l_sr, l_ofr, weights.lambda4),
        "sr": l_sr,
        "ofr": l_ofr,
        "output": out,
    }


class Trainer:
    """Owns the model, optimiser and iteration counter of one training run."""

    def __init__(self, config: TrainConfig, model: Optional[VideoSR] = None):
        self.config = config
        if model is None:
            torch.manual_seed(config.seed)
            model = VideoSR(config.model_config())
        self.model = model
        self.optimizer = torch.optim.Adam(
            model.parameters(), lr=config.lr0, betas=(config.beta1, config.beta2), eps=config.eps
        )
        self.iteration = 0

    def step(self, batch: Sequence[TrainingSample]) -> dict:
        cfg = self.config
        self.model.train()
        lr = lr_at(self.iteration, cfg)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        x, y = collate(batch, next(self.model.parameters()).dtype)
        losses = compute_losses(self.model, x, y, cfg.loss)
        values = {k: float(losses[k].detach()) for k in ("total", "sr", "ofr")}
        if not all(math.isfinite(v) for v in values.values()):
            raise NonFiniteLossError(
                self.iteration,
                {
                    "iteration": self.iteration,
                    "losses": values,
                    "batch": [s.provenance for s in batch],
                },
            )
        self.optimizer.zero_grad(set_to_none=True)
        losses["total"].backward()
        if cfg.grad_clip:
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), cfg.grad_clip)
        self.optimizer.step()
        record = {"iteration": self.iteration, "lr": lr, "loss": values["total"],
                  "loss_sr": values["sr"], "loss_ofr": values["ofr"]}
        self.iteration += 1
        return record

    def state_dict(self) -> dict:
        return {
            "format_version": CHECKPOINT_VERSION,
            "iteration": self.iteration,
            "config": self.config.to_dict(),
            "model_config": self.model.config.to_dict(),
            "model": self.model.state_dict(),
            "optimizer": self.optimizer.state_dict(),
        }

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        torch.save(self.state_dict(), tmp)
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Trainer":
        ckpt = torch.load(path, map_location="cpu", weights_only=False)
        if ckpt.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {ckpt.get('format_version')}")
        config = TrainConfig.from_dict(ckpt["config"])
        model = VideoSR(ModelConfig.from_dict(ckpt["model_config"]))
        model.load_state_dict(ckpt["model"])
        trainer = cls(config, model)
        trainer.optimizer.load_state_dict(ckpt["optimizer"])
        trainer.iteration = ckpt["iteration"]
        return trainer


def load_model(path: Union[str, Path]) -> VideoSR:
    """Model only, in eval mode, from a training checkpoint."""
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    model = VideoSR(ModelConfig.from_dict(ckpt["model_config"]))
    model.load_state_dict(ckpt["model"])
    return model.eval()


def validation_batch(clips: Sequence[Clip], config: TrainConfig) -> list[TrainingSample]:
    rng = np.random.default_rng([config.seed, 0x5EED])
    scfg = replace(config.sample_config(), augment=False)
    return [sample_training_example(clips[k % len(clips)], rng, scfg) for k in range(config.val_samples)]


@torch.no_grad()
def validate(model: VideoSR, samples: Sequence[TrainingSample]) -> float:
    """Mean PSNR of the clamped centre-frame estimates."""
    model.eval()
    x, y = collate(samples, next(model.parameters()).dtype)
    sr = model(x).sr.clamp(0, 1)
    c = model.n_frames // 2
    return float(np.mean([psnr(sr[k, 0].numpy(), y[k, c].numpy()) for k in range(len(samples))]))


def train(
    config: TrainConfig,
    clips: Sequence[Clip],
    run_dir: Union[str, Path],
    val_clips: Optional[Sequence[Clip]] = None,
    resume: Optional[Union[str, Path]] = None,
    stop_at: Optional[int] = None,
) -> Trainer:
    """Run (or resume) training until ``total_iters`` (or ``stop_at``) iterations.

    Writes ``metrics.jsonl`` and ``checkpoints/`` under ``run_dir``; the final
    state is saved as ``checkpoints/last.pt``.
    """
    run_dir = Path(run_dir)
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    torch.use_deterministic_algorithms(True, warn_only=True)
    trainer = Trainer.load(resume) if resume else Trainer(config)
    if resume:
        # The stored config defines the run; only the stopping point can change.
        trainer.config = replace(trainer.config, total_iters=config.total_iters)
    cfg = trainer.config
    val_set = validation_batch(val_clips, cfg) if val_clips else None
    end = min(cfg.total_iters, stop_at) if stop_at is not None else cfg.total_iters
    log_path = run_dir / "metrics.jsonl"
    started = time.time()
    with open(log_path, "a") as log:
        if trainer.iteration == 0:
            log.write(json.dumps({"event": "start", "determinism": "exact-cpu", "config": cfg.to_dict()}) + "\n")
        while trainer.iteration < end:
            it = trainer.iteration
            try:
                record = trainer.step(sample_batch(clips, cfg, it))
            except NonFiniteLossError as err:
                (run_dir / "nonfinite.json").write_text(json.dumps(err.diagnostics, indent=2))
                log.flush()
                raise
            done = trainer.iteration
            if val_set is not None and done % cfg.val_every == 0:
                record["val_psnr"] = validate(trainer.model, val_set)
            if done % cfg.log_every == 0 or "val_psnr" in record or done == end:
                record["elapsed"] = round(time.time() - started, 3)
                log.write(json.dumps(record) + "\n")
                log.flush()
            if done % cfg.checkpoint_every == 0 and done < end:
                trainer.save(ckpt_dir / f"iter_{done:07d}.pt")
    try:
        trainer.save(ckpt_dir / "last.pt")
    except OSError:
        logger.exception("failed to write final checkpoint to %s", ckpt_dir)
        raise
    return trainer


def read_metrics(run_dir: Union[str, Path]) -> list[dict[str, Any]]:
    path = Path(run_dir) / "metrics.jsonl"
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
