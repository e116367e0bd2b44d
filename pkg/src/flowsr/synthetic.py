"""Synthetic clips of globally translating textures with exact ground-truth flow."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degradation import Clip, DegradationSpec, degrade


@dataclass
class TranslatingClip:
    clip: Clip
    velocity: np.ndarray  # (dx, dy) per frame, HR pixels

    def flow_lr(self, src: int, dst: int) -> np.ndarray:
        """Ground-truth backward flow F_{src->dst} at LR, shape (H, W, 2)."""
        return self._flow(src, dst, self.clip.lr.shape[1:], self.clip.scale)

    def flow_hr(self, src: int, dst: int) -> np.ndarray:
        return self._flow(src, dst, self.clip.hr.shape[1:], 1)

    def _flow(self, src, dst, shape, div):
        # I_t(x) = tex(x - t d)  =>  I_dst(x) = I_src(x + (src - dst) d)
        d = (src - dst) * self.velocity / div
        out = np.empty(tuple(shape) + (2,))
        out[..., 0], out[..., 1] = d[0], d[1]
        return out


def random_texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Periodic texture mixing 1/f noise with soft-edged blobs, scaled to [0.1, 0.9]."""
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    f = np.hypot(fx, fy)

    def noise(falloff, cutoff):
        spec = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size)))
        spec *= 1.0 / (f + 1.0 / size) ** falloff * np.exp(-((f / cutoff) ** 2))
        field = np.fft.ifft2(spec).real
        return (field - field.mean()) / (field.std() + 1e-12)

    tex = 0.6 * noise(1.0, 0.35) + 0.4 * np.tanh(3.0 * noise(2.0, 0.08))
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    return 0.1 + 0.8 * tex


def fourier_shift(img: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Translate a periodic image: out(x) = img(x - d)."""
    h, w = img.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    phase = np.exp(-2j * np.pi * (fx * dx + fy * dy))
    return np.fft.ifft2(np.fft.fft2(img) * phase).real


def translating_clip(
    rng: np.random.Generator,
    lr_size: int,
    n_frames: int,
    degradation: DegradationSpec,
    max_shift: float = 3.0,
    name: str = "synthetic",
) -> TranslatingClip:
    """A clip whose content moves by a constant per-frame velocity.

    ``max_shift`` bounds the velocity magnitude in LR pixels.
    """
    s = degradation.scale
    hr_size = lr_size * s
    tex_size = 2 * hr_size
    tex = random_texture(rng, tex_size)
    radius = max_shift * np.sqrt(rng.uniform())
    angle = rng.uniform(0, 2 * np.pi)
    velocity = np.array([np.cos(angle), np.sin(angle)]) * radius * s
    off = (tex_size - hr_size) // 2
    hr = []
    for t in range(n_frames):
        moved = fourier_shift(tex, *(t * velocity))
        hr.append(np.clip(moved[off : off + hr_size, off : off + hr_size], 0.0, 1.0))
    lr = [degrade(f, degradation) for f in hr]
    clip = Clip(name, np.stack(lr).astype(np.float32), np.stack(hr).astype(np.float32), s)
    return TranslatingClip(clip, velocity)


def translating_dataset(
    seed: int, count: int, lr_size: int, n_frames: int, degradation: DegradationSpec, max_shift: float = 3.0
) -> list[TranslatingClip]:
    rng = np.random.default_rng(seed)
    return [
        translating_clip(rng, lr_size, n_frames, degradation, max_shift, name=f"synthetic_{seed}_{k:03d}")
        for k in range(count)
    ]
