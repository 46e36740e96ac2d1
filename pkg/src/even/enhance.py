"""Low-light enhancement driven by an illumination attention map.

Two enhancers share :func:`enhance`: an analytic gamma lift gated by
``1 - V`` (V = per-pixel max over channels), and a small attention-gated
U-Net trained to regress the clean frame from the night frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import formats, layers

KINDS = ("analytic", "attention_unet")


@dataclass
class EnhancerConfig:
    kind: str = "analytic"
    gamma_target: float = 2.2
    unet_channels: int = 8

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"enhancer kind must be one of {KINDS}, got {self.kind!r}")
        if not self.gamma_target > 0:
            raise ValueError("gamma_target must be positive")
        if self.unet_channels < 1:
            raise ValueError("unet_channels must be >= 1")


@dataclass
class TrainSettings:
    epochs: int = 20
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 8
    seed: int = 0
    max_samples: int = 256


@dataclass
class IlluminationMap:
    data: np.ndarray  # V channel, H×W in [0, 1]

    @property
    def attention(self) -> np.ndarray:
        return 1.0 - self.data


def illumination_channel(rgb) -> IlluminationMap:
    return IlluminationMap(np.asarray(rgb).max(axis=-1))


class AttentionUNet(nn.Module):
    """Residual enhancer: ``out = rgb + (1 - V) * unet([rgb, 1 - V])``."""

    def __init__(self, channels: int = 8):
        super().__init__()
        self.unet = layers.UNet(4, (channels, 2 * channels))
        self.out = nn.Conv2d(channels, 3, 3, padding=1)

    def forward(self, rgb):
        att = 1.0 - rgb.amax(dim=1, keepdim=True)
        residual = self.out(self.unet(torch.cat([rgb, att], dim=1)))
        return rgb + att * residual


def build_enhancer(config: EnhancerConfig, seed: int = 0) -> AttentionUNet:
    config.validate()
    if config.kind != "attention_unet":
        raise NotImplementedError("only the attention_unet enhancer has parameters")
    with layers.seeded(seed):
        return AttentionUNet(config.unet_channels)


def enhance(rgb, config: EnhancerConfig | None = None, model: AttentionUNet | None = None) -> np.ndarray:
    """Enhance one H×W×3 image or an N×H×W×3 batch; output stays in [0, 1]."""
    config = config or EnhancerConfig()
    config.validate()
    rgb = np.asarray(rgb)
    if config.kind == "analytic":
        att = 1.0 - rgb.max(axis=-1, keepdims=True)
        lifted = np.power(rgb, 1.0 / config.gamma_target)
        return np.clip(rgb + att * (lifted - rgb), 0.0, 1.0)
    if model is None:
        raise ValueError("attention_unet enhancement needs a trained model")
    x = layers.to_nchw(rgb, dtype=next(model.parameters()).dtype)
    layers.check_divisible(x.shape[2], x.shape[3], model.unet.factor)
    with torch.no_grad():
        out = layers.to_nhwc(model(x).clamp(0.0, 1.0))
    return out[0] if rgb.ndim == 3 else out


def enhancer_loss(model: AttentionUNet, night: torch.Tensor, clean: torch.Tensor) -> torch.Tensor:
    return F.mse_loss(model(night), clean)


def train_enhancer(manifest, ids, config: EnhancerConfig, settings: TrainSettings | None = None):
    """Fit the attention U-Net on (night, clean) pairs. Returns ``(model, history)``."""
    from .synthcam import load_arrays

    config.validate()
    if config.kind == "analytic":
        raise NotImplementedError("the analytic enhancer has nothing to train")
    settings = settings or TrainSettings()
    ids = list(ids)[:settings.max_samples]
    if not ids:
        raise ValueError("no samples to train the enhancer on")
    model = build_enhancer(config, settings.seed)
    if settings.epochs == 0:
        return model, []
    data = load_arrays(manifest, ids, with_clean=True)
    night = layers.to_nchw(data["rgb"])
    clean = layers.to_nchw(data["clean"])
    opt = torch.optim.AdamW(model.parameters(), lr=settings.lr, weight_decay=settings.weight_decay)
    rng = np.random.default_rng(settings.seed)
    history = []
    for _ in range(settings.epochs):
        total, count = 0.0, 0
        for idx in layers.batches(len(ids), settings.batch_size, rng):
            idx = torch.from_numpy(idx)
            opt.zero_grad()
            loss = enhancer_loss(model, night[idx], clean[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        history.append(total / count)
    return model, history


def save_enhancer(model: AttentionUNet, path) -> None:
    layers.save_module(model, path)


def load_enhancer(path) -> AttentionUNet:
    tensors = formats.read_params(path)
    channels = tensors["out.weight"].shape[1]
    return layers.load_state(AttentionUNet(channels), tensors)


def export_enhanced(manifest, out_dir, config: EnhancerConfig, model=None, batch_size=64):
    """Write ``<id>.png`` enhanced images; returns the manifest with them attached."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = manifest.ids()
    for start in range(0, len(ids), batch_size):
        chunk = ids[start:start + batch_size]
        rgb = np.stack([formats.read_png(manifest.sample_dir(i) / "rgb.png") for i in chunk])
        for sid, img in zip(chunk, enhance(rgb, config, model)):
            formats.write_png(out_dir / f"{sid}.png", img)
    return manifest.with_images("enhanced", out_dir)
