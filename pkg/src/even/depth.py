"""Monocular depth head and its supervised training loop.

The head is a compact U-Net (widths 16/32/64, three poolings) with a
softplus output scaled so that a zero pre-activation predicts the
geometric mean of the depth range. It is deliberately the same for every
input kind so comparisons isolate the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import formats, layers
from .events import event_frame_to_input
from .formats import MissingArtifactError

# the seven input rows of the comparison table, in table order
INPUT_KINDS = ("rgb", "event", "rgb+sobel", "rgb+event", "enhanced", "enhanced+sobel", "even")
FUSED_KINDS = ("rgb+sobel", "rgb+event", "enhanced+sobel", "even")
SI_LAMBDA = 0.5


@dataclass
class DepthConfig:
    widths: tuple = (16, 32, 64)
    lr: float = 1e-4
    weight_decay: float = 1e-2
    epochs: int = 40
    batch_size: int = 16
    seed: int = 0
    depth_range: tuple = (2.0, 60.0)

    def validate(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs >= 0 and batch_size >= 1 required")
        d_min, d_max = self.depth_range
        if not 0 < d_min < d_max:
            raise ValueError(f"invalid depth range {self.depth_range}")


@dataclass
class DepthMap:
    data: np.ndarray
    valid_mask: np.ndarray

    @classmethod
    def from_gt(cls, depth, depth_range) -> "DepthMap":
        """Ground truth with the mask restricted to the open depth range."""
        depth = np.asarray(depth)
        d_min, d_max = depth_range
        return cls(depth, (depth > d_min) & (depth < d_max))


class DepthNet(nn.Module):
    def __init__(self, widths=(16, 32, 64), depth_range=(2.0, 60.0)):
        super().__init__()
        self.unet = layers.UNet(3, widths)
        self.head = layers.conv3x3(widths[0], 1)
        self.register_buffer("depth_range", torch.tensor([float(d) for d in depth_range]))

    @property
    def reference_depth(self):
        return torch.sqrt(self.depth_range[0] * self.depth_range[1])

    def forward(self, x):
        z = self.head(self.unet(x))[:, 0]
        return self.reference_depth * F.softplus(z) / math.log(2.0)


def build_depth_net(config: DepthConfig | None = None) -> DepthNet:
    config = config or DepthConfig()
    config.validate()
    with layers.seeded(config.seed):
        return DepthNet(config.widths, config.depth_range)


def predict_depth(image, net: DepthNet) -> DepthMap:
    """Predict depth for an H×W×3 input (or N×H×W×3 batch) in network scale."""
    image = np.asarray(image)
    x = layers.to_nchw(image, next(net.parameters()).dtype)
    layers.check_divisible(x.shape[2], x.shape[3], net.unet.factor)
    with torch.no_grad():
        pred = net(x).numpy()
    if image.ndim == 3:
        pred = pred[0]
    return DepthMap(pred, np.ones(pred.shape, dtype=bool))


def si_log_loss(pred, gt, mask, depth_range, lam=SI_LAMBDA):
    """Scale-invariant log loss over masked pixels (torch tensors)."""
    pred = pred.clamp(depth_range[0], depth_range[1])
    e = (torch.log(pred) - torch.log(gt))[mask]
    if e.numel() == 0:
        raise ValueError("valid mask is empty")
    return (e ** 2).mean() - lam * e.mean() ** 2


def depth_loss(pred: DepthMap, gt: DepthMap, lam: float = SI_LAMBDA) -> float:
    """``mean(e^2) - lam * mean(e)^2`` with ``e = log(pred) - log(gt)`` on valid pixels."""
    if pred.data.shape != gt.data.shape:
        raise ValueError(f"shape mismatch: {pred.data.shape} vs {gt.data.shape}")
    mask = gt.valid_mask & pred.valid_mask
    if not mask.any():
        raise ValueError("valid mask is empty")
    e = np.log(pred.data[mask].astype(np.float64)) - np.log(gt.data[mask].astype(np.float64))
    return float(np.mean(e ** 2) - lam * np.mean(e) ** 2)


def load_inputs(manifest, ids, kind: str) -> np.ndarray:
    """Depth-net inputs for one of :data:`INPUT_KINDS`, N×H×W×3 in [-1, 1]."""
    if kind not in INPUT_KINDS:
        raise ValueError(f"unknown input kind {kind!r}; valid: {INPUT_KINDS}")
    if kind == "event":
        frames = []
        for sid in ids:
            frames.append(event_frame_to_input(manifest.load_sample(sid).event_frame, 3))
        return np.stack(frames).astype(np.float32)
    if kind == "rgb":
        images = [formats.read_png(manifest.sample_dir(sid) / "rgb.png") for sid in ids]
    else:
        name = "enhanced" if kind == "enhanced" else f"fusion:{kind}"
        if name not in manifest.images:
            stage = "train-enhance" if kind == "enhanced" else f"train-fusion/export-fusion for pair {kind!r}"
            raise MissingArtifactError(f"input kind {kind!r} needs {name} images; run {stage} first")
        images = [manifest.load_image(name, sid) for sid in ids]
    return 2.0 * np.stack(images).astype(np.float32) - 1.0


def load_targets(manifest, ids) -> np.ndarray:
    return np.stack([formats.read_depth_file(manifest.sample_dir(sid) / "depth.dpt") for sid in ids])


def fit_depth(net: DepthNet, inputs: np.ndarray, depth: np.ndarray, config: DepthConfig) -> list[float]:
    """AdamW on the scale-invariant log loss; returns mean loss per epoch."""
    dt = next(net.parameters()).dtype
    x = layers.to_nchw(inputs, dt)
    gt = torch.from_numpy(np.asarray(depth)).to(dt)
    d_min, d_max = config.depth_range
    mask = (gt > d_min) & (gt < d_max)
    opt = torch.optim.AdamW(net.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    history = []
    for _ in range(config.epochs):
        total = 0.0
        for idx in layers.batches(len(x), config.batch_size, rng):
            idx = torch.from_numpy(idx)
            opt.zero_grad()
            loss = si_log_loss(net(x[idx]), gt[idx], mask[idx], config.depth_range)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history.append(total / len(x))
    return history


def train_depth(manifest, kind: str, config: DepthConfig | None = None, ids=None):
    """Train a depth net on ``kind`` inputs (train split by default)."""
    config = config or DepthConfig()
    config.validate()
    if kind not in INPUT_KINDS:
        raise ValueError(f"unknown input kind {kind!r}; valid: {INPUT_KINDS}")
    ids = list(manifest.ids("train") if ids is None else ids)
    if not ids:
        raise ValueError("depth training split is empty")
    net = build_depth_net(config)
    if config.epochs == 0:
        return net, []
    history = fit_depth(net, load_inputs(manifest, ids, kind), load_targets(manifest, ids), config)
    return net, history


def save_depth_net(net: DepthNet, path) -> None:
    layers.save_module(net, path)


def load_depth_net(path) -> DepthNet:
    tensors = formats.read_params(path)
    widths = tuple(int(tensors[f"unet.enc.{i}.weight"].shape[0])
                   for i in range(sum(1 for k in tensors if k.startswith("unet.enc.") and k.endswith(".weight"))))
    net = DepthNet(widths, tuple(tensors["depth_range"].tolist()))
    return layers.load_state(net, tensors)
