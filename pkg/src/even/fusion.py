"""Two-branch event/RGB fusion with channel soft-attention.

The network maps an edge image (events, or a Sobel map for the baselines)
and an RGB image to a fused feature map and a reconstructed fusion image:

    F_event = g(X_event)            5x5 conv, 3 -> C
    F_rgb   = h(X_rgb)              3x3 conv, 3 -> C
    v       = mean_hw(F_event + F_rgb)
    k       = fc(v)                 affine, C -> d
    a_c, b_c = softmax(A_c . k, B_c . k)
    F_fused = a * F_event + b * F_rgb
    Y       = conv(relu(conv(unet(F_fused))))

Images enter in [-1, 1]: RGB as ``2x - 1``, event frames as stored, Sobel
maps as stored (already in [0, 1]).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from . import formats, layers
from .formats import MissingArtifactError
from .events import event_frame_to_input

# fusion input pairs: (rgb source, edge source)
PAIRS = {
    "rgb+sobel": ("rgb", "sobel"),
    "rgb+event": ("rgb", "event"),
    "enhanced+sobel": ("enhanced", "sobel"),
    "even": ("enhanced", "event"),
}


@dataclass
class FusionConfig:
    C: int = 32
    d: int = 16
    beta: float = 0.8
    lr: float = 1e-3
    weight_decay: float = 1e-3
    scheduler_step: int = 5
    scheduler_gamma: float = 0.5
    epochs: int = 20
    batch_size: int = 8
    max_samples: int = 128
    seed: int = 0

    def validate(self):
        if self.C < 1 or self.d < 1:
            raise ValueError("C and d must be >= 1")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must be in [0, 1]")
        if self.epochs < 0 or self.batch_size < 1 or self.scheduler_step < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and scheduler_step >= 1 required")


class FusionOutput(NamedTuple):
    fused_feature: np.ndarray  # H×W×C
    fusion_image: np.ndarray  # H×W×3
    attention_a: np.ndarray  # C
    attention_b: np.ndarray  # C


def soft_attention(logit_a, logit_b):
    """Two-way softmax with the larger logit subtracted first."""
    top = torch.maximum(logit_a, logit_b)
    ea = torch.exp(logit_a - top)
    eb = torch.exp(logit_b - top)
    total = ea + eb
    return ea / total, eb / total


class FusionNet(nn.Module):
    def __init__(self, channels: int = 32, d: int = 16):
        super().__init__()
        self.g = nn.Conv2d(3, channels, 5, padding=2)
        self.h = nn.Conv2d(3, channels, 3, padding=1)
        self.fc = nn.Linear(channels, d)
        self.A = nn.Parameter(0.1 * torch.randn(channels, d))
        self.B = nn.Parameter(0.1 * torch.randn(channels, d))
        self.unet = layers.UNet(channels, (channels, 2 * channels))
        self.head = nn.Sequential(
            layers.conv3x3(channels, channels), nn.ReLU(), layers.conv3x3(channels, 3))

    @property
    def channels(self) -> int:
        return self.g.out_channels

    @property
    def d(self) -> int:
        return self.fc.out_features

    def branches(self, x_event, x_rgb):
        return self.g(x_event), self.h(x_rgb)

    def attention(self, f_event, f_rgb):
        v = (f_event + f_rgb).mean(dim=(2, 3))
        k = self.fc(v)
        a, b = soft_attention(k @ self.A.T, k @ self.B.T)
        return a, b, k

    def forward(self, x_event, x_rgb, force_a=None):
        """Returns ``(fused, image, a, b)``; ``force_a`` pins the event weight."""
        if x_event.shape != x_rgb.shape:
            raise ValueError(f"input shapes differ: {tuple(x_event.shape)} vs {tuple(x_rgb.shape)}")
        layers.check_divisible(x_event.shape[2], x_event.shape[3], self.unet.factor)
        f_event, f_rgb = self.branches(x_event, x_rgb)
        a, b, _ = self.attention(f_event, f_rgb)
        if force_a is not None:
            a = torch.as_tensor(force_a, dtype=f_event.dtype).expand_as(a)
            b = 1.0 - a
        fused = a[:, :, None, None] * f_event + b[:, :, None, None] * f_rgb
        image = self.head(self.unet(fused))
        return fused, image, a, b


def build_fusion_net(config: FusionConfig | None = None, seed: int | None = None) -> FusionNet:
    config = config or FusionConfig()
    config.validate()
    with layers.seeded(config.seed if seed is None else seed):
        return FusionNet(config.C, config.d)


def _dtype(net: nn.Module):
    return next(net.parameters()).dtype


def _pair_tensors(net, event_img, rgb_img):
    event_img = np.asarray(event_img)
    rgb_img = np.asarray(rgb_img)
    if event_img.shape != rgb_img.shape or event_img.shape[-1] != 3:
        raise ValueError(f"expected matching H×W×3 inputs, got {event_img.shape} and {rgb_img.shape}")
    dt = _dtype(net)
    return layers.to_nchw(event_img, dt), layers.to_nchw(rgb_img, dt)


def branch_transform(event_img, enhanced_img, net: FusionNet):
    x_e, x_h = _pair_tensors(net, event_img, enhanced_img)
    with torch.no_grad():
        f_e, f_h = net.branches(x_e, x_h)
    return layers.to_nhwc(f_e)[0], layers.to_nhwc(f_h)[0]


def attention_weights(f_event, f_enhanced, net: FusionNet):
    """Per-channel weights ``(a, b, k)`` from H×W×C branch features."""
    f_event = np.asarray(f_event)
    f_enhanced = np.asarray(f_enhanced)
    if f_event.shape != f_enhanced.shape:
        raise ValueError(f"feature shapes differ: {f_event.shape} vs {f_enhanced.shape}")
    dt = _dtype(net)
    with torch.no_grad():
        a, b, k = net.attention(layers.to_nchw(f_event, dt), layers.to_nchw(f_enhanced, dt))
    return a[0].numpy(), b[0].numpy(), k[0].numpy()


def fuse(event_img, enhanced_img, net: FusionNet, force_a=None) -> FusionOutput:
    x_e, x_h = _pair_tensors(net, event_img, enhanced_img)
    with torch.no_grad():
        fused, image, a, b = net(x_e, x_h, force_a=force_a)
    return FusionOutput(layers.to_nhwc(fused)[0], layers.to_nhwc(image)[0], a[0].numpy(), b[0].numpy())


def joint_loss(fusion_image, enhanced_img, event_img, beta: float = 0.8):
    """``beta * MSE(Y, enhanced) + (1 - beta) * MSE(Y, event)``.

    Works on numpy arrays and torch tensors alike.
    """
    if not fusion_image.shape == enhanced_img.shape == event_img.shape:
        raise ValueError(
            f"shape mismatch: {tuple(fusion_image.shape)}, {tuple(enhanced_img.shape)}, {tuple(event_img.shape)}")
    if not 0 <= beta <= 1:
        raise ValueError("beta must be in [0, 1]")
    primary = ((fusion_image - enhanced_img) ** 2).mean()
    auxiliary = ((fusion_image - event_img) ** 2).mean()
    return beta * primary + (1 - beta) * auxiliary


# --------------------------------------------------------------------------
# data plumbing


def normalize_rgb(rgb):
    return 2.0 * np.asarray(rgb, dtype=np.float32) - 1.0


def denormalize(image):
    return np.clip((np.asarray(image) + 1.0) / 2.0, 0.0, 1.0)


def pair_arrays(manifest, ids, pair: str):
    """Load ``(edge, rgb)`` input batches, N×H×W×3 in [-1, 1], for a fusion pair."""
    from .evaluate import sobel_image
    from .synthcam import load_arrays

    if pair not in PAIRS:
        raise ValueError(f"unknown fusion pair {pair!r}; valid: {sorted(PAIRS)}")
    rgb_kind, edge_kind = PAIRS[pair]
    data = load_arrays(manifest, ids)
    if rgb_kind == "enhanced":
        if "enhanced" not in manifest.images:
            raise MissingArtifactError("enhanced images missing; run train-enhance first")
        rgb = np.stack([manifest.load_image("enhanced", i) for i in ids])
    else:
        rgb = data["rgb"]
    if edge_kind == "event":
        edge = np.stack([event_frame_to_input(f, 3) for f in data["events"]])
    else:
        edge = sobel_image(rgb)
    return edge.astype(np.float32), normalize_rgb(rgb)


def train_fusion(manifest, config: FusionConfig | None = None, pair: str = "even", ids=None):
    """Train a fusion net on the train split. Returns ``(net, history)``.

    ``history`` holds the mean joint loss of each epoch.
    """
    config = config or FusionConfig()
    config.validate()
    ids = list(manifest.ids("train") if ids is None else ids)[:config.max_samples]
    if not ids:
        raise ValueError("fusion training split is empty")
    net = build_fusion_net(config)
    if config.epochs == 0:
        return net, []
    edge, rgb = pair_arrays(manifest, ids, pair)
    return net, fit(net, edge, rgb, config)


def fit(net: FusionNet, edge: np.ndarray, rgb: np.ndarray, config: FusionConfig) -> list[float]:
    dt = _dtype(net)
    x_edge = layers.to_nchw(edge, dt)
    x_rgb = layers.to_nchw(rgb, dt)
    opt = torch.optim.AdamW(net.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=config.scheduler_step, gamma=config.scheduler_gamma)
    rng = np.random.default_rng(config.seed)
    history = []
    for _ in range(config.epochs):
        total = 0.0
        for idx in layers.batches(len(x_edge), config.batch_size, rng):
            idx = torch.from_numpy(idx)
            opt.zero_grad()
            _, image, _, _ = net(x_edge[idx], x_rgb[idx])
            loss = joint_loss(image, x_rgb[idx], x_edge[idx], config.beta)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        sched.step()
        history.append(total / len(x_edge))
    return history


def save_fusion_net(net: FusionNet, path) -> None:
    layers.save_module(net, path)


def load_fusion_net(path) -> FusionNet:
    tensors = formats.read_params(path)
    channels, d = tensors["A"].shape
    return layers.load_state(FusionNet(int(channels), int(d)), tensors)


def export_fusion_images(net: FusionNet, manifest, out_dir, pair: str = "even", batch_size=64):
    """Write one ``<id>.png`` fusion image per sample, mapped back to [0, 1].

    Returns the manifest with the image set attached as ``fusion:<pair>``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = manifest.ids()
    failures = []
    for start in range(0, len(ids), batch_size):
        chunk = ids[start:start + batch_size]
        edge, rgb = pair_arrays(manifest, chunk, pair)
        with torch.no_grad():
            _, image, _, _ = net(layers.to_nchw(edge, _dtype(net)), layers.to_nchw(rgb, _dtype(net)))
        for sid, img in zip(chunk, layers.to_nhwc(image)):
            try:
                formats.write_png(out_dir / f"{sid}.png", denormalize(img))
            except OSError as exc:
                failures.append(f"{sid}: {exc}")
    if failures:
        raise OSError(f"{len(failures)} fusion images failed to write:\n" + "\n".join(failures))
    return manifest.with_images(f"fusion:{pair}", out_dir)
