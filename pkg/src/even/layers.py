"""Small torch building blocks shared by the enhancer, fusion and depth nets."""

from __future__ import annotations

import contextlib
import hashlib

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import formats


@contextlib.contextmanager
def seeded(seed: int):
    """Run a block under a private torch RNG state."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        yield


def derive_seed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def conv3x3(cin, cout):
    return nn.Conv2d(cin, cout, 3, padding=1)


class UNet(nn.Module):
    """Encoder/decoder with one conv per level and concatenated skips.

    ``widths`` gives the channel count per encoder level; the bottleneck
    runs at 1/2**len(widths) resolution with the last width. Output has
    ``widths[0]`` channels at input resolution.
    """

    def __init__(self, in_channels: int, widths):
        super().__init__()
        self.widths = tuple(int(w) for w in widths)
        self.enc = nn.ModuleList()
        prev = in_channels
        for w in self.widths:
            self.enc.append(conv3x3(prev, w))
            prev = w
        self.bottleneck = conv3x3(prev, prev)
        self.dec = nn.ModuleList()
        for w in reversed(self.widths):
            self.dec.append(conv3x3(prev + w, w))
            prev = w

    @property
    def factor(self) -> int:
        return 2 ** len(self.widths)

    def forward(self, x):
        skips = []
        for i, conv in enumerate(self.enc):
            if i:
                x = F.avg_pool2d(x, 2)
            x = F.relu(conv(x))
            skips.append(x)
        x = F.relu(self.bottleneck(F.avg_pool2d(x, 2)))
        for conv, skip in zip(self.dec, reversed(skips)):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = F.relu(conv(torch.cat([x, skip], dim=1)))
        return x


def check_divisible(height, width, factor, what="input"):
    if height % factor or width % factor:
        pad_h = (-height) % factor
        pad_w = (-width) % factor
        raise ValueError(
            f"{what} of size {height}x{width} must be divisible by {factor}; "
            f"pad by {pad_h} rows and {pad_w} columns")


def to_nchw(images: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """H×W×C or N×H×W×C numpy → N×C×H×W tensor."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def to_nhwc(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy().transpose(0, 2, 3, 1)


def state_to_numpy(module: nn.Module, extra=None) -> dict:
    tensors = {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}
    if extra:
        tensors.update({k: np.asarray(v, dtype=np.float32) for k, v in extra.items()})
    return tensors


def save_module(module: nn.Module, path, extra=None) -> None:
    formats.write_params(path, state_to_numpy(module, extra))


def load_state(module: nn.Module, tensors) -> nn.Module:
    state = {k: torch.from_numpy(np.asarray(v)) for k, v in tensors.items() if not k.startswith("config.")}
    module.load_state_dict(state)
    return module


def batches(n: int, batch_size: int, rng: np.random.Generator | None):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def params_equal(a: nn.Module, b: nn.Module) -> bool:
    sa, sb = a.state_dict(), b.state_dict()
    return sa.keys() == sb.keys() and all(torch.equal(sa[k], sb[k]) for k in sa)
