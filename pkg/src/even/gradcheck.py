"""Central finite-difference checks of autograd gradients, per parameter group.

A group is the set of parameters whose dotted name starts with the group
prefix (``g``, ``unet``, ``head`` ...). For each group the analytic and
numeric gradients are compared as vectors over the probed coordinates:
``|grad - fd| / max(|grad|, |fd|)`` in the Euclidean norm.

Central differences are only meaningful on a smooth piece of the loss. A
probe whose +/- step flips the sign of any ReLU input straddles a kink, so
it is left out and counted in ``skipped``.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

FUSION_GROUPS = ("g", "h", "fc", "A", "B", "unet", "head")
DEPTH_GROUPS = ("unet", "head")


@dataclass
class GradientReport:
    errors: dict  # group -> relative error
    probed: int
    skipped: int

    @property
    def worst(self) -> float:
        return max(self.errors.values())


@contextlib.contextmanager
def _watch_relu(store: list):
    original = F.relu

    def spy(x, inplace=False):
        store.append(x.detach() > 0)
        return original(x, inplace=inplace)

    F.relu = spy
    try:
        yield
    finally:
        F.relu = original


def _evaluate(loss_fn):
    pattern: list = []
    with _watch_relu(pattern):
        value = loss_fn().item()
    return value, pattern


def _same(p, q) -> bool:
    return len(p) == len(q) and all(torch.equal(a, b) for a, b in zip(p, q))


def group_of(name: str, groups) -> str | None:
    head = name.split(".")[0]
    return head if head in groups else None


def check_gradients(module: nn.Module, loss_fn, groups, step: float = 1e-5,
                    max_coords: int | None = None, seed: int = 0) -> GradientReport:
    """Compare autograd with central differences for every group.

    ``loss_fn()`` must recompute the scalar loss from the module's current
    parameters; run on a float64 module. With ``max_coords`` only that many
    randomly chosen entries per tensor are probed.
    """
    rng = np.random.default_rng(seed)
    module.zero_grad()
    loss_fn().backward()
    analytic, numeric = {g: [] for g in groups}, {g: [] for g in groups}
    probed = skipped = 0
    with torch.no_grad():
        _, base = _evaluate(loss_fn)
        for name, param in module.named_parameters():
            group = group_of(name, groups)
            if group is None:
                continue
            flat = param.view(-1)
            n = flat.numel()
            coords = np.arange(n) if max_coords is None or n <= max_coords else rng.choice(n, max_coords, replace=False)
            grad = param.grad.view(-1)
            for i in coords:
                orig = flat[i].item()
                flat[i] = orig + step
                up, p_up = _evaluate(loss_fn)
                flat[i] = orig - step
                down, p_down = _evaluate(loss_fn)
                flat[i] = orig
                probed += 1
                if not (_same(p_up, base) and _same(p_down, base)):
                    skipped += 1
                    continue
                numeric[group].append((up - down) / (2 * step))
                analytic[group].append(grad[i].item())
    errors = {}
    for group in groups:
        a = np.asarray(analytic[group])
        f = np.asarray(numeric[group])
        if a.size == 0:
            raise ValueError(f"no usable probes for group {group!r}")
        scale = max(np.linalg.norm(a), np.linalg.norm(f))
        errors[group] = 0.0 if scale == 0 else float(np.linalg.norm(a - f) / scale)
    return GradientReport(errors, probed, skipped)


def fusion_gradient_check(size: int = 8, channels: int = 4, d: int = 3, beta: float = 0.8,
                          seed: int = 0, max_coords: int | None = None) -> GradientReport:
    """Gradient check of the joint fusion loss on a random float64 instance."""
    from .fusion import FusionNet, joint_loss

    torch.manual_seed(seed)
    net = FusionNet(channels, d).double()
    # wider attention vectors so a and b move away from 0.5 and B gets signal
    with torch.no_grad():
        net.A.normal_(0.0, 1.0)
        net.B.normal_(0.0, 1.0)
    gen = torch.Generator().manual_seed(seed + 1)
    x_event = torch.rand(2, 3, size, size, generator=gen, dtype=torch.float64) * 2 - 1
    x_rgb = torch.rand(2, 3, size, size, generator=gen, dtype=torch.float64) * 2 - 1

    def loss():
        _, image, _, _ = net(x_event, x_rgb)
        return joint_loss(image, x_rgb, x_event, beta)

    return check_gradients(net, loss, FUSION_GROUPS, max_coords=max_coords, seed=seed)


def depth_gradient_check(size: int = 8, seed: int = 0, max_coords: int | None = 40,
                         widths=(16, 32, 64), depth_range=(2.0, 60.0)) -> GradientReport:
    """Gradient check of the scale-invariant log loss through the depth net."""
    from .depth import DepthNet, si_log_loss

    torch.manual_seed(seed)
    net = DepthNet(widths, depth_range).double()
    gen = torch.Generator().manual_seed(seed + 1)
    x = torch.rand(2, 3, size, size, generator=gen, dtype=torch.float64) * 2 - 1
    lo, hi = depth_range
    gt = lo + torch.rand(2, size, size, generator=gen, dtype=torch.float64) * (hi - lo)
    mask = (gt > lo) & (gt < hi)

    def loss():
        return si_log_loss(net(x), gt, mask, depth_range)

    return check_gradients(net, loss, DEPTH_GROUPS, max_coords=max_coords, seed=seed)
