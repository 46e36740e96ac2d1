"""Flat ``key = value`` run configuration with dotted section keys.

Example::

    # comments start with '#'
    seed = 3
    dataset.n_samples = 640
    fusion.beta = 0.8
    eval.kinds = rgb,event,even

Every key has a typed default; unknown keys are rejected with the list of
valid ones. ``format()`` emits the fully resolved configuration, which
parses back to an identical object.
"""

from __future__ import annotations

from pathlib import Path

from . import depth, enhance, fusion, synthcam
from .layers import derive_seed


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def _ints(text):
    return tuple(int(v) for v in text.split(","))


def _words(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _mixture(text):
    out = {}
    for part in _words(text):
        name, _, weight = part.partition(":")
        out[name.strip()] = float(weight) if weight else 1.0
    return out


def _fmt(value):
    if isinstance(value, dict):
        return ",".join(f"{k}:{v!r}" for k, v in value.items())
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (parser, default)
SCHEMA = {
    "seed": (int, 0),
    "dataset.n_samples": (int, 640),
    "dataset.resolution": (_ints, (64, 64)),
    "dataset.weather": (_mixture, {k: 0.25 for k in synthcam.WEATHER_KINDS}),
    "dataset.depth_range": (_floats, synthcam.DEFAULT_DEPTH_RANGE),
    "dataset.split": (_floats, synthcam.DEFAULT_SPLIT),
    "dataset.threshold": (float, 0.4),
    "dataset.night_gain": (_floats, (0.15, 0.4)),
    "dataset.night_gamma": (_floats, (1.2, 1.8)),
    "dataset.night_noise": (_floats, (0.005, 0.02)),
    "dataset.ambient": (float, 0.3),
    "dataset.headlight_reach": (float, 5.0),
    "enhancer.kind": (str, "attention_unet"),
    "enhancer.gamma_target": (float, 2.2),
    "enhancer.unet_channels": (int, 8),
    "enhancer.epochs": (int, 20),
    "enhancer.lr": (float, 1e-3),
    "enhancer.batch_size": (int, 8),
    "enhancer.max_samples": (int, 256),
    "fusion.pair": (str, "even"),
    "fusion.C": (int, 32),
    "fusion.d": (int, 16),
    "fusion.beta": (float, 0.8),
    "fusion.lr": (float, 1e-3),
    "fusion.weight_decay": (float, 1e-3),
    "fusion.scheduler_step": (int, 5),
    "fusion.scheduler_gamma": (float, 0.5),
    "fusion.epochs": (int, 20),
    "fusion.batch_size": (int, 8),
    "fusion.max_samples": (int, 128),
    "depth.kind": (str, "even"),
    "depth.widths": (_ints, (16, 32, 64)),
    "depth.lr": (float, 1e-4),
    "depth.weight_decay": (float, 1e-2),
    "depth.epochs": (int, 40),
    "depth.batch_size": (int, 16),
    "eval.kinds": (_words, depth.INPUT_KINDS),
    "crossval.kind": (str, "even"),
}


class RunConfig:
    def __init__(self, values=None):
        self.values = {k: default for k, (_, default) in SCHEMA.items()}
        for key, value in (values or {}).items():
            self.set(key, value)
        self.validate()

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.format() == other.format()

    def set(self, key, value):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}; valid keys:\n  " + "\n  ".join(SCHEMA))
        parser = SCHEMA[key][0]
        if isinstance(value, str):
            try:
                value = parser(value.strip())
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
        self.values[key] = value

    @classmethod
    def parse(cls, text: str, overrides=()) -> "RunConfig":
        pairs = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            pairs[key.strip()] = value.strip()
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override must be key=value, got {item!r}")
            key, _, value = item.partition("=")
            pairs[key.strip()] = value.strip()
        return cls(pairs)

    @classmethod
    def load(cls, path, overrides=()) -> "RunConfig":
        return cls.parse(Path(path).read_text(), overrides)

    def format(self) -> str:
        lines = ["# resolved EVEN run configuration"]
        section = None
        for key in SCHEMA:
            head = key.split(".")[0] if "." in key else None
            if head != section:
                lines.append("")
                section = head
            lines.append(f"{key} = {_fmt(self.values[key])}")
        return "\n".join(lines) + "\n"

    def validate(self):
        try:
            self.dataset_config(Path(".")).validate()
            self.enhancer_config().validate()
            self.fusion_config().validate()
            self.depth_config().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self["fusion.pair"] not in fusion.PAIRS:
            raise ConfigError(f"fusion.pair must be one of {sorted(fusion.PAIRS)}")
        for key in ("depth.kind", "crossval.kind"):
            if self[key] not in depth.INPUT_KINDS:
                raise ConfigError(f"{key} must be one of {depth.INPUT_KINDS}")
        bad = [k for k in self["eval.kinds"] if k not in depth.INPUT_KINDS]
        if bad:
            raise ConfigError(f"eval.kinds has unknown kinds {bad}; valid: {depth.INPUT_KINDS}")
        if len(self["dataset.resolution"]) != 2:
            raise ConfigError("dataset.resolution takes W,H")

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self["seed"], stage)

    # -- per-module configs

    def dataset_config(self, out_dir, workers=1) -> synthcam.DatasetConfig:
        return synthcam.DatasetConfig(
            out_dir=Path(out_dir),
            n_samples=self["dataset.n_samples"],
            resolution=tuple(self["dataset.resolution"]),
            weather_mixture=dict(self["dataset.weather"]),
            seed=self.stage_seed("gen-data"),
            depth_range=tuple(self["dataset.depth_range"]),
            split_fractions=tuple(self["dataset.split"]),
            threshold=self["dataset.threshold"],
            night_gain=tuple(self["dataset.night_gain"]),
            night_gamma=tuple(self["dataset.night_gamma"]),
            night_noise=tuple(self["dataset.night_noise"]),
            ambient=self["dataset.ambient"],
            headlight_reach=self["dataset.headlight_reach"],
            workers=workers,
        )

    def enhancer_config(self) -> enhance.EnhancerConfig:
        return enhance.EnhancerConfig(self["enhancer.kind"], self["enhancer.gamma_target"],
                                      self["enhancer.unet_channels"])

    def enhancer_settings(self) -> enhance.TrainSettings:
        return enhance.TrainSettings(epochs=self["enhancer.epochs"], lr=self["enhancer.lr"],
                                     batch_size=self["enhancer.batch_size"],
                                     seed=self.stage_seed("train-enhance"),
                                     max_samples=self["enhancer.max_samples"])

    def fusion_config(self, pair=None) -> fusion.FusionConfig:
        pair = pair or self["fusion.pair"]
        return fusion.FusionConfig(
            C=self["fusion.C"], d=self["fusion.d"], beta=self["fusion.beta"], lr=self["fusion.lr"],
            weight_decay=self["fusion.weight_decay"], scheduler_step=self["fusion.scheduler_step"],
            scheduler_gamma=self["fusion.scheduler_gamma"], epochs=self["fusion.epochs"],
            batch_size=self["fusion.batch_size"], max_samples=self["fusion.max_samples"],
            seed=self.stage_seed(f"train-fusion:{pair}"))

    def depth_config(self) -> depth.DepthConfig:
        return depth.DepthConfig(
            widths=tuple(self["depth.widths"]), lr=self["depth.lr"],
            weight_decay=self["depth.weight_decay"], epochs=self["depth.epochs"],
            batch_size=self["depth.batch_size"], seed=self.stage_seed("train-depth"),
            depth_range=tuple(self["dataset.depth_range"]))
