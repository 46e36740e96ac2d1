"""Procedural night-driving scenes with exact depth, weather and events.

Scenes are analytic: a ground plane seen from a forward-facing camera, a
road with lane markings that scroll with ego-motion, and a handful of
upright rectangles/ellipses standing on the ground. Depth is computed at
pixel centres from the same geometry, so it is exact; colour is 2x2
supersampled so sub-pixel motion still produces events.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import events as ev
from . import formats

WEATHER_KINDS = ("clear", "rain", "fog", "rain_and_fog")
SCENE_KINDS = ("city", "rural", "highway", "tunnel")
SPLITS = ("train", "val", "test")
DEFAULT_SPLIT = (0.70, 0.15, 0.15)
DEFAULT_DEPTH_RANGE = (2.0, 60.0)
# fog extinction coefficient at intensity 0 and 1 (per metre)
FOG_BETA_RANGE = (0.05, 0.3)
FOCAL = 0.5  # focal length in units of image height/width (90 degree FOV)
LOG_EPS = 1e-2

_PALETTES = {
    # sky, road, off-road, marking
    "city": ((0.10, 0.12, 0.25), (0.28, 0.28, 0.30), (0.45, 0.42, 0.40), (0.90, 0.90, 0.85)),
    "rural": ((0.05, 0.07, 0.15), (0.22, 0.20, 0.18), (0.15, 0.35, 0.12), (0.85, 0.85, 0.70)),
    "highway": ((0.08, 0.10, 0.20), (0.20, 0.20, 0.22), (0.30, 0.32, 0.28), (0.95, 0.90, 0.40)),
    "tunnel": ((0.30, 0.22, 0.10), (0.25, 0.24, 0.22), (0.55, 0.50, 0.40), (0.90, 0.90, 0.90)),
}


@dataclass(frozen=True)
class SceneObject:
    shape: str  # "rect" or "ellipse"
    center: tuple[float, float]  # pixels (x, y) at time 0
    half_size: tuple[float, float]  # pixels (half width, half height)
    depth: float
    albedo: tuple[float, float, float]
    velocity: tuple[float, float] = (0.0, 0.0)  # pixels per second

    def __post_init__(self):
        if self.shape not in ("rect", "ellipse"):
            raise ValueError(f"unknown object shape {self.shape!r}")
        if self.depth <= 0:
            raise ValueError("object depth must be positive")


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    resolution: tuple[int, int]  # (W, H)
    objects: tuple[SceneObject, ...]
    depth_range: tuple[float, float] = DEFAULT_DEPTH_RANGE
    horizon: float = 0.4  # fraction of image height
    ego_speed: float = 10.0  # m/s, scrolls the lane markings
    scene: str = "city"

    def __post_init__(self):
        d_min, d_max = self.depth_range
        if not 0 < d_min < d_max:
            raise ValueError(f"invalid depth range {self.depth_range}")
        if len(self.objects) < 1:
            raise ValueError("a scene needs at least one object")
        if not 0 < self.horizon < 1:
            raise ValueError("horizon must lie strictly inside the image")
        for obj in self.objects:
            if not d_min <= obj.depth <= d_max:
                raise ValueError(f"object depth {obj.depth} outside {self.depth_range}")

    @property
    def object_count(self) -> int:
        return len(self.objects)

    @property
    def camera_scale(self) -> float:
        # bottom image row sees the ground at 1.25 * d_min
        return 1.25 * self.depth_range[0] * (1.0 - self.horizon)

    @classmethod
    def random(cls, seed, resolution=(64, 64), depth_range=DEFAULT_DEPTH_RANGE,
               scene=None, object_count=None) -> "SceneSpec":
        rng = np.random.default_rng(seed)
        width, height = resolution
        if scene is None:
            scene = SCENE_KINDS[rng.integers(len(SCENE_KINDS))]
        if object_count is None:
            object_count = int(rng.integers(2, 6))
        horizon = float(rng.uniform(0.35, 0.45))
        scale = 1.25 * depth_range[0] * (1.0 - horizon)
        d_lo, d_hi = 1.5 * depth_range[0], min(0.5 * depth_range[1], 30.0)
        objects = []
        for _ in range(object_count):
            depth = float(np.exp(rng.uniform(np.log(d_lo), np.log(d_hi))))
            world_h = rng.uniform(1.2, 3.5)
            world_w = rng.uniform(1.0, 3.0)
            base_v = horizon + scale / depth
            half_h = 0.5 * FOCAL * world_h / depth * height
            half_w = 0.5 * FOCAL * world_w / depth * width
            lateral = rng.uniform(-6.0, 6.0)
            cx = (0.5 + FOCAL * lateral / depth) * width
            cy = base_v * height - half_h
            speed = rng.uniform(8.0, 40.0) * rng.choice([-1.0, 1.0])
            albedo = tuple(float(a) for a in rng.uniform(0.15, 1.0, size=3))
            objects.append(SceneObject(
                shape=("rect", "ellipse")[rng.integers(2)],
                center=(float(cx), float(cy)),
                half_size=(float(half_w), float(half_h)),
                depth=depth,
                albedo=albedo,
                velocity=(float(speed), float(rng.uniform(-2.0, 2.0))),
            ))
        return cls(seed=int(seed), resolution=(width, height), objects=tuple(objects),
                   depth_range=tuple(depth_range), horizon=horizon,
                   ego_speed=float(rng.uniform(6.0, 16.0)), scene=scene)


def _render_points(spec: SceneSpec, px: np.ndarray, py: np.ndarray, time: float):
    """Colour and depth at continuous pixel coordinates ``(px, py)``."""
    width, height = spec.resolution
    d_min, d_max = spec.depth_range
    sky, road, offroad, marking = (np.array(c) for c in _PALETTES.get(spec.scene, _PALETTES["city"]))

    v = py / height
    u = px / width
    below = v > spec.horizon
    with np.errstate(divide="ignore"):
        ground = np.where(below, spec.camera_scale / np.maximum(v - spec.horizon, 1e-12), np.inf)
    depth = np.minimum(ground, d_max)

    lateral = (u - 0.5) * depth / FOCAL
    along = depth + spec.ego_speed * time
    on_road = np.abs(lateral) < 4.0
    dash = (np.abs(lateral) < 0.15) & (np.mod(along, 6.0) < 3.0)
    edge_line = (np.abs(lateral) > 3.7) & on_road
    # cross-hatched tarmac patches give the ground some texture
    patch = 0.85 + 0.15 * np.cos(2 * np.pi * along / 2.5) * np.cos(2 * np.pi * lateral / 3.0)

    color = np.where(on_road[..., None], road * patch[..., None], offroad * patch[..., None])
    color = np.where((dash | edge_line)[..., None], marking, color)
    sky_shade = sky * (0.6 + 0.4 * (v / spec.horizon))[..., None]
    color = np.where(below[..., None] & (ground < d_max)[..., None], color, sky_shade)

    for obj in spec.objects:
        cx = obj.center[0] + obj.velocity[0] * time
        cy = obj.center[1] + obj.velocity[1] * time
        dx = (px - cx) / obj.half_size[0]
        dy = (py - cy) / obj.half_size[1]
        if obj.shape == "rect":
            inside = (np.abs(dx) <= 1.0) & (np.abs(dy) <= 1.0)
        else:
            inside = dx * dx + dy * dy <= 1.0
        hit = inside & (obj.depth < depth)
        depth = np.where(hit, obj.depth, depth)
        shade = 0.8 + 0.2 * np.clip(1.0 - dy, 0.0, 2.0) / 2.0
        color = np.where(hit[..., None], np.asarray(obj.albedo) * shade[..., None], color)
    return np.clip(color, 0.0, 1.0), depth


def render_scene(spec: SceneSpec, time: float = 0.0, supersample: int = 2):
    """Return ``(clean_rgb, depth)`` for ``spec`` at ``time`` seconds."""
    if time < 0:
        raise ValueError("time must be non-negative")
    width, height = spec.resolution
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    _, depth = _render_points(spec, xs + 0.5, ys + 0.5, time)

    ss = int(supersample)
    offsets = (np.arange(ss) + 0.5) / ss
    acc = np.zeros((height, width, 3))
    for oy in offsets:
        for ox in offsets:
            color, _ = _render_points(spec, xs + ox, ys + oy, time)
            acc += color
    return acc / (ss * ss), depth


def log_intensity(rgb: np.ndarray) -> np.ndarray:
    return np.log(np.asarray(rgb, dtype=np.float64).mean(axis=2) + LOG_EPS)


def apply_night(clean_rgb, gain, gamma, noise_sigma, rng=None) -> np.ndarray:
    if not 0 < gain <= 1:
        raise ValueError(f"gain must be in (0, 1], got {gain}")
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    out = gain * np.power(np.asarray(clean_rgb, dtype=np.float64), gamma)
    if noise_sigma > 0:
        rng = np.random.default_rng() if rng is None else rng
        out = out + rng.normal(0.0, noise_sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0)


def apply_headlights(rgb, depth, ambient, reach) -> np.ndarray:
    """Scale reflectance by ambient light plus a headlight term falling off as 1/depth^2.

    Surfaces nearer than ``reach`` meters get full illumination.
    """
    if not 0 <= ambient <= 1:
        raise ValueError(f"ambient must be in [0, 1], got {ambient}")
    if reach <= 0:
        raise ValueError("reach must be positive")
    depth = np.asarray(depth, dtype=np.float64)
    falloff = np.minimum(1.0, (reach / depth) ** 2)
    return np.asarray(rgb, dtype=np.float64) * (ambient + (1.0 - ambient) * falloff)[..., None]


def apply_fog(rgb, depth, beta, airlight) -> np.ndarray:
    """Exponential attenuation toward ``airlight`` with extinction ``beta``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if not 0 <= airlight <= 1:
        raise ValueError("airlight must be in [0, 1]")
    rgb = np.asarray(rgb, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if rgb.shape[:2] != depth.shape:
        raise ValueError(f"image {rgb.shape} and depth {depth.shape} disagree")
    if beta == 0:
        return rgb.copy()
    trans = np.exp(-beta * depth)[..., None]
    return rgb * trans + airlight * (1.0 - trans)


def apply_rain(rgb, intensity, rng=None) -> np.ndarray:
    """Overlay slanted bright streaks; streak count scales with intensity."""
    rgb = np.asarray(rgb, dtype=np.float64)
    out = rgb.copy()
    intensity = float(np.clip(intensity, 0.0, 1.0))
    height, width = rgb.shape[:2]
    n_streaks = int(round(intensity * height * width / 50.0))
    if n_streaks == 0:
        return out
    rng = np.random.default_rng() if rng is None else rng
    x0 = rng.uniform(0, width, n_streaks)
    y0 = rng.uniform(-4, height, n_streaks)
    length = rng.integers(3, 9, n_streaks)
    slant = rng.uniform(0.15, 0.4, n_streaks)
    alpha = rng.uniform(0.25, 0.55, n_streaks)
    for i in range(n_streaks):
        steps = np.arange(length[i])
        ys = np.round(y0[i] + steps).astype(int)
        xs = np.round(x0[i] + slant[i] * steps).astype(int)
        ok = (ys >= 0) & (ys < height) & (xs >= 0) & (xs < width)
        ys, xs = ys[ok], xs[ok]
        out[ys, xs] = out[ys, xs] + alpha[i] * (0.9 - out[ys, xs])
    return np.clip(out, 0.0, 1.0)


# --------------------------------------------------------------------------
# dataset generation


@dataclass(frozen=True)
class WeatherTag:
    kind: str
    intensity: float

    def __post_init__(self):
        if self.kind not in WEATHER_KINDS:
            raise ValueError(f"weather kind must be one of {WEATHER_KINDS}, got {self.kind!r}")
        if not 0 <= self.intensity <= 1:
            raise ValueError("weather intensity must be in [0, 1]")

    @property
    def has_fog(self) -> bool:
        return self.kind in ("fog", "rain_and_fog")

    @property
    def has_rain(self) -> bool:
        return self.kind in ("rain", "rain_and_fog")


@dataclass
class Sample:
    id: str
    rgb: np.ndarray  # night image, H×W×3 in [0, 1]
    event_frame: ev.EventFrame
    depth_gt: np.ndarray
    weather: WeatherTag
    scene: str
    split: str
    clean_rgb: np.ndarray | None = None


@dataclass(frozen=True)
class SampleRecord:
    id: str
    split: str
    weather: WeatherTag
    scene: str


@dataclass
class DatasetConfig:
    out_dir: Path
    n_samples: int = 640
    resolution: tuple[int, int] = (64, 64)
    weather_mixture: dict = field(default_factory=lambda: {k: 0.25 for k in WEATHER_KINDS})
    seed: int = 0
    depth_range: tuple[float, float] = DEFAULT_DEPTH_RANGE
    split_fractions: tuple[float, float, float] = DEFAULT_SPLIT
    threshold: float = ev.DEFAULT_THRESHOLD
    window: float = ev.DEFAULT_WINDOW
    night_gain: tuple[float, float] = (0.15, 0.4)
    night_gamma: tuple[float, float] = (1.2, 1.8)
    night_noise: tuple[float, float] = (0.005, 0.02)
    airlight: float = 0.5
    ambient: float = 0.3
    headlight_reach: float = 5.0
    workers: int = 1

    def validate(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9 or min(self.split_fractions) < 0:
            raise ValueError(f"split fractions must be non-negative and sum to 1: {self.split_fractions}")
        unknown = set(self.weather_mixture) - set(WEATHER_KINDS)
        if unknown:
            raise ValueError(f"unknown weather kinds {sorted(unknown)}; valid: {WEATHER_KINDS}")
        total = sum(self.weather_mixture.values())
        if total <= 0 or min(self.weather_mixture.values()) < 0:
            raise ValueError("weather mixture weights must be non-negative with positive sum")
        width, height = self.resolution
        if width < 8 or height < 8:
            raise ValueError("resolution must be at least 8x8")
        if not 0 <= self.ambient <= 1 or self.headlight_reach <= 0:
            raise ValueError("ambient must be in [0, 1] and headlight_reach positive")


class DatasetManifest:
    """Sample list, split assignment and paths to derived image sets.

    Text format, one directive or record per line::

        # EVEN manifest v1
        # root <sample dir, relative to the manifest file>
        # split_fractions 0.7 0.15 0.15
        # depth_range 2.0 60.0
        # resolution 64 64
        # window 0.0 0.125
        # images <name> <dir relative to the manifest file>
        id<TAB>split<TAB>weather<TAB>intensity<TAB>scene

    Derived image sets (enhanced images, fusion images) hold ``<id>.png``.
    """

    HEADER = "# EVEN manifest v1"

    def __init__(self, root, records, split_fractions=DEFAULT_SPLIT,
                 depth_range=DEFAULT_DEPTH_RANGE, resolution=(64, 64),
                 window=(0.0, ev.DEFAULT_WINDOW), images=None, path=None):
        self.root = Path(root)
        self.records: list[SampleRecord] = list(records)
        self.split_fractions = tuple(float(f) for f in split_fractions)
        self.depth_range = tuple(float(d) for d in depth_range)
        self.resolution = tuple(int(r) for r in resolution)
        self.window = tuple(float(w) for w in window)
        self.images: dict[str, Path] = {k: Path(v) for k, v in (images or {}).items()}
        self.path = Path(path) if path is not None else None
        self._by_id = {r.id: r for r in self.records}

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, DatasetManifest):
            return NotImplemented
        return self.to_text() == other.to_text()

    def ids(self, split=None) -> list[str]:
        return [r.id for r in self.records if split is None or r.split == split]

    def record(self, sample_id) -> SampleRecord:
        return self._by_id[sample_id]

    def sample_dir(self, sample_id) -> Path:
        return self.root / sample_id

    def with_images(self, name, directory) -> "DatasetManifest":
        images = dict(self.images)
        images[name] = Path(directory)
        return DatasetManifest(self.root, self.records, self.split_fractions, self.depth_range,
                               self.resolution, self.window, images, self.path)

    def image_path(self, name, sample_id) -> Path:
        if name not in self.images:
            raise KeyError(name)
        return self.images[name] / f"{sample_id}.png"

    # -- loading

    def load_sample(self, sample_id, with_clean=False) -> Sample:
        rec = self.record(sample_id)
        d = self.sample_dir(sample_id)
        stream = ev.EventStream.load(d / "events.evs", t_start=self.window[0], t_end=self.window[1])
        (frame,) = ev.stack_events(stream, self.window[1] - self.window[0])
        return Sample(
            id=rec.id,
            rgb=formats.read_png(d / "rgb.png"),
            event_frame=frame,
            depth_gt=formats.read_depth_file(d / "depth.dpt"),
            weather=rec.weather,
            scene=rec.scene,
            split=rec.split,
            clean_rgb=formats.read_png(d / "clean.png") if with_clean else None,
        )

    def load_image(self, name, sample_id) -> np.ndarray:
        return formats.read_png(self.image_path(name, sample_id))

    # -- serialization

    def to_text(self, base=None) -> str:
        base = Path(base) if base is not None else (self.path.parent if self.path else self.root.parent)

        def rel(p):
            return Path(os.path.relpath(Path(p).resolve(), Path(base).resolve())).as_posix()

        lines = [
            self.HEADER,
            f"# root {rel(self.root)}",
            "# split_fractions " + " ".join(f"{f:g}" for f in self.split_fractions),
            "# depth_range " + " ".join(repr(d) for d in self.depth_range),
            "# resolution " + " ".join(str(r) for r in self.resolution),
            "# window " + " ".join(repr(w) for w in self.window),
        ]
        for name in sorted(self.images):
            lines.append(f"# images {name} {rel(self.images[name])}")
        for r in self.records:
            lines.append("\t".join([r.id, r.split, r.weather.kind, f"{r.weather.intensity:.6f}", r.scene]))
        return "\n".join(lines) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text(base=path.parent))
        self.path = path
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        lines = path.read_text().splitlines()
        if not lines or lines[0] != cls.HEADER:
            raise formats.FormatError(f"{path}: not an EVEN manifest")
        base = path.parent
        kw: dict = {"images": {}}
        records = []
        for line in lines[1:]:
            if not line.strip():
                continue
            if line.startswith("#"):
                key, *vals = line[1:].split()
                if key == "root":
                    kw["root"] = base / vals[0]
                elif key == "split_fractions":
                    kw["split_fractions"] = tuple(float(v) for v in vals)
                elif key == "depth_range":
                    kw["depth_range"] = tuple(float(v) for v in vals)
                elif key == "resolution":
                    kw["resolution"] = tuple(int(v) for v in vals)
                elif key == "window":
                    kw["window"] = tuple(float(v) for v in vals)
                elif key == "images":
                    kw["images"][vals[0]] = base / vals[1]
                continue
            sid, split, kind, intensity, scene = line.split("\t")
            records.append(SampleRecord(sid, split, WeatherTag(kind, float(intensity)), scene))
        return cls(records=records, path=path, **kw)

    def validate(self) -> None:
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        missing = []
        for r in self.records:
            d = self.sample_dir(r.id)
            for name in ("rgb.png", "clean.png", "events.evs", "depth.dpt"):
                if not (d / name).is_file():
                    missing.append(d / name)
            for img in self.images:
                if not self.image_path(img, r.id).is_file():
                    missing.append(self.image_path(img, r.id))
        if missing:
            raise FileNotFoundError(f"{len(missing)} referenced files missing, e.g. {missing[0]}")


def assign_splits(n: int, fractions, seed) -> list[str]:
    """Deterministic shuffle of ``range(n)`` cut at the split fractions."""
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_val = min(n_val, n - n_train)
    order = np.random.default_rng([seed, 0x5EED]).permutation(n)
    splits = [""] * n
    for rank, idx in enumerate(order):
        splits[idx] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return splits


def _sample_weather(rng, mixture) -> WeatherTag:
    kinds = [k for k in WEATHER_KINDS if mixture.get(k, 0) > 0]
    probs = np.array([mixture[k] for k in kinds], dtype=np.float64)
    kind = kinds[rng.choice(len(kinds), p=probs / probs.sum())]
    intensity = 0.0 if kind == "clear" else float(np.round(rng.uniform(0.3, 1.0), 6))
    return WeatherTag(kind, intensity)


def _night_scene(rgb, depth, weather: WeatherTag, cfg: DatasetConfig, rng):
    rgb = apply_headlights(rgb, depth, cfg.ambient, cfg.headlight_reach)
    return _apply_weather(rgb, depth, weather, cfg.airlight, rng)


def _apply_weather(rgb, depth, weather: WeatherTag, airlight, rng):
    if weather.has_fog:
        rgb = apply_fog(rgb, depth, fog_beta(weather.intensity), airlight)
    if weather.has_rain:
        rgb = apply_rain(rgb, weather.intensity, rng)
    return rgb


def synthesize_sample(cfg: DatasetConfig, index: int):
    """Render one sample. Returns ``(clean, night, stream, depth, weather, scene)``."""
    rng = np.random.default_rng([cfg.seed, index])
    weather = _sample_weather(rng, cfg.weather_mixture)
    spec = SceneSpec.random(int(rng.integers(2**31)), cfg.resolution, cfg.depth_range)
    t0, t1 = 0.0, cfg.window
    prev_rgb, prev_depth = render_scene(spec, t0)
    clean, depth = render_scene(spec, t1)
    # both sensors see the same headlit, weathered scene; the event sensor is
    # spared the RGB tone curve and read noise, and the static headlight
    # falloff cancels in its log differences except near the LOG_EPS floor
    prev_seen = _night_scene(prev_rgb, prev_depth, weather, cfg, rng)
    seen = _night_scene(clean, depth, weather, cfg, rng)
    gain = rng.uniform(*cfg.night_gain)
    stream = ev.synthesize_events(log_intensity(gain * prev_seen), log_intensity(gain * seen),
                                  cfg.threshold, t0, t1)
    night = apply_night(seen, gain, rng.uniform(*cfg.night_gamma), rng.uniform(*cfg.night_noise), rng)
    return clean, night, stream, depth, weather, spec.scene


def _write_sample(cfg: DatasetConfig, index: int, sample_root: Path):
    clean, night, stream, depth, weather, scene = synthesize_sample(cfg, index)
    d = sample_root / f"{index:06d}"
    d.mkdir(parents=True, exist_ok=True)
    formats.write_png(d / "rgb.png", night)
    formats.write_png(d / "clean.png", clean)
    stream.save(d / "events.evs")
    formats.write_depth_file(d / "depth.dpt", depth)
    return weather, scene


def generate_dataset(config: DatasetConfig, workers: int | None = None) -> DatasetManifest:
    """Write ``n_samples`` sample directories plus ``manifest.txt``."""
    config.validate()
    out = Path(config.out_dir)
    sample_root = out / "samples"
    sample_root.mkdir(parents=True, exist_ok=True)
    workers = config.workers if workers is None else workers

    indices = range(config.n_samples)
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            tags = list(pool.map(_write_sample, [config] * len(indices), indices,
                                 [sample_root] * len(indices)))
    else:
        tags = [_write_sample(config, i, sample_root) for i in indices]

    splits = assign_splits(config.n_samples, config.split_fractions, config.seed)
    records = [SampleRecord(f"{i:06d}", splits[i], w, s) for i, (w, s) in enumerate(tags)]
    manifest = DatasetManifest(sample_root, records, config.split_fractions, config.depth_range,
                               config.resolution, (0.0, config.window))
    manifest.save(out / "manifest.txt")
    return manifest


def load_arrays(manifest: DatasetManifest, ids: Sequence[str], with_clean=False):
    """Stack samples into arrays: rgb, events (H×W), depth, and optionally clean."""
    samples = [manifest.load_sample(i, with_clean=with_clean) for i in ids]
    out = {
        "rgb": np.stack([s.rgb for s in samples]).astype(np.float32),
        "events": np.stack([s.event_frame.data for s in samples]).astype(np.float32),
        "depth": np.stack([s.depth_gt for s in samples]).astype(np.float32),
    }
    if with_clean:
        out["clean"] = np.stack([s.clean_rgb for s in samples]).astype(np.float32)
    return out


def fog_beta(intensity: float) -> float:
    return FOG_BETA_RANGE[0] + (FOG_BETA_RANGE[1] - FOG_BETA_RANGE[0]) * intensity
