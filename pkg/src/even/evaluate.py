"""Depth metrics, the Sobel edge baseline and the comparison harnesses."""

from __future__ import annotations

from dataclasses import astuple, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import ndimage

from .depth import INPUT_KINDS, DepthConfig, DepthMap, load_inputs, load_targets, predict_depth, train_depth

THRESHOLDS = (1.25, 1.25 ** 2, 1.25 ** 3)
SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T
EDGE_FLOOR = 1e-9

COLUMNS = ("Abs. Rel.", "Sq. Rel.", "RMSE", "Log10", "alpha1", "alpha2", "alpha3")


@dataclass(frozen=True)
class MetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    log10: float
    alpha1: float
    alpha2: float
    alpha3: float
    n_pixels: int

    def values(self) -> tuple[float, ...]:
        return astuple(self)[:7]


def compute_metrics(pred: DepthMap, gt: DepthMap, depth_range=None) -> MetricsReport:
    """Eigen-style errors and threshold accuracies over valid pixels.

    Accuracy uses a strict ``max(p/g, g/p) < 1.25**i``. If ``depth_range``
    is given, predictions are clamped into it first.
    """
    p = np.asarray(pred.data, dtype=np.float64)
    g = np.asarray(gt.data, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    mask = np.asarray(gt.valid_mask, dtype=bool) & np.asarray(pred.valid_mask, dtype=bool)
    if not mask.any():
        raise ValueError("valid mask is empty")
    p, g = p[mask], g[mask]
    if np.any(g <= 0):
        raise ValueError("ground truth must be positive on valid pixels")
    if depth_range is not None:
        p = np.clip(p, depth_range[0], depth_range[1])
    if np.any(p <= 0):
        raise ValueError("predictions must be positive on valid pixels")
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff ** 2 / g)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        # |log10 p - log10 g| written through the ratio, which a common
        # power-of-two rescaling leaves bit-for-bit unchanged
        log10=float(np.mean(np.abs(np.log10(p / g)))),
        alpha1=float(np.mean(ratio < THRESHOLDS[0])),
        alpha2=float(np.mean(ratio < THRESHOLDS[1])),
        alpha3=float(np.mean(ratio < THRESHOLDS[2])),
        n_pixels=int(mask.sum()),
    )


def sobel_magnitude(gray: np.ndarray) -> np.ndarray:
    """Un-normalized Sobel gradient magnitude (edge-replicated borders)."""
    gray = np.asarray(gray, dtype=np.float64)
    gx = ndimage.correlate(gray, SOBEL_X, mode="nearest")
    gy = ndimage.correlate(gray, SOBEL_Y, mode="nearest")
    return np.hypot(gx, gy)


def sobel_image(rgb) -> np.ndarray:
    """Sobel edge image of an H×W×3 image (or batch), max-normalized, 3 channels."""
    rgb = np.asarray(rgb)
    if rgb.ndim == 4:
        return np.stack([sobel_image(im) for im in rgb])
    mag = sobel_magnitude(rgb.mean(axis=2))
    peak = mag.max()
    # a flat image leaves only rounding residue; don't blow it up to 1
    mag = mag / peak if peak > EDGE_FLOOR else np.zeros_like(mag)
    return np.repeat(mag[:, :, None], 3, axis=2).astype(np.float32)


# --------------------------------------------------------------------------
# reports


def format_table(rows: dict, title: str = "", label: str = "Input") -> str:
    """Aligned text table: one row per key, seven metric columns."""
    width = max([len(label)] + [len(str(k)) for k in rows])
    head = f"{label:<{width}}  " + "  ".join(f"{c:>9}" for c in COLUMNS)
    lines = ([title] if title else []) + [head, "-" * len(head)]
    for key, rep in rows.items():
        lines.append(f"{str(key):<{width}}  " + "  ".join(f"{v:>9.4f}" for v in rep.values()))
    return "\n".join(lines) + "\n"


def format_records(rows: dict) -> str:
    """Machine-readable lines: ``key abs_rel sq_rel rmse log10 a1 a2 a3 n_pixels``."""
    names = [f.name for f in fields(MetricsReport)]
    out = ["# input_kind " + " ".join(names)]
    for key, rep in rows.items():
        out.append(" ".join([str(key)] + [repr(float(v)) for v in rep.values()] + [str(rep.n_pixels)]))
    return "\n".join(out) + "\n"


def parse_records(text: str) -> dict:
    rows = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, *vals = line.split()
        rows[key] = MetricsReport(*(float(v) for v in vals[:7]), n_pixels=int(vals[7]))
    return rows


# --------------------------------------------------------------------------
# harnesses


def evaluate_net(net, manifest, ids, kind, depth_range) -> MetricsReport:
    inputs = load_inputs(manifest, ids, kind)
    gt = DepthMap.from_gt(load_targets(manifest, ids), depth_range)
    return compute_metrics(predict_depth(inputs, net), gt, depth_range)


@dataclass
class BaselineMatrix:
    reports: dict = field(default_factory=dict)  # kind -> MetricsReport
    histories: dict = field(default_factory=dict)  # kind -> per-epoch loss

    def table(self) -> str:
        return format_table(self.reports, title="Depth estimation by input kind (test split)")

    def records(self) -> str:
        return format_records(self.reports)


def run_baseline_matrix(manifest, config: DepthConfig | None = None, kinds=INPUT_KINDS,
                        on_trained=None) -> BaselineMatrix:
    """Train one depth head per input kind and score it on the test split.

    Every kind uses the same depth config and seed, so differences come
    from the inputs. ``on_trained(kind, net, history)`` is called after each
    head is fitted.
    """
    config = config or DepthConfig(depth_range=manifest.depth_range)
    unknown = [k for k in kinds if k not in INPUT_KINDS]
    if unknown:
        raise ValueError(f"unknown input kinds {unknown}; valid: {INPUT_KINDS}")
    # fail before any training if an upstream artifact is missing
    probe = manifest.ids()[:1]
    for kind in kinds:
        load_inputs(manifest, probe, kind)
    test_ids = manifest.ids("test")
    if not test_ids:
        raise ValueError("test split is empty")
    result = BaselineMatrix()
    for kind in kinds:
        net, history = train_depth(manifest, kind, config)
        result.reports[kind] = evaluate_net(net, manifest, test_ids, kind, config.depth_range)
        result.histories[kind] = history
        if on_trained is not None:
            on_trained(kind, net, history)
    return result


@dataclass(frozen=True)
class CrossValSplit:
    fold_a: tuple  # rain only and fog only
    fold_b: tuple  # rain and fog together

    FOLD_NAMES = ("rain only and fog only", "rain and fog at the same time")


def weather_split(manifest) -> CrossValSplit:
    fold_a = tuple(r.id for r in manifest.records if r.weather.kind in ("rain", "fog"))
    fold_b = tuple(r.id for r in manifest.records if r.weather.kind == "rain_and_fog")
    return CrossValSplit(fold_a, fold_b)


@dataclass(frozen=True)
class CrossValResult:
    train_set: str
    test_set: str
    report: MetricsReport


def weather_cross_validation(manifest, config: DepthConfig | None = None, kind: str = "even"):
    """Two-fold weather cross-validation of the depth head on ``kind`` inputs.

    Returns two results in table order: mixed-weather training first, then
    single-weather training.
    """
    config = config or DepthConfig(depth_range=manifest.depth_range)
    split = weather_split(manifest)
    if not split.fold_a or not split.fold_b:
        raise ValueError(
            f"cross-validation needs both folds: {len(split.fold_a)} single-weather, "
            f"{len(split.fold_b)} mixed-weather samples")
    name_a, name_b = CrossValSplit.FOLD_NAMES
    results = []
    for train_ids, test_ids, train_name, test_name in (
            (split.fold_b, split.fold_a, name_b, name_a),
            (split.fold_a, split.fold_b, name_a, name_b)):
        net, _ = train_depth(manifest, kind, config, ids=train_ids)
        report = evaluate_net(net, manifest, list(test_ids), kind, config.depth_range)
        results.append(CrossValResult(train_name, test_name, report))
    return results


def format_crossval(results) -> str:
    rows = {f"{r.train_set} -> {r.test_set}": r.report for r in results}
    return format_table(rows, title="Weather cross-validation", label="Train set -> Test set")


def write_report(directory, name: str, rows: dict, title: str = "") -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    table = directory / f"{name}.txt"
    records = directory / f"{name}.tsv"
    table.write_text(format_table(rows, title=title))
    records.write_text(format_records(rows))
    return table, records
