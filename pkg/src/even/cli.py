"""Command-line pipeline: ``even <subcommand> [--config PATH] [--out DIR] ...``.

Every invocation of a stage writes a fresh ``DIR/<stage>/vNNN/`` holding its
outputs, ``config.resolved`` (replayable with ``--config``), ``artifacts.txt``
(sha256 and relative path of each output) and a ``COMPLETE`` marker written
last. Later stages read from the newest complete run of their upstream stage.

Exit codes: 0 success, 2 configuration error, 3 missing upstream artifact,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

from . import depth, enhance, evaluate, fusion, synthcam
from .config import ConfigError, RunConfig
from .formats import MissingArtifactError

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_RUNTIME = 0, 2, 3, 4

UPSTREAM = {
    "gen-data": None,
    "train-enhance": "gen-data",
    "train-fusion": "train-enhance",
    "export-fusion": "train-fusion",
    "train-depth": "export-fusion",
    "eval": "train-depth",
    "baselines": "train-enhance",
    "crossval": "export-fusion",
}
PIPELINE = ("gen-data", "train-enhance", "train-fusion", "export-fusion", "train-depth", "eval")
SUBCOMMANDS = tuple(UPSTREAM) + ("all",)
MANIFEST = "manifest.txt"
COMPLETE = "COMPLETE"


class Workspace:
    """Versioned stage directories under one output root."""

    def __init__(self, root):
        self.root = Path(root)

    def _versions(self, stage):
        base = self.root / stage
        if not base.is_dir():
            return []
        return sorted(p for p in base.iterdir() if p.is_dir() and p.name.startswith("v") and p.name[1:].isdigit())

    def latest(self, stage) -> Path | None:
        done = [p for p in self._versions(stage) if (p / COMPLETE).is_file()]
        return done[-1] if done else None

    def require(self, stage) -> Path:
        run = self.latest(stage)
        if run is None:
            raise MissingArtifactError(
                f"no completed {stage!r} run under {self.root}; run `even {stage} --out {self.root}` first")
        return run

    def new_run(self, stage) -> Path:
        versions = self._versions(stage)
        number = int(versions[-1].name[1:]) + 1 if versions else 1
        run = self.root / stage / f"v{number:03d}"
        run.mkdir(parents=True, exist_ok=False)
        return run


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _finalize(run: Path, cfg: RunConfig) -> None:
    (run / "config.resolved").write_text(cfg.format())
    files = sorted(p for p in run.rglob("*") if p.is_file() and p.name not in (COMPLETE, "artifacts.txt"))
    lines = [f"{_sha256(p)}  {p.relative_to(run).as_posix()}" for p in files]
    (run / "artifacts.txt").write_text("\n".join(lines) + "\n")
    (run / COMPLETE).write_text("")


def _upstream_manifest(ws: Workspace, stage: str):
    run = ws.require(UPSTREAM[stage])
    return synthcam.DatasetManifest.load(run / MANIFEST), run


def _pair_dir(pair: str) -> str:
    return pair.replace("+", "_")


def _plot_losses(path: Path, histories: dict, title: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, hist in histories.items():
        if hist:
            ax.plot(range(1, len(hist) + 1), hist, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.set_title(title)
    if any(histories.values()):
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _plot_metrics(path: Path, rows: dict, title: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    names = list(rows)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].bar(names, [rows[n].abs_rel for n in names], color="tab:red")
    axes[0].set_title("Abs. Rel. (lower is better)")
    axes[1].bar(names, [rows[n].alpha1 for n in names], color="tab:blue")
    axes[1].set_title("alpha1 (higher is better)")
    for ax in axes:
        ax.tick_params(axis="x", labelrotation=45, labelsize=7)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _write_history(path: Path, history) -> None:
    path.write_text("".join(f"{i + 1} {v!r}\n" for i, v in enumerate(history)))


# --------------------------------------------------------------------------
# stages; each returns nothing and writes into ``run``


def stage_gen_data(ws, cfg, run, workers):
    manifest = synthcam.generate_dataset(cfg.dataset_config(run, workers), workers)
    print(f"gen-data: {len(manifest)} samples")


def stage_train_enhance(ws, cfg, run, workers):
    manifest, _ = _upstream_manifest(ws, "train-enhance")
    econf = cfg.enhancer_config()
    model = None
    if econf.kind == "attention_unet":
        model, history = enhance.train_enhancer(manifest, manifest.ids("train"), econf, cfg.enhancer_settings())
        enhance.save_enhancer(model, run / "enhancer.evnp")
        _write_history(run / "enhancer_loss.txt", history)
        _plot_losses(run / "enhancer_loss.png", {"enhancer": history}, "Enhancer training")
    manifest = enhance.export_enhanced(manifest, run / "enhanced", econf, model)
    manifest.save(run / MANIFEST)
    print(f"train-enhance: {econf.kind} enhancer, {len(manifest)} images")


def _train_pair(cfg, manifest, run, pair):
    net, history = fusion.train_fusion(manifest, cfg.fusion_config(pair), pair)
    name = _pair_dir(pair)
    fusion.save_fusion_net(net, run / f"fusion_{name}.evnp")
    _write_history(run / f"fusion_{name}_loss.txt", history)
    return net, history


def stage_train_fusion(ws, cfg, run, workers):
    manifest, _ = _upstream_manifest(ws, "train-fusion")
    pair = cfg["fusion.pair"]
    _, history = _train_pair(cfg, manifest, run, pair)
    _plot_losses(run / "fusion_loss.png", {pair: history}, "Fusion training")
    manifest.save(run / MANIFEST)
    print(f"train-fusion: {pair}, loss {history[0]:.4f} -> {history[-1]:.4f}" if history else "train-fusion: 0 epochs")


def stage_export_fusion(ws, cfg, run, workers):
    manifest, upstream = _upstream_manifest(ws, "export-fusion")
    pair = cfg["fusion.pair"]
    params = upstream / f"fusion_{_pair_dir(pair)}.evnp"
    if not params.is_file():
        raise MissingArtifactError(f"{params} not found; run train-fusion with fusion.pair={pair}")
    net = fusion.load_fusion_net(params)
    manifest = fusion.export_fusion_images(net, manifest, run / "fusion" / _pair_dir(pair), pair)
    manifest.save(run / MANIFEST)
    print(f"export-fusion: {pair}, {len(manifest)} images")


def stage_train_depth(ws, cfg, run, workers):
    manifest, _ = _upstream_manifest(ws, "train-depth")
    kind = cfg["depth.kind"]
    net, history = depth.train_depth(manifest, kind, cfg.depth_config())
    depth.save_depth_net(net, run / f"depth_{_pair_dir(kind)}.evnp")
    _write_history(run / "depth_loss.txt", history)
    _plot_losses(run / "depth_loss.png", {kind: history}, "Depth training")
    manifest.save(run / MANIFEST)
    print(f"train-depth: {kind}, loss {history[0]:.4f} -> {history[-1]:.4f}" if history else "train-depth: 0 epochs")


def stage_eval(ws, cfg, run, workers):
    manifest, upstream = _upstream_manifest(ws, "eval")
    kind = cfg["depth.kind"]
    params = upstream / f"depth_{_pair_dir(kind)}.evnp"
    if not params.is_file():
        raise MissingArtifactError(f"{params} not found; run train-depth with depth.kind={kind}")
    net = depth.load_depth_net(params)
    report = evaluate.evaluate_net(net, manifest, manifest.ids("test"), kind, manifest.depth_range)
    rows = {kind: report}
    evaluate.write_report(run, "eval", rows, title="Depth estimation (test split)")
    _plot_metrics(run / "eval_metrics.png", rows, "Test split")
    print(evaluate.format_table(rows))


def stage_baselines(ws, cfg, run, workers):
    manifest, _ = _upstream_manifest(ws, "baselines")
    kinds = cfg["eval.kinds"]
    fusion_histories = {}
    for pair in (k for k in kinds if k in fusion.PAIRS):
        net, fusion_histories[pair] = _train_pair(cfg, manifest, run, pair)
        manifest = fusion.export_fusion_images(net, manifest, run / "fusion" / _pair_dir(pair), pair)
    manifest.save(run / MANIFEST)

    def save(kind, net, history):
        depth.save_depth_net(net, run / f"depth_{_pair_dir(kind)}.evnp")
        _write_history(run / f"depth_{_pair_dir(kind)}_loss.txt", history)
        print(f"baselines: trained depth head on {kind}", flush=True)

    matrix = evaluate.run_baseline_matrix(manifest, cfg.depth_config(), kinds, on_trained=save)
    evaluate.write_report(run, "baselines", matrix.reports, title="Depth estimation by input kind (test split)")
    _plot_metrics(run / "baselines_metrics.png", matrix.reports, "Input kinds, test split")
    _plot_losses(run / "baselines_depth_loss.png", matrix.histories, "Depth training per input kind")
    if fusion_histories:
        _plot_losses(run / "baselines_fusion_loss.png", fusion_histories, "Fusion training per pair")
    print(matrix.table())


def stage_crossval(ws, cfg, run, workers):
    manifest, _ = _upstream_manifest(ws, "crossval")
    results = evaluate.weather_cross_validation(manifest, cfg.depth_config(), cfg["crossval.kind"])
    rows = {f"{r.train_set} -> {r.test_set}".replace(" ", "_"): r.report for r in results}
    (run / "crossval.txt").write_text(evaluate.format_crossval(results) + _direction_note(results))
    (run / "crossval.tsv").write_text(evaluate.format_records(rows))
    _plot_metrics(run / "crossval_metrics.png", rows, "Weather cross-validation")
    print((run / "crossval.txt").read_text())


def _direction_note(results) -> str:
    mixed_first, single_first = results
    better = single_first.report.abs_rel < mixed_first.report.abs_rel
    return (f"\nsingle->mixed Abs. Rel. {single_first.report.abs_rel:.4f}, "
            f"mixed->single {mixed_first.report.abs_rel:.4f}: training on single conditions "
            f"{'generalizes better' if better else 'does not generalize better'} (reported, not gated)\n")


STAGES = {
    "gen-data": stage_gen_data,
    "train-enhance": stage_train_enhance,
    "train-fusion": stage_train_fusion,
    "export-fusion": stage_export_fusion,
    "train-depth": stage_train_depth,
    "eval": stage_eval,
    "baselines": stage_baselines,
    "crossval": stage_crossval,
}


def _workers() -> int:
    raw = os.environ.get("EVEN_NUM_WORKERS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"EVEN_NUM_WORKERS must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigError("EVEN_NUM_WORKERS must be >= 1")
    return workers


def resolve_config(config_path=None, overrides=(), seed=None) -> RunConfig:
    overrides = list(overrides)
    if seed is not None:
        overrides.append(f"seed={seed}")
    if config_path is None:
        return RunConfig.parse("", overrides)
    path = Path(config_path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return RunConfig.load(path, overrides)


def run(subcommand: str, out="runs", config_path=None, overrides=(), seed=None) -> list[Path]:
    """Run one subcommand and return the run directories it created."""
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}; valid: {SUBCOMMANDS}")
    cfg = resolve_config(config_path, overrides, seed)
    workers = _workers()
    ws = Workspace(out)
    runs = []
    for stage in (PIPELINE if subcommand == "all" else (subcommand,)):
        if UPSTREAM[stage]:
            ws.require(UPSTREAM[stage])
        run_dir = ws.new_run(stage)
        STAGES[stage](ws, cfg, run_dir, workers)
        _finalize(run_dir, cfg)
        print(f"{stage}: wrote {run_dir}", flush=True)
        runs.append(run_dir)
    return runs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="even", description="Event-enhanced night-time depth pipeline.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="pipeline stage, or 'all' for the full chain")
    parser.add_argument("--config", metavar="PATH", help="flat key = value config file")
    parser.add_argument("--out", metavar="DIR", default="runs", help="workspace root (default: runs)")
    parser.add_argument("--seed", type=int, help="master seed, overrides the config")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                        help="override one config key; repeatable")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(args.subcommand, args.out, args.config, args.overrides, args.seed)
    except ConfigError as exc:
        print(f"even: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"even: missing dependency: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:  # noqa: BLE001 - every other failure maps to one exit code
        print(f"even: {args.subcommand} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK
