"""
Depth from each input
=====================

Train the same small depth network on each input kind and compare
the heads on the test split.
"""
import sys
from pathlib import Path

from even import depth, enhance, evaluate, fusion, synthcam

out = Path(sys.argv[1] if len(sys.argv) > 1 else "notebook_out")
data = synthcam.generate_dataset(synthcam.DatasetConfig(out_dir=out / "data03", n_samples=64,
                                                        resolution=(32, 32), seed=5))
data = enhance.export_enhanced(data, out / "enhanced03", enhance.EnhancerConfig())
net, _ = fusion.train_fusion(data, fusion.FusionConfig(C=8, d=4, epochs=4, seed=0), "even")
data = fusion.export_fusion_images(net, data, out / "fused03", "even")

# one config for every head, so differences come from the inputs
cfg = depth.DepthConfig(epochs=8, batch_size=8, lr=1e-3, seed=0)
matrix = evaluate.run_baseline_matrix(data, cfg, ("rgb", "event", "enhanced", "even"))
print(matrix.table())

# metrics pool pixels over the whole split; alphas are nested by construction
for kind, rep in matrix.reports.items():
    assert rep.alpha1 <= rep.alpha2 <= rep.alpha3, kind

# weather cross-validation: train on one fold, test on the other
folds = evaluate.weather_split(data)
print(len(folds.fold_a), "single-weather samples,", len(folds.fold_b), "mixed")
results = evaluate.weather_cross_validation(data, cfg, "even")
print(evaluate.format_crossval(results))
