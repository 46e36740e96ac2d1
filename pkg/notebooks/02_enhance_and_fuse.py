"""
Brightening and fusing
======================

Brighten night frames, then learn a per-channel blend of event and
RGB features. Small sizes keep this under a minute on one core.
"""
import sys
from pathlib import Path

import numpy as np

from even import enhance, fusion, synthcam

out = Path(sys.argv[1] if len(sys.argv) > 1 else "notebook_out")
data = synthcam.generate_dataset(synthcam.DatasetConfig(out_dir=out / "data02", n_samples=48,
                                                        resolution=(32, 32), seed=2))
print(len(data), "samples;", {s: len(data.ids(s)) for s in synthcam.SPLITS})

# the analytic enhancer lifts dark pixels toward a gamma curve, leaving bright ones alone
night = data.load_sample(data.ids()[0]).rgb
brighter = enhance.enhance(night)
print("night mean %.3f -> enhanced %.3f" % (night.mean(), brighter.mean()))

# the illumination map drives it: V is the per-pixel max over channels
ill = enhance.illumination_channel(night)
print("attention (1 - V) ranges over", ill.attention.min().round(3), "to", ill.attention.max().round(3))

data = enhance.export_enhanced(data, out / "enhanced02", enhance.EnhancerConfig())

cfg = fusion.FusionConfig(C=8, d=4, epochs=6, batch_size=8, seed=0)
net, history = fusion.train_fusion(data, cfg, "even")
print("fusion loss per epoch:", np.round(history, 4))

# attention weights for one test sample; a + b is one for every channel
sid = data.ids("test")[0]
sample = data.load_sample(sid)
result = fusion.fuse(sample.event_frame.data[..., None].repeat(3, axis=2),
                     fusion.normalize_rgb(data.load_image("enhanced", sid)), net)
print("event weight per channel:", np.round(result.attention_a, 3))
print("a + b:", np.round(result.attention_a + result.attention_b, 12))

# forcing the event weight to zero leaves only the RGB branch
rgb_only = fusion.fuse(sample.event_frame.data[..., None].repeat(3, axis=2),
                       fusion.normalize_rgb(data.load_image("enhanced", sid)), net, force_a=0.0)
print("image change from dropping events: %.4f" % np.abs(rgb_only.fusion_image - result.fusion_image).mean())
