"""
Events from a night scene
=========================

Render one procedural driving scene twice, 0.125 s apart, and turn the
change in log intensity into an event frame.
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from even import events, synthcam

out = Path(sys.argv[1] if len(sys.argv) > 1 else "notebook_out")
out.mkdir(parents=True, exist_ok=True)

# a scene is a ground plane plus a few upright objects drifting sideways
spec = synthcam.SceneSpec.random(seed=11, resolution=(96, 64))
print(spec.scene, "with", spec.object_count, "objects")

before, _ = synthcam.render_scene(spec, 0.0)
after, depth = synthcam.render_scene(spec, 0.125)

# headlights light the near road; everything past ~20 m sits at ambient level
lit = synthcam.apply_headlights(after, depth, ambient=0.3, reach=5.0)
night = synthcam.apply_night(lit, gain=0.25, gamma=1.5, noise_sigma=0.01, rng=np.random.default_rng(0))
print("mean brightness: clean %.3f, night %.3f" % (after.mean(), night.mean()))

# the event sensor sees the same dim scene, minus the tone curve and read noise
lit_before = synthcam.apply_headlights(before, synthcam.render_scene(spec, 0.0)[1], 0.3, 5.0)
stream = events.synthesize_events(synthcam.log_intensity(0.25 * lit_before),
                                  synthcam.log_intensity(0.25 * lit), 0.4, 0.0, 0.125)
print(len(stream), "events,", int((stream.p > 0).sum()), "positive")

# one window of 0.125 s gives exactly one frame
(frame,) = events.stack_events(stream, 0.125)
print("frame range", frame.data.min(), frame.data.max(), "pixels touched", int((frame.raw != 0).sum()))

# the static headlight falloff cancels in log differences: scaling the whole
# scene by a constant changes nothing, as long as we stay clear of the floor
bright = events.synthesize_events(synthcam.log_intensity(before), synthcam.log_intensity(after), 0.4)
print("events from the clean scene:", len(bright))

fig, axes = plt.subplots(1, 4, figsize=(12, 2.6))
for ax, img, title in zip(axes, (after, np.clip(night * 4, 0, 1), frame.data, depth),
                          ("clean", "night (x4)", "event frame", "depth [m]")):
    ax.imshow(img, cmap=None if img.ndim == 3 else ("coolwarm" if title == "event frame" else "magma_r"))
    ax.set_title(title)
    ax.axis("off")
fig.tight_layout()
fig.savefig(out / "01_events_at_night.png", dpi=100, metadata={"Software": None})
