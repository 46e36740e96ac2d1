"""Event-enhanced monocular depth estimation for night-time driving scenes.

Modules, in pipeline order: ``synthcam`` (procedural paired data),
``events`` (event streams and frames), ``enhance`` (low-light enhancement),
``fusion`` (attention fusion of event and RGB images), ``depth`` (depth
head), ``evaluate`` (metrics and comparison harnesses), ``cli``.
"""

__version__ = "0.1.0"
