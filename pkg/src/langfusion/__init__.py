"""Infrared-visible image fusion trained with a language-driven loss in CLIP space.

Submodules are imported on demand; ``langfusion.infer`` and
``langfusion.metrics`` work without any vision-language weights.
"""

__version__ = "0.1.0"
