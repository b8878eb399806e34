"""Noise-robust deep metric learning lab: teacher-based interaction selection,
confidence-weighted and class-center baselines, retrieval metrics, sweeps."""

__version__ = "0.1.0"
