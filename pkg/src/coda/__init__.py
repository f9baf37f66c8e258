"""Desk-scale dataset distillation: density-based representative selection
plus score-guided generative alignment, end to end and reproducible."""

__version__ = "0.1.0"
