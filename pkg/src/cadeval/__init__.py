"""Evaluation and postprocessing toolkit for lesion-detection CAD in mammography."""

__version__ = "0.1.0"
