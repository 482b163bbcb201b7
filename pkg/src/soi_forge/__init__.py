"""Toolkit for mining, masking, and evaluating similar-object interference in tracking."""

__version__ = "0.1.0"

from soi_forge.core import BoundingBox, ImageDims, iou

__all__ = ["BoundingBox", "ImageDims", "iou", "__version__"]
