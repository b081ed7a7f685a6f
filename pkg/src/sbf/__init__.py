"""Scale-Body-Flow maps and point-supervised segmentation heads."""

__version__ = "0.1.0"
