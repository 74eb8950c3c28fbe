"""Joint supervised and 3D-puzzle self-supervised learning on point clouds."""

__version__ = "0.1.0"
