"""Fit Loop subdivision control meshes to oriented point clouds."""

__version__ = "0.1.0"
