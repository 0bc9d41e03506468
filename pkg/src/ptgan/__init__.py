"""Pose-transformational GAN: synthesize a person in a target 25-keypoint pose."""

__version__ = "0.1.0"
