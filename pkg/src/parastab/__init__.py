"""Stabilization of periodic parabolic equations by oblique-projection and Riccati feedback."""

__version__ = "0.1.0"
