"""Trajectory anomaly detection with a spatio-temporal graph auto-encoder and latent KDE."""

__version__ = "0.1.0"
