"""Single-server EDF queue with reneging: simulator and fluid limits."""

__version__ = "0.1.0"
