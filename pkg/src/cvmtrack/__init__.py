"""Extended object tracking with a coupled velocity model and WLS filters."""

__version__ = "0.1.0"
