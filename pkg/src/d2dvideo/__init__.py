"""Quality-aware D2D video caching and Lyapunov-controlled streaming."""

__version__ = "0.1.0"
