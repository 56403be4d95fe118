"""Adaptive internal-model attitude control for flexible spacecraft with uncertain inertia."""

__version__ = "0.1.0"
