"""Deep Fréchet regression for metric-space valued responses."""

__version__ = "0.1.0"

from ._accel import USE_NUMBA, backend_name  # noqa: E402
