"""
Finite-difference stencils of the forward-time central-space scheme.

All functions act on the trailing axes of numpy arrays so leading batch,
state and time axes pass through unchanged.
"""
from interfaces.errors import ConfigError
import numpy as np

BOUNDARIES = ("periodic", "neumann")


def forward_time(u: np.ndarray, dt: float, time_axis: int) -> np.ndarray:
    """(u[j+1] - u[j]) / dt along `time_axis`; one slice shorter than u."""
    n = u.shape[time_axis]
    later = np.take(u, np.arange(1, n), axis=time_axis)
    earlier = np.take(u, np.arange(0, n - 1), axis=time_axis)
    return (later - earlier) / dt


def central_first(u: np.ndarray, dx: float) -> np.ndarray:
    """(u[i+1] - u[i-1]) / (2 dx) on interior points of the last axis."""
    return (u[..., 2:] - u[..., :-2]) / (2.0 * dx)


def central_second(u: np.ndarray, dx: float) -> np.ndarray:
    """(u[i+1] - 2 u[i] + u[i-1]) / dx^2 on interior points of the last axis."""
    return (u[..., 2:] - 2.0 * u[..., 1:-1] + u[..., :-2]) / (dx * dx)


def laplacian_2d(u: np.ndarray, dx: float, dy: float, boundary: str = "periodic") -> np.ndarray:
    """
    Five-point Laplacian over the last two axes, same shape as u.

    Args:
        u: array [..., H, W]
        dx, dy: spacing along the last and second-to-last axis
        boundary: "periodic" wraps both axes; "neumann" mirrors the boundary
            value into the ghost cell (zero normal flux)
    """
    if boundary == "periodic":
        up, down = np.roll(u, 1, axis=-2), np.roll(u, -1, axis=-2)
        left, right = np.roll(u, 1, axis=-1), np.roll(u, -1, axis=-1)
    elif boundary == "neumann":
        pad = [(0, 0)] * (u.ndim - 2) + [(1, 1), (1, 1)]
        g = np.pad(u, pad, mode="edge")
        up, down = g[..., :-2, 1:-1], g[..., 2:, 1:-1]
        left, right = g[..., 1:-1, :-2], g[..., 1:-1, 2:]
    else:
        raise ConfigError(f"Unknown boundary rule {boundary!r}; expected one of {BOUNDARIES}")
    return (up - 2.0 * u + down) / (dy * dy) + (left - 2.0 * u + right) / (dx * dx)
