"""
Gaussian-process initial conditions.

1-D Dirichlet families draw from the GP posterior conditioned on
u(0) = u(L) = 0; FN2D draws every state field independently from the
unconditioned prior over the 2-D grid. Covariance factors are cached per
(GP, grid) pair since every signal of a dataset shares them.
"""
from adapters.families.signal import GridSpec
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from interfaces.errors import CholeskyError, ConfigError
import logging
import numpy as np
from scipy import linalg
from typing import Any, Dict, Tuple

JITTER_MAX = 1e-6
CONDITIONING = ("dirichlet", "none")


@dataclass(frozen=True)
class GpSpec:
    """
    Squared-exponential GP: k(x, x') = sigma^2 exp(-|x - x'|^2 / (2 l^2)).

    Attributes:
        length_scale: l
        sigma: amplitude
        conditioning: "dirichlet" (zero at both ends of a 1-D domain) or "none"
        jitter: initial diagonal jitter, escalated tenfold up to 1e-6
    """

    length_scale: float = 3.0
    sigma: float = 0.5
    conditioning: str = "dirichlet"
    jitter: float = 1e-10

    def __post_init__(self):
        if self.conditioning not in CONDITIONING:
            raise ConfigError(f"Unknown GP conditioning {self.conditioning!r}; expected one of {CONDITIONING}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "GpSpec":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown GP settings {sorted(unknown)}")
        return cls(**d)


def se_kernel(x1: np.ndarray, x2: np.ndarray, gp: GpSpec) -> np.ndarray:
    """Kernel matrix between point sets [n, d] and [m, d]."""
    sq_dist = np.sum((x1[:, None, :] - x2[None, :, :]) ** 2, axis=-1)
    return gp.sigma**2 * np.exp(-sq_dist / (2.0 * gp.length_scale**2))


def grid_points(grid: GridSpec) -> np.ndarray:
    """All grid points [n, dims] in row-major order of the spatial shape."""
    axes = [grid.coordinates(i) for i in range(grid.dims)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


def cholesky_with_jitter(cov: np.ndarray, jitter: float) -> np.ndarray:
    """
    Lower Cholesky factor of cov + jitter I, escalating jitter tenfold on failure.

    Raises:
        CholeskyError: still not positive definite at jitter 1e-6
    """
    eye = np.eye(cov.shape[0])
    while True:
        try:
            return linalg.cholesky(cov + jitter * eye, lower=True)
        except np.linalg.LinAlgError:
            if jitter >= JITTER_MAX:
                raise CholeskyError(f"Covariance not positive definite even with jitter {jitter:g}")
            logging.debug(f"Cholesky failed at jitter {jitter:g}; escalating.")
            jitter = min(jitter * 10.0, JITTER_MAX)


@lru_cache(maxsize=16)
def _factor(gp: GpSpec, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Cholesky factor of the (conditioned) covariance and the free point indices."""
    points = grid_points(grid)
    n = points.shape[0]
    if n < 2:
        raise CholeskyError(f"GP sampling needs at least 2 grid points, got {n}")
    if gp.conditioning == "dirichlet":
        if grid.dims != 1:
            raise CholeskyError("Dirichlet conditioning is defined for 1-D grids only")
        fixed = np.array([0, n - 1])
        free = np.arange(1, n - 1)
        k_ff = se_kernel(points[free], points[free], gp)
        k_fb = se_kernel(points[free], points[fixed], gp)
        k_bb = se_kernel(points[fixed], points[fixed], gp)
        cov = k_ff - k_fb @ linalg.solve(k_bb, k_fb.T, assume_a="pos")
        cov = 0.5 * (cov + cov.T)
    else:
        free = np.arange(n)
        cov = se_kernel(points, points, gp)
    return cholesky_with_jitter(cov, gp.jitter), free


def sample_initial_condition(gp: GpSpec, grid: GridSpec, seed: int, n_fields: int = 1) -> np.ndarray:
    """
    Draws one initial slice.

    Args:
        gp: kernel and conditioning
        grid: spatial grid
        seed: RNG seed
        n_fields: number of independent state fields

    Returns:
        init: [n_fields, *grid.spatial_shape]; conditioned points are exactly 0
    """
    chol, free = _factor(gp, grid)
    rng = np.random.default_rng(seed)
    n = int(np.prod(grid.spatial_shape))
    out = np.zeros((n_fields, n))
    z = rng.standard_normal((n_fields, len(free)))
    out[:, free] = z @ chol.T
    return out.reshape((n_fields,) + grid.spatial_shape)
