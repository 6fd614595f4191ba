"""
2-D FitzHugh-Nagumo reaction-diffusion system:

    u_t = a Lap(u) + u - u^3 - k - v
    v_t = b Lap(v) + R_v(u, v)

with known diffusion (a, b) = (1e-3, 5e-3), k drawn per signal and
R_v(u, v) = u - v in the data. The domain is periodic by default; a
zero-flux (Neumann mirror) Laplacian is available through `boundary`.

On the default 32 x 32 grid the v diffusion alone gives
2 b dt / dx^2 = 1, above the explicit limit of 1/2, so `step` splits every
recorded time step into equal explicit sub-steps.
"""
from adapters.families.base import Derivatives, Fields, PdeFamily
from adapters.families.signal import CoefficientEstimate, CoefficientSpec, GridSpec, Value
from adapters.families.util import BOUNDARIES, laplacian_2d
from interfaces.errors import ConfigError
import numpy as np
from typing import Any, Dict, Sequence, Tuple


class FitzHughNagumoFamily(PdeFamily):
    family_id = "fn2d"
    spatial_dims = 2
    state_names = ("u", "v")
    coefficients = (CoefficientSpec("k"), CoefficientSpec("R_v", kind="function", inputs=("u", "v")))
    function_symbols = {"R_v": "u-v"}
    blowup_threshold = 1e2
    diffusion_u = 1e-3
    diffusion_v = 5e-3
    cfl_target = 0.25  # half the 2-D explicit diffusion limit
    ranges = {"k": (0.0, 1.0)}

    def __init__(self, boundary: str = "periodic") -> None:
        if boundary not in BOUNDARIES:
            raise ConfigError(f"Unknown boundary {boundary!r}; expected one of {BOUNDARIES}")
        self.boundary = boundary

    def config(self) -> Dict[str, Any]:
        return {"boundary": self.boundary}

    def default_grid(self) -> GridSpec:
        return GridSpec(
            dx=(0.01, 0.01), n_x=(32, 32), dt=0.01, n_t=100, origin=(-0.16, -0.16), periodic=True
        )

    def sample_coefficients(self, rng: np.random.Generator) -> Dict[str, float]:
        lo, hi = self.ranges["k"]
        return {"k": float(rng.uniform(lo, hi))}

    def spatial_derivatives(self, fields: Fields, grid: GridSpec) -> Tuple[Dict[str, np.ndarray], Derivatives]:
        u, v = fields[..., 0, :, :], fields[..., 1, :, :]
        dy, dx = grid.dx
        state = {"u": u, "v": v}
        derivs = {
            "lap_u": laplacian_2d(u, dx, dy, self.boundary),
            "lap_v": laplacian_2d(v, dx, dy, self.boundary),
        }
        return state, derivs

    def rhs_eval(
        self, est: CoefficientEstimate, state: Dict[str, np.ndarray], derivs: Derivatives
    ) -> Tuple[Value, ...]:
        u, v = state["u"], state["v"]
        k = est.scalar("k")
        rhs_u = self.diffusion_u * derivs["lap_u"] + u - u**3 - v - k
        rhs_v = self.diffusion_v * derivs["lap_v"] + est.head("R_v")(u, v)
        return rhs_u, rhs_v

    def apply_update(self, fields: Fields, rhs: Sequence[np.ndarray], dt: float) -> Fields:
        return fields + dt * np.stack(rhs)

    def substeps(self, grid: GridSpec) -> int:
        """Explicit sub-steps per recorded step so that (sum over axes of D dt / dx^2) <= cfl_target."""
        diffusion = max(self.diffusion_u, self.diffusion_v)
        ratio = sum(diffusion * grid.dt / (d * d) for d in grid.dx)
        return max(1, int(np.ceil(ratio / self.cfl_target - 1e-9)))

    def step(self, est: CoefficientEstimate, fields: Fields, grid: GridSpec) -> Fields:
        n = self.substeps(grid)
        if n == 1:
            return super().step(est, fields, grid)
        sub_grid = grid.with_dt(grid.dt / n)
        for _ in range(n):
            fields = super().step(est, fields, sub_grid)
        return fields
