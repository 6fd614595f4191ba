"""
Abstract PDE family: the operator F of u_t = F(p, u) with a known derivative
structure and unknown coefficients p.

Concrete families implement the spatial stencil, the right-hand side and the
boundary rule; this base class derives derivative stacks, the functional
residual and the explicit update from those three pieces.
"""
from abc import ABC, abstractmethod
from adapters.families.signal import (
    CoefficientEstimate,
    CoefficientSpec,
    GridSpec,
    Patch,
    Value,
    symbolic_head,
)
from adapters.families.util import central_first, central_second, forward_time
from autodiff.tensor import Tensor, lift
from interfaces.errors import FamilyError, ResidualError, ShapeError
import numpy as np
from typing import Any, Dict, List, Sequence, Tuple

Fields = np.ndarray
Derivatives = Dict[str, np.ndarray]


class PdeFamily(ABC):
    family_id: str = ""
    spatial_dims: int = 1
    state_names: Tuple[str, ...] = ("u",)
    coefficients: Tuple[CoefficientSpec, ...] = ()
    # Closed-form ground truth for coefficient functions, keyed by head name
    function_symbols: Dict[str, str] = {}
    blowup_threshold: float = 1e3

    @property
    def state_arity(self) -> int:
        return len(self.state_names)

    @property
    def scalar_names(self) -> List[str]:
        return [c.name for c in self.coefficients if c.kind == "scalar"]

    @property
    def head_specs(self) -> List[CoefficientSpec]:
        return [c for c in self.coefficients if c.kind == "function"]

    def config(self) -> Dict[str, Any]:
        """Options that change the operator; recorded in manifests."""
        return {}

    @abstractmethod
    def default_grid(self) -> GridSpec:
        return NotImplemented

    @abstractmethod
    def sample_coefficients(self, rng: np.random.Generator) -> Dict[str, float]:
        """Draws the scalar coefficients of one signal."""
        return NotImplemented

    @abstractmethod
    def spatial_derivatives(self, fields: Fields, grid: GridSpec) -> Tuple[Dict[str, np.ndarray], Derivatives]:
        """
        Spatial stencil on state slices.

        Args:
            fields: [..., state, *space]
            grid: grid metadata

        Returns:
            state: state values restricted to the points where the stencil exists
            derivs: spatial derivatives on the same points
        """
        return NotImplemented

    @abstractmethod
    def rhs_eval(
        self, est: CoefficientEstimate, state: Dict[str, np.ndarray], derivs: Derivatives
    ) -> Tuple[Value, ...]:
        """Time derivative of each state variable, one entry per state name."""
        return NotImplemented

    @abstractmethod
    def apply_update(self, fields: Fields, rhs: Sequence[np.ndarray], dt: float) -> Fields:
        """Explicit Euler update of one slice, honoring the boundary rule."""
        return NotImplemented

    def check_estimate(self, est: CoefficientEstimate) -> None:
        if est.family_id != self.family_id:
            raise FamilyError(f"Estimate for {est.family_id!r} used with family {self.family_id!r}")
        missing = [n for n in self.scalar_names if n not in est.scalars]
        missing += [c.name for c in self.head_specs if c.name not in est.heads]
        if missing:
            raise FamilyError(f"Estimate for {self.family_id!r} lacks coefficients {missing}")

    def check_grid(self, grid: GridSpec) -> None:
        if grid.dims != self.spatial_dims:
            raise FamilyError(f"{self.family_id!r} needs a {self.spatial_dims}-D grid, got {grid.dims}-D")

    def true_estimate(self, scalars: Dict[str, float]) -> CoefficientEstimate:
        """Ground-truth estimate from sampled scalars plus the closed-form heads."""
        heads = {name: symbolic_head(sym) for name, sym in self.function_symbols.items()}
        return CoefficientEstimate(
            self.family_id,
            scalars={k: float(v) for k, v in scalars.items()},
            heads=heads,
            symbols=dict(self.function_symbols),
        )

    def estimate_derivatives(self, patch: Patch) -> Tuple[Dict[str, np.ndarray], Derivatives]:
        """
        Derivative stack of a patch: forward-time differences for every state
        variable ("u_t", "v_t") plus the family's spatial derivatives, all on
        time indices 0..n_ctx-2 and the points where the spatial stencil exists.

        Returns:
            state: state values on the same points
            derivs: derivative arrays keyed by name
        """
        self.check_grid(patch.grid)
        time_axis = -(self.spatial_dims + 1)
        field_axis = time_axis - 1
        fields = patch.fields
        n_ctx = patch.n_ctx
        earlier = np.take(fields, np.arange(n_ctx - 1), axis=time_axis)
        # stencils index state fields right before the spatial axes: [..., T, state, *space]
        state, derivs = self.spatial_derivatives(np.moveaxis(earlier, field_axis, time_axis), patch.grid)
        time_derivs = forward_time(fields, patch.grid.dt, time_axis)
        for i, name in enumerate(self.state_names):
            full = np.take(time_derivs, i, axis=field_axis)
            derivs[f"{name}_t"] = self.restrict(full)
        return state, derivs

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Restricts [..., *space] values to the points where the spatial stencil exists."""
        return values

    def residual(self, est: CoefficientEstimate, patch: Patch) -> Tensor:
        """
        Mean squared functional residual mean((w_t - RHS_w)^2), averaged over
        interior points, time rows, state equations and any batch axes.

        Gradients flow into tensor-valued entries of `est` only; the observed
        patch values are constants.

        Raises:
            ResidualError: residual is non-finite (index of the first offending point)
        """
        self.check_estimate(est)
        state, derivs = self.estimate_derivatives(patch)
        rhs = self.rhs_eval(est, state, derivs)
        total = None
        for name, rhs_w in zip(self.state_names, rhs):
            diff = lift(derivs[f"{name}_t"] - rhs_w)
            sq_mean = (diff * diff).mean()
            total = sq_mean if total is None else total + sq_mean
            bad = ~np.isfinite(diff.data)
            if bad.any():
                index = tuple(int(i) for i in np.argwhere(bad)[0])
                raise ResidualError(f"Non-finite residual in equation for {name!r} at {index}", index)
        return total * (1.0 / self.state_arity)

    def evaluate_head_on_grid(
        self, est: CoefficientEstimate, name: str, fields: Fields, time_indices: Sequence[int]
    ) -> np.ndarray:
        """
        Evaluates a coefficient head on the states of selected time slices.

        Args:
            est: estimate holding the head
            name: head name, e.g. "b" or "R_v"
            fields: signal fields [state, n_slices, *space]
            time_indices: slices to evaluate

        Returns:
            values: [len(time_indices), *space]
        """
        spec = next((c for c in self.head_specs if c.name == name), None)
        if spec is None:
            raise FamilyError(f"{self.family_id!r} has no coefficient function {name!r}")
        slices = fields[:, list(time_indices)]
        args = [slices[self.state_names.index(s)] for s in spec.inputs]
        values = est.head(name)(*args)
        return np.asarray(values.data if isinstance(values, Tensor) else values, dtype=np.float64)

    def step(self, est: CoefficientEstimate, fields: Fields, grid: GridSpec) -> Fields:
        """One explicit step u[j+1] = u[j] + dt * RHS(u[j]) of a single slice [state, *space]."""
        if fields.shape[0] != self.state_arity:
            raise ShapeError(f"{self.family_id!r} expects {self.state_arity} state fields, got {fields.shape}")
        state, derivs = self.spatial_derivatives(fields, grid)
        rhs = [np.asarray(r.data if isinstance(r, Tensor) else r) for r in self.rhs_eval(est, state, derivs)]
        return self.apply_update(fields, rhs, grid.dt)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.config()})"


class DirichletFamily1D(PdeFamily):
    """1-D family on [0, L] with u(0) = u(L) = 0 held at every step."""

    spatial_dims = 1
    state_names = ("u",)
    blowup_threshold = 1e3

    def default_grid(self) -> GridSpec:
        return GridSpec(dx=(0.5,), n_x=(40,), dt=0.05, n_t=100, origin=(0.0,), periodic=False)

    def spatial_derivatives(self, fields: Fields, grid: GridSpec) -> Tuple[Dict[str, np.ndarray], Derivatives]:
        u = fields[..., 0, :]
        dx = grid.dx[0]
        state = {"u": u[..., 1:-1]}
        derivs = {"u_x": central_first(u, dx), "u_xx": central_second(u, dx)}
        return state, derivs

    def restrict(self, values: np.ndarray) -> np.ndarray:
        return values[..., 1:-1]

    def apply_update(self, fields: Fields, rhs: Sequence[np.ndarray], dt: float) -> Fields:
        updated = fields.copy()
        updated[0, 1:-1] = fields[0, 1:-1] + dt * rhs[0]
        updated[0, 0] = 0.0
        updated[0, -1] = 0.0
        return updated
