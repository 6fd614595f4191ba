"""
Value types shared by PDE families, the solver, the dataset container and
the models: grid metadata, signals, patches and coefficient estimates.

Field arrays are laid out as [..., state, time, *space]: optional leading
batch axes, then one entry per state variable (u, or u and v), then time,
then one or two spatial axes.
"""
from autodiff.tensor import Tensor
from dataclasses import dataclass, field
from interfaces.errors import PatchError, ShapeError
import math
import numpy as np
from typing import Any, Callable, Dict, Optional, Tuple, Union

Value = Union[float, np.ndarray, Tensor]
Head = Callable[..., Value]

MIN_CONTEXT = 3


@dataclass(frozen=True)
class GridSpec:
    """
    Uniform space-time grid.

    Attributes:
        dx: spacing per spatial axis
        n_x: number of intervals per spatial axis (L = n_x * dx)
        dt: time step
        n_t: number of time steps (T = n_t * dt); signals hold n_t + 1 slices
        origin: coordinate of the first grid point per axis
        periodic: periodic domains store n_x points per axis (the last point
            coincides with the first); otherwise n_x + 1 points, endpoints included
    """

    dx: Tuple[float, ...]
    n_x: Tuple[int, ...]
    dt: float
    n_t: int
    origin: Tuple[float, ...] = (0.0,)
    periodic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dx", tuple(float(d) for d in self.dx))
        object.__setattr__(self, "n_x", tuple(int(n) for n in self.n_x))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if len(self.dx) != len(self.n_x) or len(self.origin) != len(self.dx):
            raise ShapeError(f"Grid axes disagree: dx={self.dx}, n_x={self.n_x}, origin={self.origin}")
        if min(self.dx) <= 0 or min(self.n_x) <= 0 or self.dt <= 0 or self.n_t <= 0:
            raise ShapeError(f"Grid sizes must be strictly positive: {self}")

    @property
    def dims(self) -> int:
        return len(self.dx)

    @property
    def lengths(self) -> Tuple[float, ...]:
        return tuple(n * d for n, d in zip(self.n_x, self.dx))

    @property
    def duration(self) -> float:
        return self.n_t * self.dt

    @property
    def spatial_shape(self) -> Tuple[int, ...]:
        extra = 0 if self.periodic else 1
        return tuple(n + extra for n in self.n_x)

    def coordinates(self, axis: int = 0) -> np.ndarray:
        return self.origin[axis] + self.dx[axis] * np.arange(self.spatial_shape[axis])

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_t + 1)

    def with_dt(self, dt: float) -> "GridSpec":
        return GridSpec(self.dx, self.n_x, dt, self.n_t, self.origin, self.periodic)

    def with_n_t(self, n_t: int) -> "GridSpec":
        return GridSpec(self.dx, self.n_x, self.dt, n_t, self.origin, self.periodic)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dx": list(self.dx),
            "n_x": list(self.n_x),
            "dt": self.dt,
            "n_t": self.n_t,
            "origin": list(self.origin),
            "periodic": self.periodic,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "GridSpec":
        return cls(
            dx=tuple(d["dx"]),
            n_x=tuple(d["n_x"]),
            dt=float(d["dt"]),
            n_t=int(d["n_t"]),
            origin=tuple(d.get("origin", [0.0] * len(d["dx"]))),
            periodic=bool(d.get("periodic", False)),
        )


@dataclass
class Signal:
    """Discretized spatio-temporal state, fields shaped [state, n_t + 1, *space]."""

    grid: GridSpec
    fields: np.ndarray

    @property
    def n_slices(self) -> int:
        return self.fields.shape[1]

    @property
    def u(self) -> np.ndarray:
        return self.fields[0]

    @property
    def v(self) -> np.ndarray:
        return self.fields[1]


@dataclass
class Patch:
    """
    Temporal window of one signal (or a batch of same-sized windows).

    Attributes:
        grid: grid of the parent signal
        fields: [..., state, n_ctx, *space]
        offset: index of the window's first slice in the parent signal
        initial: the parent signal's t=0 slice [..., state, *space], or None
            when the patch was built without its parent
    """

    grid: GridSpec
    fields: np.ndarray
    offset: Union[int, np.ndarray] = 0
    initial: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n_ctx < MIN_CONTEXT:
            raise PatchError(f"Patch needs at least {MIN_CONTEXT} time slices, got {self.n_ctx}")
        if self.initial is not None and np.shape(self.initial) != np.shape(self.first_slice):
            raise ShapeError(
                f"Initial slice shaped {np.shape(self.initial)} does not fit patch slices {np.shape(self.first_slice)}"
            )

    @property
    def n_ctx(self) -> int:
        return self.fields.shape[-(self.grid.dims + 1)]

    @property
    def first_slice(self) -> np.ndarray:
        return np.take(self.fields, 0, axis=-(self.grid.dims + 1))

    @property
    def last_slice(self) -> np.ndarray:
        return np.take(self.fields, self.n_ctx - 1, axis=-(self.grid.dims + 1))

    @property
    def initial_condition(self) -> np.ndarray:
        """u(t=0) of the parent signal; the first slice when the parent is unknown."""
        return self.first_slice if self.initial is None else self.initial


def context_length(rho: float, n_t: int) -> int:
    """Number of context slices n_ctx = floor(rho * n_t)."""
    n_ctx = int(math.floor(rho * n_t + 1e-9))
    if n_ctx < MIN_CONTEXT:
        raise PatchError(f"Context ratio {rho} on {n_t} steps gives {n_ctx} slices (< {MIN_CONTEXT})")
    return n_ctx


def extract_patch(signal: Signal, n_ctx: int, offset: int = 0) -> Patch:
    if offset < 0 or offset + n_ctx > signal.n_slices:
        raise PatchError(f"Window [{offset}, {offset + n_ctx}) outside signal of {signal.n_slices} slices")
    return Patch(signal.grid, signal.fields[:, offset : offset + n_ctx], offset, signal.fields[:, 0])


def stack_patches(patches) -> Patch:
    """Stacks equally-sized patches into one batched patch."""
    patches = list(patches)
    fields = np.stack([p.fields for p in patches])
    offsets = np.array([p.offset for p in patches])
    initial = np.stack([p.initial_condition for p in patches])
    return Patch(patches[0].grid, fields, offsets, initial)


@dataclass(frozen=True)
class CoefficientSpec:
    """One entry of a family's coefficient layout."""

    name: str
    kind: str = "scalar"  # scalar | function
    inputs: Tuple[str, ...] = ()


@dataclass
class CoefficientEstimate:
    """
    Coefficient vector for one family.

    Scalars may be floats (one signal) or tensors broadcastable against the
    derivative stack (a batch during training). Heads are pointwise maps of
    state values: head(u) or head(u, v), returning values shaped like u.
    """

    family_id: str
    scalars: Dict[str, Value] = field(default_factory=dict)
    heads: Dict[str, Head] = field(default_factory=dict)
    symbols: Dict[str, str] = field(default_factory=dict)

    def scalar(self, name: str) -> Value:
        return self.scalars[name]

    def head(self, name: str) -> Head:
        return self.heads[name]

    def scalar_values(self) -> Dict[str, float]:
        out = dict()
        for k, v in self.scalars.items():
            out[k] = v.item() if isinstance(v, Tensor) else float(np.asarray(v).reshape(-1)[0])
        return out


def symbolic_head(symbol: str) -> Optional[Head]:
    """Closed-form coefficient functions recorded symbolically in dataset sidecars."""
    return SYMBOLIC_HEADS.get(symbol)


SYMBOLIC_HEADS: Dict[str, Head] = {
    "-u": lambda u: -u,
    "u-v": lambda u, v: u - v,
}
