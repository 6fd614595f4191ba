"""
Explicit forward-time rollout of a PDE family from one initial slice, plus
blowup detection.
"""
from adapters.families.base import PdeFamily
from adapters.families.signal import CoefficientEstimate, GridSpec, Signal
from dataclasses import dataclass
from interfaces.errors import ShapeError, UnstableRolloutError
import logging
import numpy as np
from typing import Optional, Tuple


@dataclass(frozen=True)
class StabilityReport:
    ok: bool
    index: Optional[Tuple[int, ...]] = None

    @property
    def step(self) -> Optional[int]:
        """Time slice of the first offending entry."""
        return None if self.index is None else self.index[1]


def check_stability(signal: Signal, threshold: float) -> StabilityReport:
    """
    Flags the first non-finite entry or entry with |value| > threshold.

    Args:
        signal: signal to inspect, fields [state, time, *space]
        threshold: blowup magnitude (1e3 for 1-D families, 1e2 for FN2D)

    Returns:
        report: ok, or the index (state, time, *space) of the first offending
            entry in time-major order
    """
    fields = signal.fields
    bad = ~np.isfinite(fields)
    bad |= np.abs(np.where(bad, 0.0, fields)) > threshold
    if not bad.any():
        return StabilityReport(ok=True)
    # time-major search so the reported step is the earliest one
    per_step = bad.reshape(bad.shape[0], bad.shape[1], -1).any(axis=(0, 2))
    step = int(np.argmax(per_step))
    in_step = np.argwhere(bad[:, step])[0]
    index = (int(in_step[0]), step) + tuple(int(i) for i in in_step[1:])
    return StabilityReport(ok=False, index=index)


def solve_explicit(
    family: PdeFamily,
    coeffs: CoefficientEstimate,
    init: np.ndarray,
    grid: GridSpec,
    n_steps: int,
) -> Signal:
    """
    Rolls the family forward with u[j+1] = u[j] + dt * RHS(p, u[j]), or with
    the equal explicit sub-steps of `family.step` where the family needs them.

    Args:
        family: PDE family
        coeffs: coefficient estimate or ground truth (heads evaluated on the
            current state every step)
        init: initial slice [state, *space]; returned unchanged as slice 0
        grid: grid metadata (dt, spacing)
        n_steps: number of steps (at least 1)

    Returns:
        signal: n_steps + 1 slices; `signal.grid.n_t == n_steps`

    Raises:
        UnstableRolloutError: non-finite value or |u| above the family's
            blowup threshold; carries the first offending step and the
            partial rollout up to it
    """
    family.check_grid(grid)
    family.check_estimate(coeffs)
    init = np.asarray(init, dtype=np.float64)
    expected = (family.state_arity,) + grid.spatial_shape
    if init.shape != expected:
        raise ShapeError(f"Initial slice has shape {init.shape}, expected {expected}")
    if not np.all(np.isfinite(init)):
        raise ShapeError("Initial slice contains non-finite values")

    if n_steps < 1:
        raise ShapeError(f"A rollout needs at least one step, got n_steps={n_steps}")

    slices = np.empty((n_steps + 1,) + init.shape)
    slices[0] = init
    current = init
    for j in range(1, n_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            current = family.step(coeffs, current, grid)
        slices[j] = current
        if not np.all(np.isfinite(current)) or np.max(np.abs(current)) > family.blowup_threshold:
            partial = Signal(grid.with_n_t(j), np.moveaxis(slices[: j + 1], 0, 1).copy())
            logging.debug(f"Rollout of {family.family_id} became unstable at step {j}")
            raise UnstableRolloutError(f"Rollout unstable at step {j}", step=j, partial=partial)
    return Signal(grid.with_n_t(n_steps), np.moveaxis(slices, 0, 1).copy())
