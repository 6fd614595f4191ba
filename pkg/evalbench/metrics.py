"""
Evaluation metrics: rollout error (final step and per horizon), coefficient
error, R^2 of scalar estimates, the persistence baseline and test-set
aggregation.

Aggregates use `math.fsum`, so they do not depend on the order of the test
signals.
"""
from adapters.families.base import PdeFamily
from adapters.families.signal import CoefficientEstimate, Patch, Signal
from dataclasses import dataclass, field
from interfaces.errors import FamilyError, ShapeError
import math
import numpy as np
from typing import Dict, List, Optional, Sequence, Tuple, Union


def _check_comparable(predicted: Signal, truth: Signal) -> None:
    if predicted.fields.shape != truth.fields.shape:
        raise ShapeError(f"Cannot compare signals shaped {predicted.fields.shape} and {truth.fields.shape}")
    a, b = predicted.grid, truth.grid
    if a.dx != b.dx or a.n_x != b.n_x or not math.isclose(a.dt, b.dt) or a.periodic != b.periodic:
        raise ShapeError(f"Signals live on different grids: {a} vs {b}")


def rollout_mse(predicted: Signal, truth: Signal, per_horizon: bool = False) -> Union[float, np.ndarray]:
    """
    Mean squared error between two rollouts over space and state fields.

    Args:
        predicted: predicted signal, slice 0 at t0
        truth: ground truth on the same slices
        per_horizon: return one value per slice instead of the final-step value

    Returns:
        mse at the final slice, or an array [n_slices] indexed by horizon step

    Raises:
        ShapeError: signals differ in shape or grid
    """
    _check_comparable(predicted, truth)
    diff = np.asarray(predicted.fields, dtype=np.float64) - np.asarray(truth.fields, dtype=np.float64)
    per_slice = np.moveaxis(diff * diff, 1, 0).reshape(diff.shape[1], -1).mean(axis=1)
    return per_slice if per_horizon else float(per_slice[-1])


def truth_window(signal: Signal, start: int, n_steps: int) -> Signal:
    """Slices start..start+n_steps of a stored signal, as a float64 Signal."""
    if n_steps < 1:
        raise ShapeError(f"A window needs at least one step, got n_steps={n_steps}")
    fields = np.asarray(signal.fields[:, start : start + n_steps + 1], dtype=np.float64)
    if fields.shape[1] != n_steps + 1:
        raise ShapeError(f"Signal has no slices {start}..{start + n_steps}")
    return Signal(signal.grid.with_n_t(n_steps), fields)


def persistence_prediction(patch: Patch, n_steps: int) -> Signal:
    """Baseline that freezes the context's last slice for every future step."""
    if n_steps < 1:
        raise ShapeError(f"A rollout needs at least one step, got n_steps={n_steps}")
    last = np.asarray(patch.last_slice, dtype=np.float64)
    fields = np.repeat(last[:, None], n_steps + 1, axis=1)
    return Signal(patch.grid.with_n_t(n_steps), fields)


@dataclass
class CoefficientError:
    """
    Attributes:
        total: mean over coefficients of the per-coefficient squared error
            (scalars) or head MSE (functions)
        scalars: squared error per scalar coefficient
        heads: MSE per coefficient function on the visited states
    """

    total: float
    scalars: Dict[str, float] = field(default_factory=dict)
    heads: Dict[str, float] = field(default_factory=dict)


def coefficient_error(
    family: PdeFamily,
    est: CoefficientEstimate,
    truth: CoefficientEstimate,
    visited: Optional[np.ndarray] = None,
) -> CoefficientError:
    """
    Error of an estimate against the ground truth of one signal.

    Args:
        family: PDE family of both estimates
        est: estimated coefficients
        truth: ground truth (from the dataset sidecar)
        visited: signal fields [state, T, *space] whose states the
            coefficient functions are compared on; required for families
            with coefficient functions

    Raises:
        FamilyError: family mismatch, or heads to compare but no visited states
    """
    family.check_estimate(est)
    family.check_estimate(truth)
    est_values = est.scalar_values()
    true_values = truth.scalar_values()
    scalars = {name: (est_values[name] - true_values[name]) ** 2 for name in family.scalar_names}
    heads = dict()
    for spec in family.head_specs:
        if visited is None:
            raise FamilyError(f"Comparing {spec.name!r} needs the states visited by the signal")
        times = range(visited.shape[1])
        estimated = family.evaluate_head_on_grid(est, spec.name, visited, times)
        expected = family.evaluate_head_on_grid(truth, spec.name, visited, times)
        heads[spec.name] = float(np.mean((estimated - expected) ** 2))
    components = list(scalars.values()) + list(heads.values())
    return CoefficientError(total=math.fsum(components) / len(components), scalars=scalars, heads=heads)


@dataclass
class R2Result:
    """R^2 of estimates against truths; `r2` is None when truths have zero variance."""

    r2: Optional[float]
    defined: bool
    pairs: List[Tuple[float, float]]


def r2_scatter(estimates: Sequence[float], truths: Sequence[float]) -> R2Result:
    """
    Coefficient of determination 1 - SS_res / SS_tot with the (truth, estimate) pairs.

    Raises:
        ShapeError: fewer than 2 samples or length mismatch
    """
    est = [float(e) for e in estimates]
    tru = [float(t) for t in truths]
    if len(est) != len(tru):
        raise ShapeError(f"{len(est)} estimates vs {len(tru)} truths")
    if len(est) < 2:
        raise ShapeError("R^2 needs at least 2 samples")
    pairs = list(zip(tru, est))
    mean = math.fsum(tru) / len(tru)
    ss_tot = math.fsum((t - mean) ** 2 for t in tru)
    if ss_tot == 0.0:
        return R2Result(r2=None, defined=False, pairs=pairs)
    ss_res = math.fsum((t - e) ** 2 for t, e in pairs)
    return R2Result(r2=1.0 - ss_res / ss_tot, defined=True, pairs=pairs)


def aggregate(values: Sequence[float]) -> Dict[str, Optional[float]]:
    """Mean and (population) standard deviation over test signals."""
    values = [float(v) for v in values]
    if not values:
        return {"mean": None, "std": None, "n": 0}
    mean = math.fsum(values) / len(values)
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / len(values))
    return {"mean": mean, "std": std, "n": len(values)}


def aggregate_curves(curves: Sequence[np.ndarray]) -> Dict[str, np.ndarray]:
    """Per-horizon mean and std over signals."""
    stacked = np.sort(np.stack(curves), axis=0)
    return {"mean": stacked.mean(axis=0), "std": stacked.std(axis=0)}
