"""
Test-set evaluation of a trained model: coefficient errors, R^2 scatter,
final-horizon and per-horizon prediction errors for CONFIDE, the optional
CONFIDE-0 model and the persistence baseline, plus coefficient-function
fields on a few time slices.
"""
from adapters.dataset_adapter import DatasetAdapter
from adapters.families.signal import extract_patch
from dataclasses import dataclass, field
from evalbench.metrics import (
    aggregate,
    aggregate_curves,
    coefficient_error,
    persistence_prediction,
    r2_scatter,
    rollout_mse,
    truth_window,
)
from interfaces.errors import FamilyError, ShapeError, UnstableRolloutError
import logging
from models.confide import ConfideModel, estimate, infer, rollout_steps
from models.confide0 import Confide0Model, infer_confide0
import numpy as np
import pandas as pd
from tqdm import tqdm
from typing import Any, Dict, List, Optional

FIELD_SIGNALS = 1  # test signals whose coefficient-function fields are exported
FIELD_TIMES = 3  # time slices per exported field


@dataclass
class EvaluationResult:
    """
    Attributes:
        family_id: evaluated family
        metrics: headline numbers (mean/std aggregates, R^2 per scalar)
        per_signal: one row per test signal
        horizon_curve: per-horizon mean/std of each predictor
        scatter: (coefficient, truth, estimate) rows
        coefficient_field: estimated vs true coefficient functions on grid points
    """

    family_id: str
    metrics: Dict[str, Any]
    per_signal: pd.DataFrame
    horizon_curve: pd.DataFrame
    scatter: pd.DataFrame
    coefficient_field: pd.DataFrame = field(default_factory=pd.DataFrame)


def check_compatible(model, dataset: DatasetAdapter) -> None:
    """
    Raises:
        FamilyError: model and dataset belong to different families
        ShapeError: model was trained on another grid
    """
    if model.family.family_id != dataset.family.family_id:
        raise FamilyError(
            f"Model was trained on family {model.family.family_id!r} but the dataset is "
            f"{dataset.family.family_id!r}"
        )
    if model.grid.spatial_shape != dataset.grid.spatial_shape or model.grid.n_t != dataset.grid.n_t:
        raise ShapeError(f"Model grid {model.grid} does not match dataset grid {dataset.grid}")


def _final_errors(signal_curves: List[Dict[str, Optional[np.ndarray]]], name: str) -> List[float]:
    """Final-step errors of one predictor over the signals it rolled out stably."""
    return [float(c[name][-1]) for c in signal_curves if c.get(name) is not None]


def coefficient_field_rows(model: ConfideModel, family, signal, index: int, est, truth) -> List[Dict[str, Any]]:
    """Estimated and true coefficient functions on every grid point of a few slices."""
    rows = list()
    times = sorted(set(np.linspace(0, signal.n_slices - 1, FIELD_TIMES).round().astype(int).tolist()))
    fields = np.asarray(signal.fields, dtype=np.float64)
    coords = [model.grid.coordinates(axis) for axis in range(model.grid.dims)]
    mesh = np.meshgrid(*coords, indexing="ij")
    for spec in family.head_specs:
        estimated = family.evaluate_head_on_grid(est, spec.name, fields, times)
        expected = family.evaluate_head_on_grid(truth, spec.name, fields, times)
        for k, t in enumerate(times):
            row_base = {"signal": index, "coefficient": spec.name, "time": float(t * model.grid.dt)}
            for flat, (e, g) in enumerate(zip(estimated[k].reshape(-1), expected[k].reshape(-1))):
                row = dict(row_base)
                for axis, name in zip(range(model.grid.dims), ("x", "y")):
                    row[name] = float(mesh[axis].reshape(-1)[flat])
                row.update({"estimate": float(e), "truth": float(g)})
                rows.append(row)
    return rows


def evaluate_model(
    model: ConfideModel,
    dataset: DatasetAdapter,
    split: str = "test",
    confide0: Optional[Confide0Model] = None,
    max_signals: Optional[int] = None,
    progress: bool = True,
) -> EvaluationResult:
    """
    Evaluates `model` on prefix contexts of a dataset split.

    Args:
        model: trained CONFIDE model
        dataset: dataset whose sidecar holds the ground truth
        split: split to evaluate
        confide0: optional trained CONFIDE-0 model for the comparison curves
        max_signals: evaluate only the first N signals of the split
        progress: show a tqdm bar

    Returns:
        result: metrics, per-signal table and plot data
    """
    check_compatible(model, dataset)
    if confide0 is not None:
        check_compatible(confide0, dataset)
    family = dataset.family
    sidecar = dataset.open_sidecar()
    stream = dataset.iterate_split(split)
    if max_signals is not None:
        stream = stream.subset(max_signals)

    per_signal, scatter, field_rows = list(), list(), list()
    predictors = ["confide", "persistence"] + (["confide0"] if confide0 is not None else [])
    # one dict per signal: predictor -> per-horizon curve, None for an unstable rollout
    signal_curves: List[Dict[str, Optional[np.ndarray]]] = list()
    unstable = {"confide": 0, "confide0": 0}
    for position, signal in enumerate(tqdm(stream, disable=not progress, desc=f"evaluate {split}")):
        index = stream.indices[position]
        patch = extract_patch(signal, model.n_ctx, 0)
        n_steps = rollout_steps(model, patch)
        truth_future = truth_window(signal, model.n_ctx - 1, n_steps)
        truth = sidecar.true_estimate(index)
        row: Dict[str, Any] = {"signal": index}

        est = estimate(model, patch)
        err = coefficient_error(family, est, truth, visited=np.asarray(patch.fields, dtype=np.float64))
        row["coefficient_mse"] = err.total
        for name in family.scalar_names:
            row[f"{name}_true"] = truth.scalars[name]
            row[f"{name}_est"] = est.scalars[name]
            scatter.append(
                {"coefficient": name, "signal": index, "truth": truth.scalars[name], "estimate": est.scalars[name]}
            )
        for name, value in err.heads.items():
            row[f"{name}_head_mse"] = value

        curves: Dict[str, Optional[np.ndarray]] = {"confide": None, "confide0": None}
        try:
            prediction = infer(model, patch, n_steps).prediction
            curves["confide"] = rollout_mse(prediction, truth_future, per_horizon=True)
            row["prediction_mse"] = float(curves["confide"][-1])
        except UnstableRolloutError as e:
            unstable["confide"] += 1
            row["prediction_mse"] = float("nan")
            logging.warning(f"Signal {index}: CONFIDE rollout unstable at step {e.step}")

        curves["persistence"] = rollout_mse(persistence_prediction(patch, n_steps), truth_future, per_horizon=True)
        row["persistence_mse"] = float(curves["persistence"][-1])

        if confide0 is not None:
            try:
                prediction0 = infer_confide0(confide0, patch, n_steps)
                curves["confide0"] = rollout_mse(prediction0, truth_future, per_horizon=True)
                row["confide0_mse"] = float(curves["confide0"][-1])
            except UnstableRolloutError as e:
                unstable["confide0"] += 1
                row["confide0_mse"] = float("nan")
                logging.warning(f"Signal {index}: CONFIDE-0 rollout unstable at step {e.step}")

        if position < FIELD_SIGNALS and family.head_specs:
            field_rows += coefficient_field_rows(model, family, signal, index, est, truth)
        row["compared"] = all(curves[name] is not None for name in predictors)
        signal_curves.append(curves)
        per_signal.append(row)

    per_signal_df = pd.DataFrame(per_signal).sort_values("signal").reset_index(drop=True)
    compared = [c for c in signal_curves if all(c[name] is not None for name in predictors)]
    metrics: Dict[str, Any] = {
        "family_id": family.family_id,
        "split": split,
        "n_signals": len(per_signal),
        "n_ctx": model.n_ctx,
        "variant": model.variant,
        "coefficient_mse": aggregate(per_signal_df["coefficient_mse"]),
        "prediction_mse": aggregate(_final_errors(signal_curves, "confide")),
        "persistence_mse": aggregate(_final_errors(signal_curves, "persistence")),
        "unstable_rollouts": unstable["confide"],
        "comparison": {"n_signals": len(compared)},
        "r2": {},
        "coefficient_mse_by_name": {},
    }
    for name in predictors:
        metrics["comparison"][name] = aggregate(_final_errors(compared, name))
    for name in family.scalar_names:
        pairs = per_signal_df[[f"{name}_true", f"{name}_est"]]
        metrics["coefficient_mse_by_name"][name] = aggregate((pairs[f"{name}_est"] - pairs[f"{name}_true"]) ** 2)
        if len(pairs) >= 2:
            r2 = r2_scatter(pairs[f"{name}_est"], pairs[f"{name}_true"])
            metrics["r2"][name] = r2.r2
    for spec in family.head_specs:
        metrics["coefficient_mse_by_name"][spec.name] = aggregate(per_signal_df[f"{spec.name}_head_mse"])
    if confide0 is not None:
        metrics["confide0_mse"] = aggregate(_final_errors(signal_curves, "confide0"))
        metrics["confide0_unstable_rollouts"] = unstable["confide0"]

    # horizon 0 is the handed-over context slice; rows start at the first predicted slice
    n_future = len(signal_curves[0]["persistence"]) - 1 if signal_curves else 0
    horizon = {"horizon": np.arange(1, n_future + 1), "time": model.grid.dt * np.arange(1, n_future + 1)}
    for name in predictors:
        agg = aggregate_curves([c[name] for c in compared]) if compared else None
        horizon[f"{name}_mean"] = agg["mean"][1:] if agg else np.full(n_future, np.nan)
        horizon[f"{name}_std"] = agg["std"][1:] if agg else np.full(n_future, np.nan)
    if signal_curves:
        agg = aggregate_curves([c["persistence"] for c in signal_curves])
        horizon["persistence_all_mean"] = agg["mean"][1:]
        horizon["persistence_all_std"] = agg["std"][1:]

    scatter_df = pd.DataFrame(scatter, columns=["coefficient", "signal", "truth", "estimate"])
    scatter_df = scatter_df.sort_values(["coefficient", "signal"]).reset_index(drop=True)
    logging.info(
        f"Evaluated {len(per_signal)} {family.family_id} signals: coefficient MSE "
        f"{metrics['coefficient_mse']['mean']}; on the {len(compared)} signals every predictor rolled out stably, "
        f"prediction MSE {metrics['comparison']['confide']['mean']} vs persistence "
        f"{metrics['comparison']['persistence']['mean']} ({unstable['confide']} unstable CONFIDE rollouts)"
    )
    return EvaluationResult(
        family_id=family.family_id,
        metrics=metrics,
        per_signal=per_signal_df,
        horizon_curve=pd.DataFrame(horizon),
        scatter=scatter_df,
        coefficient_field=pd.DataFrame(field_rows),
    )
