"""
Ablation drivers: training-set size, context ratio and autoencoder variant.

Every cell trains one model and evaluates it on the test split. Cells share
the training seed so differences come from the ablated setting alone, run
as independent joblib jobs, and are assembled in request order.
"""
from adapters.dataset_adapter import DatasetAdapter
from dataclasses import replace
from evalbench.evaluate import evaluate_model
from interfaces.errors import ConfigError
from joblib import Parallel, delayed
import logging
from models.training import TrainConfig, train
import pandas as pd
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

AXES = ("train_size", "context", "autoencoder")
AE_VARIANTS = ("confide", "ae-ic", "no-ae")


def run_cell(
    dataset_path: Union[str, Path],
    config: TrainConfig,
    axis: str,
    value: Any,
    max_eval: Optional[int] = None,
) -> Dict[str, Any]:
    """Trains and evaluates one ablation cell; returns its table row."""
    dataset = DatasetAdapter(dataset_path)
    logging.info(f"Ablation cell {axis}={value}")
    result = train(dataset, config, progress=False)
    evaluation = evaluate_model(result.model, dataset, "test", max_signals=max_eval, progress=False)
    m = evaluation.metrics
    return {
        axis: value,
        "n_train": config.max_signals if config.max_signals is not None else len(dataset.manifest.splits["train"]),
        "rho": config.rho,
        "variant": config.variant,
        "n_ctx": m["n_ctx"],
        "best_epoch": result.best_epoch,
        "prediction_mse": m["prediction_mse"]["mean"],
        "prediction_mse_std": m["prediction_mse"]["std"],
        "coefficient_mse": m["coefficient_mse"]["mean"],
        "coefficient_mse_std": m["coefficient_mse"]["std"],
        "persistence_mse": m["persistence_mse"]["mean"],
        "unstable_rollouts": m["unstable_rollouts"],
        "n_compared": m["comparison"]["n_signals"],
        "prediction_mse_compared": m["comparison"]["confide"]["mean"],
        "persistence_mse_compared": m["comparison"]["persistence"]["mean"],
    }


def _run(cells, dataset_path, n_jobs: int, max_eval: Optional[int]) -> pd.DataFrame:
    parallel_pool = Parallel(n_jobs=n_jobs)
    rows = parallel_pool(delayed(run_cell)(dataset_path, cfg, axis, value, max_eval) for axis, value, cfg in cells)
    return pd.DataFrame(rows)


def ablate_train_size(
    dataset_path: Union[str, Path],
    sizes: Sequence[int],
    config: TrainConfig,
    n_jobs: int = 1,
    max_eval: Optional[int] = None,
) -> pd.DataFrame:
    """One row per training-set size (prefix of the stored train split)."""
    available = len(DatasetAdapter(dataset_path).manifest.splits["train"])
    for size in sizes:
        if size > available:
            logging.warning(f"Requested {size} training signals but the train split has {available}")
    cells = [("train_size", int(size), replace(config, max_signals=int(size))) for size in sizes]
    return _run(cells, dataset_path, n_jobs, max_eval)


def ablate_context_ratio(
    dataset_path: Union[str, Path],
    rhos: Sequence[float],
    config: TrainConfig,
    n_jobs: int = 1,
    max_eval: Optional[int] = None,
) -> pd.DataFrame:
    """One row per context ratio."""
    cells = [("context", float(rho), replace(config, rho=float(rho))) for rho in rhos]
    return _run(cells, dataset_path, n_jobs, max_eval)


def ablate_autoencoder(
    dataset_path: Union[str, Path],
    config: TrainConfig,
    n_jobs: int = 1,
    max_eval: Optional[int] = None,
) -> pd.DataFrame:
    """
    CONFIDE, AE-IC and No-AE with the percentage difference of each metric
    relative to CONFIDE (positive means worse than CONFIDE).
    """
    cells = list()
    for variant in AE_VARIANTS:
        alpha = 0.0 if variant == "no-ae" else config.alpha
        cells.append(("autoencoder", variant, replace(config, variant=variant, alpha=alpha)))
    df = _run(cells, dataset_path, n_jobs, max_eval)
    for metric in ("prediction_mse", "coefficient_mse"):
        # cells whose rollouts all blew up report None
        values = df[metric].astype(float)
        df[f"{metric}_pct_vs_confide"] = 100.0 * (values - values.iloc[0]) / values.iloc[0]
    return df


def run_ablation(
    axis: str,
    dataset_path: Union[str, Path],
    config: TrainConfig,
    values: Optional[Sequence[Any]] = None,
    n_jobs: int = 1,
    max_eval: Optional[int] = None,
) -> pd.DataFrame:
    """Dispatches to the driver of `axis`."""
    if axis == "train_size":
        return ablate_train_size(dataset_path, [int(v) for v in values], config, n_jobs, max_eval)
    if axis == "context":
        return ablate_context_ratio(dataset_path, [float(v) for v in values], config, n_jobs, max_eval)
    if axis == "autoencoder":
        return ablate_autoencoder(dataset_path, config, n_jobs, max_eval)
    raise ConfigError(f"Unknown ablation axis {axis!r}; expected one of {AXES}")
