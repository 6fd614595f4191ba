"""
CONFIDE command line: generate datasets, train models, infer coefficients
and predictions for single signals, evaluate and run ablations.

Run from the repository root:

$ python3 -m scripts.confide_cli generate --family constant --n 100 --seed 7 --out data/constant
$ python3 -m scripts.confide_cli train --dataset data/constant --out runs/constant
$ python3 -m scripts.confide_cli eval --model runs/constant --dataset data/constant --out report

Exit codes: 0 ok, 2 usage or configuration error, 3 numerical failure.
Every command writes a provenance.json with its arguments, seed and input hashes.
"""
from adapters.dataset_adapter import DatasetAdapter
from adapters.families.registry import get_family
from adapters.families.signal import GridSpec, Patch, Signal, extract_patch
from contextlib import contextmanager
from dataclasses import replace
from datagen.generate import default_gp, generate_dataset
from datagen.gp import GpSpec
from enum import Enum
from evalbench.ablation import run_ablation
from evalbench.evaluate import check_compatible, evaluate_model
from evalbench.report import emit_report, file_sha256, json_sha256
from interfaces.errors import (
    CholeskyError,
    ConfigError,
    DatasetError,
    FamilyError,
    GenerationError,
    PatchError,
    ResidualError,
    ShapeError,
    TrainingError,
    UnstableRolloutError,
)
from interfaces.handlers import setup_logging
from interfaces.profiles import apply_flags, load_profile
import json
import logging
from models.confide import ConfideModel, estimate, infer, rollout_steps
from models.confide0 import infer_confide0
from models.manifest import CHECKPOINT_FILE, load_model
from models.training import TrainConfig, train
import numpy as np
from pathlib import Path
from typing import Any, Dict, List, Optional
import typer

app = typer.Typer(add_completion=False, help=__doc__.strip().split("\n\n")[0])

EXIT_USAGE = 2
EXIT_NUMERICAL = 3
USAGE_ERRORS = (ConfigError, FamilyError, ShapeError, DatasetError, PatchError)
NUMERICAL_ERRORS = (GenerationError, CholeskyError, TrainingError, ResidualError, UnstableRolloutError)
PROBE_POINTS = 64  # visited states at which learned coefficient functions are reported


class Family(str, Enum):
    constant = "constant"
    burgers = "burgers"
    fn2d = "fn2d"


class Profile(str, Enum):
    desk = "desk"
    paper = "paper"


class Variant(str, Enum):
    confide = "confide"
    ae_ic = "ae-ic"
    no_ae = "no-ae"


class ModelKind(str, Enum):
    confide = "confide"
    confide0 = "confide0"


class HeadMode(str, Enum):
    state = "state"
    grid = "grid"


class Boundary(str, Enum):
    periodic = "periodic"
    neumann = "neumann"


class Axis(str, Enum):
    train_size = "train_size"
    context = "context"
    autoencoder = "autoencoder"


class Split(str, Enum):
    train = "train"
    val = "val"
    test = "test"


@contextmanager
def exit_codes():
    """Maps repository errors onto the CLI exit codes."""
    try:
        yield
    except USAGE_ERRORS as e:
        logging.error(f"{type(e).__name__}: {e}")
        raise typer.Exit(EXIT_USAGE)
    except NUMERICAL_ERRORS as e:
        logging.error(f"{type(e).__name__}: {e}")
        raise typer.Exit(EXIT_NUMERICAL)


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    return value


def provenance_record(
    command: str, args: Dict[str, Any], seed: Optional[int], inputs: Dict[str, str]
) -> Dict[str, Any]:
    """
    Arguments, seed and input hashes that reproduce one command. The output
    directory is left out so identical runs into different directories
    record identical provenance.
    """
    inputs = dict(inputs)
    if args.get("config") is not None:
        inputs["config"] = file_sha256(args["config"])
    return {
        "command": command,
        "args": {k: _plain(v) for k, v in sorted(args.items()) if k != "out"},
        "seed": seed,
        "inputs": inputs,
    }


def write_provenance(out_dir: Path, record: Dict[str, Any]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "provenance.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _seed(flag: Optional[int], settings: Dict[str, Any]) -> int:
    return int(flag if flag is not None else settings.get("seed", 0))


def _model_hash(model_path: Path) -> str:
    return file_sha256(model_path / CHECKPOINT_FILE if model_path.is_dir() else model_path)


@app.callback()
def main(
    log_file: Optional[Path] = typer.Option(None, help="Append log records as JSON Lines to this file"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log at DEBUG level"),
) -> None:
    setup_logging(log_file, level=logging.DEBUG if verbose else logging.INFO)


@app.command()
def generate(
    family: Family = typer.Option(..., help="PDE family"),
    n: Optional[int] = typer.Option(None, "--n", help="Number of signals (default: profile)"),
    seed: Optional[int] = typer.Option(None, envvar="CONFIDE_SEED", help="Global seed (env CONFIDE_SEED)"),
    out: Path = typer.Option(..., help="Dataset directory"),
    profile: Profile = typer.Option(Profile.desk, help="Built-in profile"),
    config: Optional[Path] = typer.Option(None, exists=True, dir_okay=False, help="YAML/JSON config file"),
    dx: Optional[float] = typer.Option(None, help="Grid spacing (all spatial axes)"),
    n_x: Optional[int] = typer.Option(None, help="Intervals per spatial axis"),
    dt: Optional[float] = typer.Option(None, help="Time step"),
    n_t: Optional[int] = typer.Option(None, help="Number of time steps"),
    length_scale: Optional[float] = typer.Option(None, help="GP length scale of the initial conditions"),
    boundary: Optional[Boundary] = typer.Option(None, help="FN2D Laplacian boundary rule"),
    jobs: int = typer.Option(1, "--jobs", help="Parallel workers"),
) -> None:
    """
    Generates a dataset of simulated signals with ground-truth coefficient sidecar.
    """
    args = dict(locals())
    with exit_codes():
        settings = load_profile(profile.value, family.value, config)["generate"]
        settings = apply_flags(settings, n_signals=n, boundary=_plain(boundary))
        family_config = {"boundary": settings["boundary"]} if family == Family.fn2d and "boundary" in settings else {}
        pde = get_family(family.value, family_config)
        grid_settings = apply_flags(pde.default_grid().to_dict(), **settings.get("grid", {}))
        if dx is not None:
            grid_settings["dx"] = [dx] * pde.spatial_dims
        if n_x is not None:
            grid_settings["n_x"] = [n_x] * pde.spatial_dims
        grid_settings = apply_flags(grid_settings, dt=dt, n_t=n_t)
        grid = GridSpec.from_dict(grid_settings)
        gp = default_gp(pde)
        if "gp" in settings:
            gp = GpSpec.from_dict({**gp.to_dict(), **settings["gp"]})
        if length_scale is not None:
            gp = replace(gp, length_scale=length_scale)
        if "n_signals" not in settings:
            raise ConfigError("Give --n or set generate.n_signals in the config")
        global_seed = _seed(seed, settings)
        generate_dataset(pde, int(settings["n_signals"]), global_seed, out, grid=grid, gp=gp, n_jobs=jobs)
        write_provenance(out, provenance_record("generate", args, global_seed, inputs={}))
    typer.echo(str(out / "manifest.json"))


@app.command("train")
def train_command(
    dataset: Path = typer.Option(..., exists=True, file_okay=False, help="Dataset directory"),
    out: Path = typer.Option(..., help="Output directory for checkpoint, manifest and loss trace"),
    alpha: Optional[float] = typer.Option(None, help="Autoencoder loss weight in [0, 1] (default 0.5)"),
    rho: Optional[float] = typer.Option(None, help="Context ratio in (0, 1) (default 0.2)"),
    variant: Optional[Variant] = typer.Option(None, help="Autoencoder variant"),
    model_kind: Optional[ModelKind] = typer.Option(None, help="CONFIDE (default) or the zero-knowledge CONFIDE-0"),
    profile: Profile = typer.Option(Profile.desk, help="Built-in profile"),
    config: Optional[Path] = typer.Option(None, exists=True, dir_okay=False, help="YAML/JSON config file"),
    seed: Optional[int] = typer.Option(None, envvar="CONFIDE_SEED", help="Seed (env CONFIDE_SEED)"),
    epochs: Optional[int] = typer.Option(None, help="Epoch cap"),
    patience: Optional[int] = typer.Option(None, help="Early-stopping patience"),
    batch_size: Optional[int] = typer.Option(None, help="Mini-batch size"),
    lr: Optional[float] = typer.Option(None, help="Adam learning rate"),
    max_signals: Optional[int] = typer.Option(None, help="Train on the first N training signals only"),
) -> None:
    """
    Trains a model on the dataset's train split and keeps the best-validation checkpoint.
    """
    args = dict(locals())
    with exit_codes():
        ds = DatasetAdapter(dataset)
        settings = load_profile(profile.value, ds.family.family_id, config)["train"]
        settings = apply_flags(
            settings,
            alpha=alpha,
            rho=rho,
            variant=_plain(variant),
            model_kind=_plain(model_kind),
            seed=seed,
            epochs=epochs,
            patience=patience,
            batch_size=batch_size,
            lr=lr,
            max_signals=max_signals,
        )
        if settings.get("variant") == "no-ae" and alpha is not None and alpha != 0.0:
            raise ConfigError(f"The no-ae variant trains without an autoencoder; --alpha {alpha} conflicts with it")
        train_config = TrainConfig.from_dict(settings)
        result = train(ds, train_config, out_dir=out)
        write_provenance(out, provenance_record("train", args, train_config.seed, {"dataset": ds.provenance_hash}))
    typer.echo(str(out / CHECKPOINT_FILE))
    logging.info(f"Best epoch {result.best_epoch} of {len(result.trace)}")


def _load_signal(model, signal_file: Optional[Path], dataset: Optional[Path], index: Optional[int]):
    if signal_file is not None:
        try:
            fields = np.asarray(np.load(signal_file), dtype=np.float64)
        except (OSError, ValueError) as e:
            raise ConfigError(f"Cannot read signal file {signal_file}: {e}")
        expected = (model.family.state_arity,) + model.grid.spatial_shape
        if fields.ndim != len(expected) + 1 or (fields.shape[0],) + fields.shape[2:] != expected:
            raise ShapeError(f"Signal file holds {fields.shape}; the model expects [{expected[0]}, T, *{expected[1:]}]")
        return Signal(model.grid, fields), {"signal_file": file_sha256(signal_file)}
    if dataset is None or index is None:
        raise ConfigError("Give either --signal-file or both --dataset and --index")
    ds = DatasetAdapter(dataset)
    check_compatible(model, ds)
    if not 0 <= index < len(ds):
        raise ConfigError(f"--index {index} outside dataset of {len(ds)} signals")
    return ds.signal(index), {"dataset": ds.provenance_hash}


def estimate_to_dict(model: ConfideModel, patch: Patch, est) -> Dict[str, Any]:
    """One entry per family coefficient: scalar value, or head values on visited states."""
    family = model.family
    coefficients: Dict[str, Any] = {name: est.scalars[name] for name in family.scalar_names}
    last = np.asarray(patch.last_slice, dtype=np.float64)
    flat = last.reshape(family.state_arity, -1)
    picks = np.linspace(0, flat.shape[1] - 1, min(PROBE_POINTS, flat.shape[1])).round().astype(int)
    for spec in family.head_specs:
        args = [flat[family.state_names.index(s), picks] for s in spec.inputs]
        values = est.head(spec.name)(*args)
        coefficients[spec.name] = {
            "kind": "function",
            "inputs": list(spec.inputs),
            "states": {s: a.tolist() for s, a in zip(spec.inputs, args)},
            "values": np.asarray(values).tolist(),
        }
    return {"family_id": family.family_id, "n_ctx": model.n_ctx, "coefficients": coefficients}


@app.command("infer")
def infer_command(
    model: Path = typer.Option(..., exists=True, help="Model directory or checkpoint"),
    out: Path = typer.Option(..., help="Output directory"),
    signal_file: Optional[Path] = typer.Option(
        None, exists=True, dir_okay=False, help=".npy signal [state, time, *space]"
    ),
    dataset: Optional[Path] = typer.Option(None, exists=True, file_okay=False, help="Dataset directory"),
    index: Optional[int] = typer.Option(None, help="Signal index in --dataset"),
    n_steps: Optional[int] = typer.Option(None, min=1, help="Rollout steps (default: to the end of the horizon)"),
    head_mode: HeadMode = typer.Option(
        HeadMode.state, help="Coefficient functions follow the rollout state or stay frozen on the grid"
    ),
) -> None:
    """
    Estimates coefficients from a signal's context prefix and predicts the rest.

    Writes estimate.json and prediction.npy; an unstable rollout is kept as
    prediction.npy.partial and exits with code 3.
    """
    args = dict(locals())
    with exit_codes():
        loaded, _ = load_model(model)
        signal, inputs = _load_signal(loaded, signal_file, dataset, index)
        inputs["model"] = _model_hash(model)
        out.mkdir(parents=True, exist_ok=True)
        write_provenance(out, provenance_record("infer", args, None, inputs))
        patch = extract_patch(signal, loaded.n_ctx, 0)
        if loaded.kind == "confide0":
            prediction = _rollout_or_partial(out, lambda: infer_confide0(loaded, patch, n_steps))
        else:
            est = estimate(loaded, patch)
            estimate_text = json.dumps(estimate_to_dict(loaded, patch, est), indent=2, sort_keys=True)
            (out / "estimate.json").write_text(estimate_text + "\n")
            steps = rollout_steps(loaded, patch) if n_steps is None else n_steps
            prediction = _rollout_or_partial(out, lambda: infer(loaded, patch, steps, head_mode.value).prediction)
        _save_npy(out / "prediction.npy", prediction)
    typer.echo(str(out / "prediction.npy"))


def _save_npy(path: Path, signal: Signal) -> None:
    with open(path, "wb") as f:
        np.save(f, np.asarray(signal.fields, dtype=np.float64))


def _rollout_or_partial(out: Path, rollout) -> Signal:
    try:
        return rollout()
    except UnstableRolloutError as e:
        if e.partial is not None:
            _save_npy(out / "prediction.npy.partial", e.partial)
            logging.error(f"Partial rollout up to step {e.step} saved to {out / 'prediction.npy.partial'}")
        raise


@app.command("eval")
def eval_command(
    model: Path = typer.Option(..., exists=True, help="CONFIDE model directory or checkpoint"),
    dataset: Path = typer.Option(..., exists=True, file_okay=False, help="Dataset directory"),
    out: Path = typer.Option(..., help="Report directory"),
    split: Split = typer.Option(Split.test, help="Split to evaluate"),
    confide0: Optional[Path] = typer.Option(None, exists=True, help="Optional CONFIDE-0 model for comparison"),
    max_signals: Optional[int] = typer.Option(None, help="Evaluate the first N signals only"),
) -> None:
    """
    Evaluates a trained model and writes a report directory.
    """
    args = dict(locals())
    with exit_codes():
        loaded, manifest = load_model(model)
        if loaded.kind != "confide":
            raise ConfigError("--model must be a CONFIDE model; pass CONFIDE-0 models with --confide0")
        ds = DatasetAdapter(dataset)
        baseline = load_model(confide0)[0] if confide0 is not None else None
        if baseline is not None and baseline.kind != "confide0":
            raise ConfigError("--confide0 must point to a CONFIDE-0 model")
        result = evaluate_model(loaded, ds, split.value, confide0=baseline, max_signals=max_signals)
        inputs = {"dataset": ds.provenance_hash, "model": _model_hash(model)}
        if confide0 is not None:
            inputs["confide0"] = _model_hash(confide0)
        config_hash = manifest.config_hash if manifest is not None else json_sha256(loaded.spec())
        provenance = provenance_record("eval", args, None, inputs)
        emit_report(out, config_hash, ds.provenance_hash, provenance, evaluation=result)
    typer.echo(str(out / "metrics.json"))


def _parse_values(values: Optional[str]) -> List[str]:
    return [v.strip() for v in values.split(",") if v.strip()] if values else []


@app.command("ablate")
def ablate_command(
    dataset: Path = typer.Option(..., exists=True, file_okay=False, help="Dataset directory"),
    axis: Axis = typer.Option(..., help="Ablated setting"),
    out: Path = typer.Option(..., help="Report directory"),
    values: Optional[str] = typer.Option(None, help="Comma-separated sizes or context ratios"),
    profile: Profile = typer.Option(Profile.desk, help="Built-in profile"),
    config: Optional[Path] = typer.Option(None, exists=True, dir_okay=False, help="YAML/JSON config file"),
    seed: Optional[int] = typer.Option(None, envvar="CONFIDE_SEED", help="Seed shared by every cell"),
    epochs: Optional[int] = typer.Option(None, help="Epoch cap per cell"),
    max_eval: Optional[int] = typer.Option(None, help="Evaluate the first N test signals only"),
    jobs: int = typer.Option(1, "--jobs", help="Cells trained in parallel"),
) -> None:
    """
    Runs one ablation (train size, context ratio or autoencoder variant) and writes its table.
    """
    args = dict(locals())
    with exit_codes():
        parsed = _parse_values(values)
        if axis != Axis.autoencoder and not parsed:
            raise ConfigError(f"--axis {axis.value} needs --values")
        try:
            parsed = [int(v) for v in parsed] if axis == Axis.train_size else [float(v) for v in parsed]
        except ValueError:
            raise ConfigError(f"Cannot parse --values {values!r} for axis {axis.value}")
        ds = DatasetAdapter(dataset)
        settings = load_profile(profile.value, ds.family.family_id, config)["train"]
        train_config = TrainConfig.from_dict(apply_flags(settings, seed=seed, epochs=epochs))
        table = run_ablation(axis.value, dataset, train_config, parsed, n_jobs=jobs, max_eval=max_eval)
        provenance = provenance_record("ablate", args, train_config.seed, {"dataset": ds.provenance_hash})
        emit_report(out, train_config.config_hash(), ds.provenance_hash, provenance, ablations={axis.value: table})
    typer.echo(str(out / f"ablation_{axis.value}.csv"))


if __name__ == "__main__":
    app()
