"""
Training of CONFIDE and CONFIDE-0 models.

Each epoch draws one patch from every training signal (random temporal
offset by default), runs one Adam pass over shuffled mini-batches of the
combined loss, scores the validation split on prefix patches and keeps the
best-validation parameters. With a `patience`, training stops early after
that many epochs without improvement; without one it runs every epoch.
"""
from adapters.dataset_adapter import DatasetAdapter, SplitStream
from adapters.families.signal import context_length
from autodiff.checkpoint import assign_parameters, loads_parameters
from autodiff.optim import Adam
from autodiff.tensor import grad
from dataclasses import asdict, dataclass, field, fields, replace
import hashlib
from interfaces.errors import ConfigError, ResidualError, TrainingError
import json
import jsonlines
import logging
from models.confide import LossParts, VARIANTS
from models.manifest import MODEL_KINDS, Model, ModelManifest, model_to_bytes, save_model
from models.networks import NetworkConfig
import numpy as np
from pathlib import Path
from tqdm import tqdm
from typing import Any, Dict, List, Optional, Tuple, Union

PATCH_POLICIES = ("random-offset", "prefix-only")
MAX_SKIPPED_FRACTION = 0.01
TRACE_FILE = "loss_trace.jsonl"


@dataclass
class TrainConfig:
    """
    Training hyper-parameters.

    Attributes:
        alpha: weight of the autoencoder loss (forced to 0 for the No-AE variant)
        rho: context ratio; patches hold floor(rho * n_t) slices
        epochs: epoch cap
        patience: early-stopping patience in epochs; None runs all `epochs`
        batch_size: patches per Adam step
        lr: Adam learning rate
        variant: "confide", "ae-ic" or "no-ae"
        patch_policy: "random-offset" or "prefix-only" for training patches
        model_kind: "confide" or "confide0"
        seed: initialization and shuffling seed
        max_signals: use only the first N training signals (None for all)
        network: network widths
    """

    alpha: float = 0.5
    rho: float = 0.2
    epochs: int = 500
    patience: Optional[int] = None
    batch_size: int = 64
    lr: float = 1e-3
    variant: str = "confide"
    patch_policy: str = "random-offset"
    model_kind: str = "confide"
    seed: int = 0
    max_signals: Optional[int] = None
    network: NetworkConfig = field(default_factory=NetworkConfig)

    def __post_init__(self):
        if isinstance(self.network, dict):
            self.network = NetworkConfig.from_dict(self.network)
        if self.variant not in VARIANTS:
            raise ConfigError(f"Unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "no-ae":
            self.alpha = 0.0
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (0, 1), got {self.rho}")
        if self.patch_policy not in PATCH_POLICIES:
            raise ConfigError(f"Unknown patch policy {self.patch_policy!r}; expected one of {PATCH_POLICIES}")
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"Unknown model kind {self.model_kind!r}; expected one of {sorted(MODEL_KINDS)}")
        if self.epochs < 1 or self.batch_size < 1 or (self.patience is not None and self.patience < 1):
            raise ConfigError("epochs, patience and batch_size must be positive")

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["network"] = self.network.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown training settings {sorted(unknown)}")
        return cls(**d)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")).hexdigest()


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    loss_ae: float
    loss_coef: float
    val_loss: float
    skipped_batches: int
    best: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainResult:
    model: Model
    trace: List[EpochRecord]
    best_epoch: int
    manifest: ModelManifest


def _load_fields(stream: SplitStream) -> List[np.ndarray]:
    return [signal.fields for signal in stream]


def _patch_batch(signals: List[np.ndarray], indices, offsets, n_ctx: int) -> Tuple[np.ndarray, np.ndarray]:
    """Patches [B, state, n_ctx, *space] and the t=0 slices of their signals [B, state, *space]."""
    fields = np.stack(
        [np.asarray(signals[i][:, o : o + n_ctx], dtype=np.float64) for i, o in zip(indices, offsets)]
    )
    initial = np.stack([np.asarray(signals[i][:, 0], dtype=np.float64) for i in indices])
    return fields, initial


def _batch_losses(model: Model, fields: np.ndarray, alpha: float, initial: np.ndarray) -> Optional[LossParts]:
    """Losses of one batch, or None when the residual is non-finite."""
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            return model.losses(fields, alpha, initial)
    except ResidualError as e:
        logging.debug(f"Non-finite residual at {e.index}")
        return None


def evaluate_loss(model: Model, signals: List[np.ndarray], alpha: float, batch_size: int) -> float:
    """Mean combined loss over prefix patches of `signals` (no parameter update)."""
    if not signals:
        return float("nan")
    total, count = 0.0, 0
    offsets = [0] * len(signals)
    for start in range(0, len(signals), batch_size):
        idx = list(range(start, min(start + batch_size, len(signals))))
        fields, initial = _patch_batch(signals, idx, offsets, model.n_ctx)
        parts = _batch_losses(model, fields, alpha, initial)
        loss = parts.total.item() if parts is not None else float("nan")
        total += loss * len(idx)
        count += len(idx)
    return total / count


def train(
    dataset: DatasetAdapter,
    config: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    progress: bool = True,
) -> TrainResult:
    """
    Trains a model on the train split of `dataset`.

    Args:
        dataset: dataset with train and val splits
        config: hyper-parameters
        out_dir: when given, the best checkpoint, model manifest and loss
            trace are written here
        progress: show a tqdm bar over epochs

    Returns:
        result: best-validation model, per-epoch trace and model manifest

    Raises:
        TrainingError: empty train split, or more than 1% of an epoch's
            batches had a non-finite loss
    """
    family = dataset.family
    grid = dataset.grid
    n_ctx = context_length(config.rho, grid.n_t)
    train_stream = dataset.iterate_split("train")
    if config.max_signals is not None:
        train_stream = train_stream.subset(config.max_signals)
    train_signals = _load_fields(train_stream)
    val_signals = _load_fields(dataset.iterate_split("val"))
    if not train_signals:
        raise TrainingError("Train split is empty")

    model = MODEL_KINDS[config.model_kind](family, grid, n_ctx, config.network, config.variant, config.seed)
    params = model.parameters()
    optimizer = Adam(params, lr=config.lr)
    n_slices = grid.n_t + 1
    n_batches = int(np.ceil(len(train_signals) / config.batch_size))
    logging.info(
        f"Training {config.model_kind}/{config.variant} on {len(train_signals)} {family.family_id} signals "
        f"(n_ctx {n_ctx}, alpha {config.alpha}, {n_batches} batches/epoch, "
        f"{sum(p.data.size for p in params)} parameters)"
    )

    trace_path = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        trace_path = Path(out_dir) / TRACE_FILE
        trace_path.unlink(missing_ok=True)

    trace: List[EpochRecord] = list()
    best_val, best_epoch, best_blob = float("inf"), -1, model_to_bytes(model)
    stale = 0
    for epoch in tqdm(range(config.epochs), disable=not progress, desc="epochs"):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(train_signals))
        if config.patch_policy == "random-offset":
            offsets = rng.integers(0, n_slices - n_ctx + 1, size=len(train_signals))
        else:
            offsets = np.zeros(len(train_signals), dtype=int)

        sums = {"loss": 0.0, "loss_ae": 0.0, "loss_coef": 0.0}
        used, skipped = 0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            fields, initial = _patch_batch(train_signals, idx, offsets[idx], n_ctx)
            parts = _batch_losses(model, fields, config.alpha, initial)
            values = parts.values() if parts is not None else {"loss": float("nan")}
            if not np.isfinite(values["loss"]):
                skipped += 1
                logging.warning(f"Epoch {epoch}: skipped batch at {start} (non-finite loss)")
                if skipped > MAX_SKIPPED_FRACTION * n_batches:
                    raise TrainingError(
                        f"Epoch {epoch}: {skipped} of {n_batches} batches had non-finite loss; aborting"
                    )
                continue
            optimizer.step(grad(parts.total, params))
            for k in sums:
                sums[k] += values[k] * len(idx)
            used += len(idx)

        val_loss = evaluate_loss(model, val_signals, config.alpha, config.batch_size)
        improved = bool(np.isfinite(val_loss) and val_loss < best_val)
        if improved:
            best_val, best_epoch, best_blob = val_loss, epoch, model_to_bytes(model)
            stale = 0
            logging.debug(f"Epoch {epoch}: new best validation loss {val_loss:.6g}")
        else:
            stale += 1

        record = EpochRecord(
            epoch=epoch,
            loss=sums["loss"] / max(used, 1),
            loss_ae=sums["loss_ae"] / max(used, 1),
            loss_coef=sums["loss_coef"] / max(used, 1),
            val_loss=val_loss,
            skipped_batches=skipped,
            best=improved,
        )
        trace.append(record)
        if trace_path is not None:
            with jsonlines.open(trace_path, mode="a") as writer:
                writer.write(record.to_dict())

        if config.patience is not None and stale >= config.patience:
            logging.info(f"Early stopping at epoch {epoch}; best epoch {best_epoch} (val {best_val:.6g})")
            break

    # Parameters of the best epoch, at checkpoint precision
    _, arrays = loads_parameters(best_blob)
    assign_parameters(model.named_parameters(), arrays)

    manifest = ModelManifest(
        kind=model.kind,
        family_id=family.family_id,
        variant=config.variant,
        d_z=config.network.d_z,
        n_ctx=n_ctx,
        grid=grid.to_dict(),
        config_hash=config.config_hash(),
        dataset_hash=dataset.provenance_hash,
        train_config=config.to_dict(),
        best_epoch=best_epoch,
    )
    if out_dir is not None:
        ckpt_path = save_model(model, out_dir, manifest)
        logging.info(f"Saved best-validation model (epoch {best_epoch}) to {ckpt_path}")
    return TrainResult(model=model, trace=trace, best_epoch=best_epoch, manifest=manifest)


def train_confide0(
    dataset: DatasetAdapter,
    config: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    progress: bool = True,
) -> TrainResult:
    """Trains the zero-knowledge CONFIDE-0 model with the same loop."""
    return train(dataset, replace(config, model_kind="confide0"), out_dir, progress)

