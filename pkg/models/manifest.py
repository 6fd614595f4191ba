"""
Model persistence: a parameter checkpoint (`model.ckpt`) plus a model
manifest (`model.json`) binding it to its family, grid, training
configuration and the dataset it was trained on.
"""
from adapters.families.registry import get_family
from adapters.families.signal import GridSpec
from autodiff.checkpoint import assign_parameters, dumps_parameters, loads_parameters
from dataclasses import dataclass, field
from interfaces.errors import DatasetError
import json
from models.confide import ConfideModel
from models.confide0 import Confide0Model
from models.networks import NetworkConfig
from pathlib import Path
from typing import Any, Dict, Union

CHECKPOINT_FILE = "model.ckpt"
MANIFEST_FILE = "model.json"
MODEL_KINDS = {"confide": ConfideModel, "confide0": Confide0Model}

Model = Union[ConfideModel, Confide0Model]


@dataclass
class ModelManifest:
    kind: str
    family_id: str
    variant: str
    d_z: int
    n_ctx: int
    grid: Dict[str, Any]
    config_hash: str
    dataset_hash: str
    train_config: Dict[str, Any] = field(default_factory=dict)
    best_epoch: int = -1
    checkpoint: str = CHECKPOINT_FILE

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ModelManifest":
        return cls(**d)


def build_model(spec: Dict[str, Any]) -> Model:
    """Re-creates an (untrained) model from a `model.spec()` dict."""
    try:
        cls = MODEL_KINDS[spec["kind"]]
    except KeyError:
        raise DatasetError(f"Unknown model kind {spec.get('kind')!r}")
    return cls(
        get_family(spec["family_id"], spec.get("family_config")),
        GridSpec.from_dict(spec["grid"]),
        int(spec["n_ctx"]),
        NetworkConfig.from_dict(spec["network"]),
        variant=spec["variant"],
        seed=int(spec.get("seed", 0)),
    )


def model_to_bytes(model: Model) -> bytes:
    return dumps_parameters(model.named_parameters(), model.spec())


def model_from_bytes(blob: bytes) -> Model:
    header, arrays = loads_parameters(blob)
    model = build_model(header["spec"])
    assign_parameters(model.named_parameters(), arrays)
    return model


def save_model(model: Model, out_dir: Union[str, Path], manifest: ModelManifest) -> Path:
    """
    Writes `model.ckpt` and `model.json` into `out_dir`.

    Returns:
        checkpoint path
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / manifest.checkpoint
    ckpt_path.write_bytes(model_to_bytes(model))
    (out_dir / MANIFEST_FILE).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    return ckpt_path


def load_model(path: Union[str, Path]):
    """
    Loads a model from a model directory or a checkpoint file.

    Returns:
        model: model with restored parameters
        manifest: its ModelManifest, or None when only a bare checkpoint exists
    """
    path = Path(path)
    ckpt_path = path / CHECKPOINT_FILE if path.is_dir() else path
    if not ckpt_path.exists():
        raise DatasetError(f"No checkpoint at {ckpt_path}")
    model = model_from_bytes(ckpt_path.read_bytes())
    manifest_path = ckpt_path.parent / MANIFEST_FILE
    manifest = None
    if manifest_path.exists():
        manifest = ModelManifest.from_dict(json.loads(manifest_path.read_text()))
    return model, manifest
