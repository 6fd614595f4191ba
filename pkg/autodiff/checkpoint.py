"""
Portable parameter checkpoints.

Layout (see FORMAT.md):
    8 bytes   magic b"CNFDCKPT"
    4 bytes   little-endian uint32 header length
    N bytes   UTF-8 JSON header {"op_version", "spec", "tensors": [{"name", "shape"}]}
    ...       little-endian float32 blobs, one per tensor, in header order
"""
from autodiff.tensor import Tensor
from interfaces.errors import DatasetError, ShapeError
import json
import numpy as np
from pathlib import Path
import struct
from typing import Any, Dict, List, Sequence, Tuple, Union

MAGIC = b"CNFDCKPT"
OP_VERSION = 1


def dumps_parameters(named_params: Sequence[Tuple[str, Tensor]], spec: Dict[str, Any]) -> bytes:
    """
    Serializes parameters to checkpoint bytes. Output is a pure function of
    the inputs (sorted JSON keys, no timestamps).
    """
    header = {
        "op_version": OP_VERSION,
        "spec": spec,
        "tensors": [{"name": name, "shape": list(p.shape)} for name, p in named_params],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blobs = [p.data.astype("<f4").tobytes() for _, p in named_params]
    return MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + b"".join(blobs)


def loads_parameters(blob: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Parses checkpoint bytes.

    Returns:
        header: decoded JSON header
        arrays: name -> float64 array, in declared order

    Raises:
        DatasetError: bad magic, unsupported op version, or truncated payload
    """
    if blob[: len(MAGIC)] != MAGIC:
        raise DatasetError("Not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    (header_len,) = struct.unpack("<I", blob[offset : offset + 4])
    offset += 4
    header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
    offset += header_len
    if header.get("op_version") != OP_VERSION:
        raise DatasetError(f"Unsupported checkpoint op version: {header.get('op_version')}")

    arrays = dict()
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        n_bytes = 4 * count
        if offset + n_bytes > len(blob):
            raise DatasetError(f"Checkpoint truncated while reading {entry['name']}")
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        arrays[entry["name"]] = values.astype(np.float64).reshape(entry["shape"])
        offset += n_bytes
    return header, arrays


def assign_parameters(
    named_params: Sequence[Tuple[str, Tensor]], arrays: Dict[str, np.ndarray]
) -> None:
    """Copies loaded arrays into existing parameter tensors (matched by name)."""
    missing: List[str] = [name for name, _ in named_params if name not in arrays]
    if missing:
        raise ShapeError(f"Checkpoint is missing parameters: {missing[:5]}")
    for name, p in named_params:
        if arrays[name].shape != p.shape:
            raise ShapeError(f"Checkpoint shape for {name} is {arrays[name].shape}, model has {p.shape}")
        p.data = arrays[name].copy()


def save_parameters(
    path: Union[str, Path], named_params: Sequence[Tuple[str, Tensor]], spec: Dict[str, Any]
) -> None:
    Path(path).write_bytes(dumps_parameters(named_params, spec))


def load_parameters(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    return loads_parameters(Path(path).read_bytes())
