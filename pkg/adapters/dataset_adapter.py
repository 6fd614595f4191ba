"""
Adapter for the on-disk dataset container: `manifest.json`, `signals.bin`
and the evaluation-only sidecar `coeffs.bin` (see FORMAT.md).

Training code reaches signals through `SplitStream`, which has no access to
ground-truth coefficients. Evaluation opens the sidecar with an explicit,
separate call to `DatasetAdapter.open_sidecar`.
"""
from adapters.families.base import PdeFamily
from adapters.families.registry import get_family
from adapters.families.signal import CoefficientEstimate, GridSpec, Signal
from dataclasses import dataclass, field
from interfaces.errors import DatasetError
import hashlib
import json
import logging
import numpy as np
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union
import zlib

FORMAT_VERSION = 1
MANIFEST_FILE = "manifest.json"
SIGNALS_FILE = "signals.bin"
COEFFS_FILE = "coeffs.bin"
SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)


@dataclass
class BlobRecord:
    offset: int
    nbytes: int
    crc32: int

    def to_dict(self) -> Dict[str, int]:
        return {"offset": self.offset, "nbytes": self.nbytes, "crc32": self.crc32}


@dataclass
class DatasetManifest:
    """
    Portable description of a generated dataset.

    Attributes:
        family_id: PDE family identifier
        family_config: family options (e.g. FN2D boundary rule)
        grid: GridSpec as dict
        gp: GpSpec as dict
        sampling: FamilySamplingSpec as dict
        n_signals: number of stored signals
        seed: global generation seed
        splits: split name -> signal indices
        scalar_names: order of scalar coefficients in the sidecar
        signal_shape: [state, n_t + 1, *space]
        signals / coeffs: per-signal blob records (offset, nbytes, crc32)
        provenance: generator details (retries per slot)
    """

    family_id: str
    family_config: Dict[str, Any]
    grid: Dict[str, Any]
    gp: Dict[str, Any]
    sampling: Dict[str, Any]
    n_signals: int
    seed: int
    splits: Dict[str, List[int]]
    scalar_names: List[str]
    signal_shape: List[int]
    signals: List[BlobRecord] = field(default_factory=list)
    coeffs: List[BlobRecord] = field(default_factory=list)
    provenance: Dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": self.format_version,
            "family_id": self.family_id,
            "family_config": self.family_config,
            "grid": self.grid,
            "gp": self.gp,
            "sampling": self.sampling,
            "n_signals": self.n_signals,
            "seed": self.seed,
            "splits": self.splits,
            "scalar_names": self.scalar_names,
            "signal_shape": self.signal_shape,
            "signals": [r.to_dict() for r in self.signals],
            "coeffs": [r.to_dict() for r in self.coeffs],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "DatasetManifest":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise DatasetError(f"Unsupported dataset format version {version}; expected {FORMAT_VERSION}")
        return cls(
            family_id=d["family_id"],
            family_config=d.get("family_config", {}),
            grid=d["grid"],
            gp=d["gp"],
            sampling=d["sampling"],
            n_signals=int(d["n_signals"]),
            seed=int(d["seed"]),
            splits={k: [int(i) for i in v] for k, v in d["splits"].items()},
            scalar_names=list(d["scalar_names"]),
            signal_shape=list(d["signal_shape"]),
            signals=[BlobRecord(**r) for r in d["signals"]],
            coeffs=[BlobRecord(**r) for r in d["coeffs"]],
            provenance=d.get("provenance", {}),
            format_version=version,
        )


def split_indices(n: int, seed: int) -> Dict[str, List[int]]:
    """Disjoint 80/10/10 train/val/test split covering 0..n-1."""
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(n * SPLIT_FRACTIONS[0])
    n_val = int(n * SPLIT_FRACTIONS[1])
    return {
        "train": sorted(int(i) for i in order[:n_train]),
        "val": sorted(int(i) for i in order[n_train : n_train + n_val]),
        "test": sorted(int(i) for i in order[n_train + n_val :]),
    }


class DatasetWriter:
    """Appends signals and sidecar records in index order, then writes the manifest."""

    def __init__(self, path: Union[str, Path]) -> None:
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self._signals = open(self.path / SIGNALS_FILE, "wb")
        self._coeffs = open(self.path / COEFFS_FILE, "wb")
        self.signal_records: List[BlobRecord] = list()
        self.coeff_records: List[BlobRecord] = list()

    @staticmethod
    def _write(f, payload: bytes, records: List[BlobRecord]) -> None:
        records.append(BlobRecord(f.tell(), len(payload), zlib.crc32(payload)))
        f.write(payload)

    def append(self, fields: np.ndarray, scalars: Sequence[float]) -> None:
        self._write(self._signals, np.asarray(fields, dtype="<f4").tobytes(), self.signal_records)
        self._write(self._coeffs, np.asarray(scalars, dtype="<f4").tobytes(), self.coeff_records)

    def close(self, manifest: DatasetManifest) -> Path:
        self._signals.close()
        self._coeffs.close()
        manifest.signals = self.signal_records
        manifest.coeffs = self.coeff_records
        manifest_path = self.path / MANIFEST_FILE
        manifest_path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
        return manifest_path


class SignalReader:
    """Checksummed reads of float32 signal blobs from the memory-mapped container."""

    def __init__(self, path: Path, records: Sequence[BlobRecord], shape: Sequence[int], grid: GridSpec) -> None:
        self._blob = np.memmap(path, dtype=np.uint8, mode="r")
        self._records = list(records)
        self._shape = tuple(shape)
        self.grid = grid

    def __call__(self, index: int) -> Signal:
        record = self._records[index]
        raw = self._blob[record.offset : record.offset + record.nbytes]
        if zlib.crc32(raw) != record.crc32:
            raise DatasetError(f"Checksum mismatch for signal {index}")
        fields = np.frombuffer(raw, dtype="<f4").reshape(self._shape)
        return Signal(self.grid, fields)


class SplitStream:
    """
    Ordered (optionally shuffled) view over the signals of one split.

    Signals are zero-copy float32 views into the memory-mapped container.
    The stream holds the signal reader, family and provenance hash; it has
    no path back to the dataset or its coefficient sidecar.
    """

    def __init__(self, reader: SignalReader, family: PdeFamily, provenance_hash: str, indices: Sequence[int]) -> None:
        self._reader = reader
        self.family = family
        self.provenance_hash = provenance_hash
        self.indices = list(indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, i: int) -> Signal:
        return self._reader(self.indices[i])

    def __iter__(self) -> Iterator[Signal]:
        for index in self.indices:
            yield self._reader(index)

    def subset(self, n: int) -> "SplitStream":
        """First n signals in the stream's order."""
        return SplitStream(self._reader, self.family, self.provenance_hash, self.indices[:n])

    @property
    def grid(self) -> GridSpec:
        return self._reader.grid


class CoefficientSidecar:
    """Evaluation-only access to ground-truth coefficients."""

    def __init__(self, dataset: "DatasetAdapter") -> None:
        path = dataset.path / COEFFS_FILE
        if not path.exists():
            raise DatasetError(f"Dataset at {dataset.path} has no coefficient sidecar")
        self._dataset = dataset
        self._blob = np.memmap(path, dtype=np.uint8, mode="r")

    def coefficients(self, index: int) -> Dict[str, float]:
        record = self._dataset.manifest.coeffs[index]
        raw = self._blob[record.offset : record.offset + record.nbytes]
        if zlib.crc32(raw) != record.crc32:
            raise DatasetError(f"Checksum mismatch for coefficients of signal {index}")
        values = np.frombuffer(raw, dtype="<f4")
        return {name: float(v) for name, v in zip(self._dataset.manifest.scalar_names, values)}

    def true_estimate(self, index: int) -> CoefficientEstimate:
        return self._dataset.family.true_estimate(self.coefficients(index))


class DatasetAdapter:
    """
    Read access to a dataset directory.

    Example:
        ds = DatasetAdapter("data/constant")
        for signal in ds.iterate_split("train", shuffle_seed=0): ...
        truth = ds.open_sidecar().coefficients(ds.manifest.splits["test"][0])
    """

    def __init__(self, path: Union[str, Path]) -> None:
        self.path = Path(path)
        manifest_path = self.path / MANIFEST_FILE
        if not manifest_path.exists():
            raise DatasetError(f"No {MANIFEST_FILE} in {self.path}")
        manifest_text = manifest_path.read_text()
        self.manifest = DatasetManifest.from_dict(json.loads(manifest_text))
        self.provenance_hash = _sha256(manifest_text.encode("utf-8"))
        self.grid = GridSpec.from_dict(self.manifest.grid)
        self.family = get_family(self.manifest.family_id, self.manifest.family_config)
        self._signals = SignalReader(
            self.path / SIGNALS_FILE, self.manifest.signals, self.manifest.signal_shape, self.grid
        )
        logging.debug(f"Opened dataset {self.path} with {self.manifest.n_signals} signals")

    def __len__(self) -> int:
        return self.manifest.n_signals

    def signal(self, index: int) -> Signal:
        return self._signals(index)

    def iterate_split(self, split: str, shuffle_seed: Optional[int] = None) -> SplitStream:
        """
        Signals of a split in stored order, or permuted reproducibly by `shuffle_seed`.
        """
        if split not in self.manifest.splits:
            raise DatasetError(f"Unknown split {split!r}; expected one of {SPLITS}")
        indices = list(self.manifest.splits[split])
        if shuffle_seed is not None:
            order = np.random.default_rng(shuffle_seed).permutation(len(indices))
            indices = [indices[i] for i in order]
        return SplitStream(self._signals, self.family, self.provenance_hash, indices)

    def open_sidecar(self) -> CoefficientSidecar:
        return CoefficientSidecar(self)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_dataset(path: Union[str, Path]) -> DatasetAdapter:
    return DatasetAdapter(path)


def iterate_split(dataset: DatasetAdapter, split: str, shuffle_seed: Optional[int] = None) -> SplitStream:
    return dataset.iterate_split(split, shuffle_seed)
