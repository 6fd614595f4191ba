"""
Report writer. A report directory holds:

    metrics.json            headline metrics, config and dataset hashes
    horizon_curve.csv       per-horizon mean/std of every predictor
    scatter.csv             (truth, estimate) pairs per scalar coefficient
    per_signal.csv          one row per evaluated signal
    coefficient_field.csv   coefficient functions on grid points (families with heads)
    ablation_<axis>.csv     ablation tables
    provenance.json         command arguments, seed and input hashes

Files are pure functions of their inputs: sorted JSON keys, fixed column
order, no timestamps.
"""
from evalbench.evaluate import EvaluationResult
import hashlib
import json
import jsonschema
import logging
import pandas as pd
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

REPORT_VERSION = 1
SCHEMA_PATH = Path(__file__).parent / "schemas" / "report.schema.json"


def file_sha256(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def json_sha256(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, df: pd.DataFrame) -> None:
    df.to_csv(path, index=False, float_format="%.12g")


def emit_report(
    out_dir: Union[str, Path],
    config_hash: str,
    dataset_hash: str,
    provenance: Dict[str, Any],
    evaluation: Optional[EvaluationResult] = None,
    ablations: Optional[Dict[str, pd.DataFrame]] = None,
) -> Path:
    """
    Writes a report directory and validates its metrics against the shipped schema.

    Args:
        out_dir: report directory (created if missing)
        config_hash: sha256 of the training/evaluation configuration
        dataset_hash: provenance hash of the evaluated dataset
        provenance: command arguments, seed and input hashes
        evaluation: test-set evaluation, if any
        ablations: axis name -> ablation table

    Returns:
        path of metrics.json
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files: List[str] = list()
    metrics: Dict[str, Any] = {
        "report_version": REPORT_VERSION,
        "config_hash": config_hash,
        "dataset_hash": dataset_hash,
    }

    if evaluation is not None:
        metrics["evaluation"] = evaluation.metrics
        tables = {
            "horizon_curve.csv": evaluation.horizon_curve,
            "scatter.csv": evaluation.scatter,
            "per_signal.csv": evaluation.per_signal,
        }
        if not evaluation.coefficient_field.empty:
            tables["coefficient_field.csv"] = evaluation.coefficient_field
        for name, df in tables.items():
            _write_csv(out_dir / name, df)
            files.append(name)

    if ablations:
        metrics["ablations"] = dict()
        for axis, df in sorted(ablations.items()):
            name = f"ablation_{axis}.csv"
            _write_csv(out_dir / name, df)
            files.append(name)
            metrics["ablations"][axis] = {"axis": axis, "rows": int(len(df))}

    _write_json(out_dir / "provenance.json", provenance)
    files.append("provenance.json")
    metrics["files"] = sorted(files + ["metrics.json"])
    validate_metrics(metrics)
    metrics_path = out_dir / "metrics.json"
    _write_json(metrics_path, metrics)
    logging.info(f"Wrote report with {len(metrics['files'])} files to {out_dir}")
    return metrics_path


def load_schema() -> Dict[str, Any]:
    return json.loads(SCHEMA_PATH.read_text())


def validate_metrics(metrics: Dict[str, Any]) -> None:
    """
    Raises:
        jsonschema.ValidationError: metrics do not follow the report schema
    """
    jsonschema.validate(instance=metrics, schema=load_schema())
