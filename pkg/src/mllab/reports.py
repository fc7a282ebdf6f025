"""JSON report envelopes, CSV side tables and dataset descriptors."""

import csv
import hashlib
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

from pydantic import BaseModel, ValidationError

from .base import ConfigError, NumericalError
from .models import Dataset, DatasetDescriptor, RunConfig

logger = logging.getLogger(__name__)

Table = List[Dict[str, Any]]


def dataset_descriptor(d: Dataset, source: str) -> DatasetDescriptor:
    """Shape and sha256 of the float64 inputs followed by the targets."""
    digest = hashlib.sha256()
    digest.update(d.X.tobytes())
    digest.update(d.y.tobytes())
    return DatasetDescriptor(source=source, n=d.n, d=d.d, sha256=digest.hexdigest())


def _check_finite(value: Any, path: str = "body") -> None:
    if isinstance(value, float) and not math.isfinite(value):
        raise NumericalError(f"non-finite value {value} at {path}")
    if isinstance(value, dict):
        for key, item in value.items():
            _check_finite(item, f"{path}.{key}")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _check_finite(item, f"{path}[{i}]")


def report_document(config: RunConfig, body: BaseModel) -> Dict[str, Any]:
    """Envelope with metadata, the exact run config and the command body.

    Raises:
        NumericalError: If the body holds a NaN or infinite number
    """
    from . import __version__

    document = {
        "metadata": {
            "tool": "mllab",
            "version": __version__,
            "created_at": datetime.now(timezone.utc).isoformat(),
        },
        "config": config.model_dump(mode="json"),
        "body": body.model_dump(mode="json"),
    }
    _check_finite(body.model_dump())
    return document


def dumps_report(document: Mapping[str, Any]) -> str:
    """Serialize with sorted keys; floats use the shortest repr that round-trips."""
    return json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + "\n"


def table_path(report_path: Path, name: str) -> Path:
    """<stem>.<name>.csv next to the report."""
    return report_path.with_name(f"{report_path.stem}.{name}.csv")


def write_table(path: Path, rows: Sequence[Mapping[str, Any]]) -> None:
    """Write rows as CSV with the first row's keys as header; None becomes an empty cell."""
    fieldnames = list(rows[0].keys()) if rows else []
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})


def write_report(
    path: Path,
    config: RunConfig,
    body: BaseModel,
    tables: Optional[Mapping[str, Table]] = None,
) -> List[Path]:
    """Write the JSON report and its CSV side tables.

    Returns:
        Paths written, report first
    """
    document = report_document(config, body)
    path.write_text(dumps_report(document))
    written = [path]
    for name, rows in (tables or {}).items():
        side = table_path(path, name)
        write_table(side, rows)
        written.append(side)
    logger.info("wrote %s", ", ".join(str(p) for p in written))
    return written


def read_report_config(path: Path) -> RunConfig:
    """RunConfig embedded in a report, for re-running it.

    Raises:
        ConfigError: If the file is not a report or its config is invalid
    """
    try:
        document = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read report {path}: {e}") from e
    if not isinstance(document, dict) or "config" not in document:
        raise ConfigError(f"{path} has no embedded config")
    try:
        return RunConfig.model_validate(document["config"])
    except ValidationError as e:
        raise ConfigError(f"invalid config in {path}: {e}") from e
