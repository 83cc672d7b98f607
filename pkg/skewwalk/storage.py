import json
import logging
import os
import struct

import numpy as np
import pandas as pd

from .errors import ReportSchemaError
from .models import REPORT_SCHEMA_VERSION, ExperimentReport, RunConfig
from .walk_engine import PathSample

logger = logging.getLogger(__name__)

PATH_MAGIC = b"SKWK"
PATH_VERSION = 1
# magic, version u32, n u64, x0 i64, seed u64
_PATH_HEADER = struct.Struct("<4sIQqQ")
PATH_HEADER_SIZE = _PATH_HEADER.size


class LocalFileStorage:
    """Handles artifact storage on the local file system."""

    def __init__(self, output_dir: str):
        if not output_dir:
            raise ValueError("output_dir is not configured")
        self.output_dir = output_dir
        if not os.path.exists(self.output_dir):
            os.makedirs(self.output_dir)

    def path_for(self, name: str, suffix: str) -> str:
        return os.path.join(self.output_dir, f"{name}.{suffix}")

    def save_report(self, report: ExperimentReport, name: str) -> tuple[str, str]:
        """Write the JSON report and its CSV mirror; returns both paths."""
        json_path = self.path_for(name, "json")
        with open(json_path, "w") as f:
            json.dump(report.model_dump(mode="json"), f, indent=4)
        csv_path = self.save_table(report_frame(report), name)
        logger.info("Saved report %s to %s", report.id, json_path)
        return json_path, csv_path

    def save_table(self, frame: pd.DataFrame, name: str) -> str:
        """CSV with a header row, '.' decimals and LF line endings."""
        csv_path = self.path_for(name, "csv")
        frame.to_csv(csv_path, index=False, lineterminator="\n")
        return csv_path

    def save_run_config(self, cfg: RunConfig, name: str) -> str:
        """Sidecar <name>_config.json holding the config and seed behind a table."""
        config_path = self.path_for(f"{name}_config", "json")
        with open(config_path, "w") as f:
            json.dump(cfg.model_dump(mode="json", by_alias=True), f, indent=4)
        return config_path

    def save_path(self, path: PathSample, name: str) -> str:
        """Binary dump: SKWK header then n + 1 little-endian int64 values."""
        bin_path = self.path_for(name, "bin")
        header = _PATH_HEADER.pack(
            PATH_MAGIC, PATH_VERSION, path.values.size, path.x0, path.seed
        )
        with open(bin_path, "wb") as f:
            f.write(header)
            f.write(path.values.astype("<i8").tobytes())
        return bin_path


def load_report(path: str) -> ExperimentReport:
    """Load a report JSON, rejecting other schema versions."""
    with open(path, "r") as f:
        data = json.load(f)
    version = data.get("schema_version")
    if version != REPORT_SCHEMA_VERSION:
        raise ReportSchemaError(
            f"{path}: schema version {version} is not supported (expected {REPORT_SCHEMA_VERSION})."
        )
    return ExperimentReport.model_validate(data)


def load_path(path: str) -> tuple[dict, np.ndarray]:
    """Read a binary path dump back into its header fields and values."""
    with open(path, "rb") as f:
        raw = f.read()
    magic, version, n, x0, seed = _PATH_HEADER.unpack_from(raw)
    if magic != PATH_MAGIC:
        raise ValueError(f"{path} is not a path dump.")
    values = np.frombuffer(raw, dtype="<i8", count=n, offset=_PATH_HEADER.size)
    return {"version": version, "n": n, "x0": x0, "seed": seed}, values


def report_frame(report: ExperimentReport) -> pd.DataFrame:
    """One row per grid point, parameters spread into columns."""
    rows = []
    for point in report.grid:
        row = {"experiment": report.id, **point.params}
        row.update(value=point.value, err=point.err, status=point.status, note=point.note)
        rows.append(row)
    columns = ["experiment", "value", "err", "status", "note"]
    return pd.DataFrame(rows) if rows else pd.DataFrame(columns=columns)


def summary_frame(reports: list[ExperimentReport]) -> pd.DataFrame:
    """One row per experiment with its verdict and headline numbers."""
    if not reports:
        return pd.DataFrame(columns=["Experiment", "Verdict", "Points", "Inconclusive"])
    return pd.DataFrame([r.__pretty_dict__() for r in reports])
