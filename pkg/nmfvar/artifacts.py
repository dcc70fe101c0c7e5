"""File formats: CSV ingestion/emission and the model JSON document.

CSVs are tidy (rows = time points, columns = variables); the in-memory frame
is P×T. Floats are written with 17 significant digits so that a CSV read and
written again is byte-identical.
"""

import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from nmfvar.errors import InputError
from nmfvar.nmf_solver import FactorModel, FitDiagnostics
from nmfvar.preprocessing import PipelineSpec, TimeSeriesFrame

logger = logging.getLogger("nmfvar.artifacts")

FLOAT_FORMAT = "%.17g"
TIME_COLUMN = "time"
MODEL_FORMAT_VERSION = 1

PathLike = Union[str, Path]


def _numeric_block(raw: pd.DataFrame, names: Sequence[str], path: Path) -> np.ndarray:
    """Columns ``names`` of a string frame as a float matrix (one row per column).

    Conversion goes through ``float`` itself so that every ``%.17g`` value
    reads back to the exact double it was written from.
    """
    values = np.empty((len(names), raw.shape[0]))
    for j, name in enumerate(names):
        column = raw[name].str.strip()
        bad = np.flatnonzero(pd.to_numeric(column, errors="coerce").isna().to_numpy())
        if bad.size:
            row = int(bad[0])
            cell = column.iloc[row]
            problem = "missing value" if cell == "" else f"non-numeric value '{cell}'"
            # +2: one for the header line, one for 1-based numbering
            raise InputError(f"{path}: {problem} at row {row + 2}, column '{name}'")
        values[j] = column.astype(float).to_numpy()
    return values


def _read_strings(path: Path, text: Optional[str] = None) -> pd.DataFrame:
    source = io.StringIO(text) if text is not None else path
    try:
        return pd.read_csv(source, dtype=str, keep_default_na=False, comment="#")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc


def read_frame_csv(path: PathLike) -> TimeSeriesFrame:
    """Load a CSV whose first column holds time labels and the rest numeric variables."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    raw = _read_strings(path)
    if raw.shape[1] < 2:
        raise InputError(f"{path}: need a time column and at least one variable column")
    if raw.shape[0] < 2:
        raise InputError(f"{path}: need at least two rows of observations")

    names = [str(c) for c in raw.columns[1:]]
    values = _numeric_block(raw, names, path)
    timestamps = raw.iloc[:, 0].str.strip().tolist()
    logger.info(f"loaded {path.name}: P={len(names)}, T={len(timestamps)}")
    return TimeSeriesFrame(variable_names=names, timestamps=timestamps, values=values)


@dataclass
class LabelledTable:
    """An emitted item × column table: memberships, forecasts, fitted values."""

    first_header: str
    labels: List[str]
    headers: List[str]
    rows: np.ndarray
    comment: Optional[str] = None

    def to_csv(self) -> str:
        return table_csv(self.first_header, self.labels, self.headers, self.rows, self.comment)


def read_table_csv(path: PathLike) -> LabelledTable:
    """Read back any table written by :func:`table_csv`, leading ``#`` comment lines included.

    Unlike :func:`read_frame_csv` a single data row is fine here.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"table file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
    comments = []
    while lines and lines[0].startswith("#"):
        comments.append(lines.pop(0).rstrip("\n")[1:].lstrip(" "))
    raw = _read_strings(path, "".join(lines))
    if raw.shape[1] < 2 or raw.shape[0] < 1:
        raise InputError(f"{path}: need a label column, at least one value column and one row")
    headers = [str(c) for c in raw.columns[1:]]
    return LabelledTable(
        first_header=str(raw.columns[0]),
        labels=raw.iloc[:, 0].tolist(),
        headers=headers,
        rows=_numeric_block(raw, headers, path).T,
        comment="\n".join(comments) if comments else None,
    )


def records_csv(records: pd.DataFrame) -> str:
    """CSV text of a mixed-type table (edge lists, method comparisons)."""
    return records.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_records_csv(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"table file not found: {path}")
    try:
        return pd.read_csv(path, float_precision="round_trip", keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc


def table_csv(first_header: str, labels: Sequence[str], headers: Sequence[str], rows: np.ndarray,
              comment: Optional[str] = None) -> str:
    """CSV text: one labelled row per item, ``rows`` is items × len(headers)."""
    df = pd.DataFrame(np.asarray(rows, dtype=float), columns=list(headers))
    df.insert(0, first_header, list(labels))
    buffer = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buffer.write(f"# {line}\n")
    df.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def frame_csv(frame: TimeSeriesFrame, values: Optional[np.ndarray] = None,
              timestamps: Optional[Sequence[str]] = None) -> str:
    """Tidy CSV text of a P×T matrix (defaults to the frame's own values)."""
    matrix = frame.values if values is None else values
    labels = frame.timestamps if timestamps is None else timestamps
    return table_csv(TIME_COLUMN, labels, frame.variable_names, matrix.T)


def write_text_files(output_dir: PathLike, files: Dict[str, str]) -> List[Path]:
    """Write every file only once all contents exist, so failures leave nothing half-written."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        target = out / name
        target.write_text(text, encoding="utf-8", newline="\n")
        written.append(target)
    return written


def dumps_json(document: Dict[str, Any]) -> str:
    return json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + "\n"


def model_document(
    model: FactorModel,
    pipeline: PipelineSpec,
    frame: TimeSeriesFrame,
) -> Dict[str, Any]:
    """JSON-ready description of a fitted model and the data span it was fitted on.

    ``frame`` is the preprocessed frame; for a lag model its last D columns are
    kept as the forecasting history.
    """
    history = None
    if model.covariates == "lags":
        history = frame.values[:, frame.n_times - model.lag_order:].tolist()
    diagnostics = model.diagnostics
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "P": model.n_variables,
        "T": frame.n_times,
        "Q": model.rank,
        "D": model.lag_order,
        "covariates": model.covariates,
        "kernel_beta": model.kernel_beta,
        "variable_names": list(frame.variable_names),
        "timestamps": list(frame.timestamps),
        "basis": model.basis.tolist(),
        "theta": model.params.tolist(),
        "pipeline": pipeline.to_dict(),
        "history": history,
        "diagnostics": {
            "objective_trace": [float(v) for v in diagnostics.objective_trace],
            "r_squared": diagnostics.r_squared,
            "iterations": diagnostics.iterations,
            "converged": diagnostics.converged,
        },
        "seed": model.seed,
    }


def load_model(path: PathLike) -> Tuple[FactorModel, PipelineSpec, Dict[str, Any]]:
    """Read a model.json back into a FactorModel and its fitted pipeline."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        basis = np.asarray(doc["basis"], dtype=float)
        theta = np.asarray(doc["theta"], dtype=float)
        diag = doc["diagnostics"]
        model = FactorModel(
            basis=basis,
            params=theta,
            rank=int(doc["Q"]),
            lag_order=int(doc["D"]),
            covariates=str(doc["covariates"]),
            diagnostics=FitDiagnostics(
                objective_trace=list(diag["objective_trace"]),
                iterations=int(diag["iterations"]),
                converged=bool(diag["converged"]),
                r_squared=diag["r_squared"],
                coefficient_matrix=np.empty((0, 0)),
            ),
            variable_names=list(doc["variable_names"]),
            seed=int(doc["seed"]),
            kernel_beta=doc.get("kernel_beta"),
        )
        pipeline = PipelineSpec.from_dict(doc["pipeline"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed model file {path}: {exc}") from exc
    if basis.ndim != 2 or theta.ndim != 2 or basis.shape[1] != theta.shape[0]:
        raise InputError(f"malformed model file {path}: basis {basis.shape} and theta {theta.shape} do not conform")
    return model, pipeline, doc


def read_basis_csv(path: PathLike, n_variables: int) -> np.ndarray:
    """Fixed basis matrix (P rows, Q columns) from a CSV with variable labels in the first column."""
    if not Path(path).is_file():
        raise InputError(f"basis file not found: {path}")
    try:
        matrix = pd.read_csv(path).iloc[:, 1:].to_numpy(dtype=float)
    except (ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise InputError(f"{path}: basis entries must be numeric ({exc})") from exc
    if matrix.shape[0] != n_variables or matrix.shape[1] < 1:
        raise InputError(f"{path}: basis must have {n_variables} rows and at least one column, got {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InputError(f"{path}: basis has missing or non-finite entries")
    return matrix
