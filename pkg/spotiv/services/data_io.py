"""
CSV ingestion of user samples and report output.

Input CSVs have the header y,d,z1..z{p_z},x1..x{p_x}. Unless p_z is given,
it is the number of leading W columns whose name starts with "z".
"""

import io
import json
from pathlib import Path
from typing import Optional, Union

import aiofiles
import numpy as np
import pandas as pd
from pydantic import BaseModel

from spotiv.errors import InputError
from spotiv.logging_config import get_logger
from spotiv.models import (
    Dataset,
    EstimateReport,
    MajorityTestReport,
    OracleReport,
    OutcomeKind,
    OutputFormat,
    SimulationReport,
)

logger = get_logger(__name__)

REQUIRED_COLUMNS = ("y", "d")


class CsvParseError(InputError):
    """A cell of the input CSV is not a decimal number."""

    code = "csv_parse_error"
    stage = "data_io"


class MissingColumnError(InputError):
    """A required column is absent from the CSV header."""

    code = "missing_column"
    stage = "data_io"


def _infer_p_z(names: list) -> int:
    p_z = 0
    for name in names:
        if not name.lower().startswith("z"):
            break
        p_z += 1
    return p_z


def _numeric(frame: pd.DataFrame, path: Union[str, Path]) -> pd.DataFrame:
    parsed = {}
    for column in frame.columns:
        raw = frame[column].str.strip()
        try:
            # correctly rounded, unlike the fast path of pd.to_numeric
            values = raw.astype(float)
            bad = ~np.isfinite(values)
        except ValueError:
            values = pd.to_numeric(raw, errors="coerce")
            bad = values.isna() | ~np.isfinite(values.astype(float))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            # header is line 1
            raise CsvParseError(
                f"{path}: line {row + 2}, column {column!r}: "
                f"cannot parse {frame[column].iloc[row]!r} as a number"
            )
        parsed[column] = values.astype(float)
    return pd.DataFrame(parsed)


def read_csv_dataset(
    path: Union[str, Path],
    p_z: Optional[int] = None,
    outcome_kind: Optional[OutcomeKind] = None,
    center: bool = False,
) -> Dataset:
    """
    Load a sample from CSV.

    The outcome kind defaults to binary when every y is 0 or 1. Columns are
    used as given unless ``center`` is set.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError as e:
        raise InputError(f"input file not found: {path}", code="file_not_found") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise CsvParseError(f"{path}: {e}") from e

    frame.columns = [str(c).strip() for c in frame.columns]
    for column in REQUIRED_COLUMNS:
        if column not in frame.columns:
            raise MissingColumnError(f"{path}: missing required column {column!r}")

    w_columns = [c for c in frame.columns if c not in REQUIRED_COLUMNS]
    if not w_columns:
        raise MissingColumnError(f"{path}: no instrument columns (z1, z2, ...)")
    if p_z is None:
        p_z = _infer_p_z(w_columns)
        if p_z == 0:
            raise MissingColumnError(
                f"{path}: no column named z*; pass p_z explicitly"
            )

    values = _numeric(frame, path)
    y = values["y"].to_numpy()
    if outcome_kind is None:
        is_binary = np.all((y == 0) | (y == 1))
        outcome_kind = OutcomeKind.BINARY if is_binary else OutcomeKind.CONTINUOUS

    dataset = Dataset(
        y=y,
        d=values["d"].to_numpy(),
        W=values[w_columns].to_numpy(),
        p_z=p_z,
        outcome_kind=OutcomeKind(outcome_kind),
        column_names=w_columns,
    )
    logger.debug(
        "Loaded CSV dataset",
        extra={"path": str(path), "n": dataset.n, "p": dataset.p, "p_z": p_z},
    )
    return dataset.centered() if center else dataset


def dataset_frame(dataset: Dataset) -> pd.DataFrame:
    frame = pd.DataFrame(dataset.W, columns=dataset.names)
    frame.insert(0, "d", dataset.d)
    frame.insert(0, "y", dataset.y)
    return frame


def write_csv_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    dataset_frame(dataset).to_csv(path, index=False)


def _estimate_rows(report: EstimateReport) -> pd.DataFrame:
    ci = report.cate.get("ci") or [None, None]
    row = {
        "n": report.n,
        "p_z": report.p_z,
        "outcome_kind": report.outcome_kind,
        "S_hat": " ".join(report.S_hat),
        "M_hat": report.M_hat,
        "cate": report.cate.get("cate"),
        "plug_in_se": report.cate.get("plug_in_se"),
        "boot_se": report.cate.get("boot_se"),
        "ci_low": ci[0],
        "ci_high": ci[1],
        "dropped_points": report.cate.get("dropped_points"),
        "majority_passed": (
            report.majority_test.get("passed") if report.majority_test else None
        ),
    }
    return pd.DataFrame([row])


def render_report(
    report: BaseModel, fmt: OutputFormat = OutputFormat.JSON, timing: bool = False
) -> str:
    """
    Serialize a report. wall_time is left out unless ``timing`` is set, so
    repeated runs with one seed give identical text.
    """
    fmt = OutputFormat(fmt)
    if isinstance(report, SimulationReport):
        if fmt == OutputFormat.JSON:
            exclude = None if timing else {"rows": {"__all__": {"wall_time"}}}
            return report.model_dump_json(indent=2, exclude=exclude) + "\n"
        frame = pd.DataFrame([row.model_dump(mode="json") for row in report.rows])
        if not timing:
            frame = frame.drop(columns=["wall_time"])
        return frame.to_csv(index=False)
    if fmt == OutputFormat.JSON:
        return report.model_dump_json(indent=2) + "\n"
    if isinstance(report, EstimateReport):
        return _estimate_rows(report).to_csv(index=False)
    if isinstance(report, OracleReport):
        return pd.DataFrame({"d": report.grid, "phi": report.phi}).to_csv(index=False)
    return pd.DataFrame([report.model_dump(mode="json")]).to_csv(index=False)


async def write_report(
    report: BaseModel,
    path: Union[str, Path],
    fmt: OutputFormat = OutputFormat.JSON,
    timing: bool = False,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    async with aiofiles.open(path, "w") as f:
        await f.write(render_report(report, fmt, timing))
    logger.info(f"Report written to {path}")
    return path


async def read_report(
    path: Union[str, Path],
) -> Union[BaseModel, pd.DataFrame]:
    """
    Read a written report back.

    JSON reports come back as their model; CSV reports as a DataFrame.
    """
    async with aiofiles.open(path, "r") as f:
        text = await f.read()
    if str(path).endswith(".csv"):
        return pd.read_csv(io.StringIO(text))
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: not a JSON report: {e}", code="bad_report") from e
    if "rows" in payload:
        return SimulationReport.model_validate(payload)
    if "phi" in payload:
        return OracleReport.model_validate(payload)
    if "cate" not in payload:
        return MajorityTestReport.model_validate(payload)
    return EstimateReport.model_validate(payload)
