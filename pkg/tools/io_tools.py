import json
import logging
import re
from pathlib import Path
from typing import Dict, Iterable, Iterator, Optional

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from entanglement.errors import EmptyDataError, MalformedInputError
from entanglement.state import RunReport
from entanglement.witness import OUTCOMES, CountTable
from tools.coincidence_tools import Histogram
from tools.config_tools import CHANNELS
from tools.simulation_tools import EVENT_COLUMNS, PATH_TAGS, empty_events

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ("x", "y", "a", "b", "count")
CONFIG_SUFFIX = ".config"
READ_CHUNK_ROWS = 1_000_000

_PARSER_LINE = re.compile(r"line (\d+)")


def config_echo_path(stream_path: str | Path) -> Path:
    stream_path = Path(stream_path)
    return stream_path.with_name(stream_path.name + CONFIG_SUFFIX)


# --- Event streams ---

def write_config_echo(flat: Dict[str, str], path: str | Path) -> None:
    lines = ["# configuration echo of a simulated event stream; valid as a profile"]
    lines += [f"{key}={value}" for key, value in flat.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_config_echo(stream_path: str | Path) -> Optional[Dict[str, str]]:
    path = config_echo_path(stream_path)
    if not path.is_file():
        return None
    return {key: value for key, value in dotenv_values(path).items() if value is not None}


def write_events(blocks: Iterable[pd.DataFrame], path: str | Path) -> int:
    """Writes event blocks to one CSV; times stay exact integers. Returns the number of rows written."""
    path = Path(path)
    rows = 0
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write(",".join(EVENT_COLUMNS) + "\n")
        for block in blocks:
            block.loc[:, list(EVENT_COLUMNS)].to_csv(handle, header=False, index=False, na_rep="", lineterminator="\n")
            rows += len(block)
    return rows


_FAST_DTYPES = {"time_ps": "int64", "detector": str, "pulse_index": "int64", "setting_x": "int64",
                "setting_y": "int64", "path_tag": str}


def _first_bad(mask: np.ndarray) -> Optional[int]:
    bad = np.flatnonzero(mask)
    return int(bad[0]) if bad.size else None


def _validate_events(chunk: pd.DataFrame, first_line: int, previous_time: Optional[int]) -> pd.DataFrame:
    def fail(row: int, message: str):
        raise MalformedInputError(message, line=first_line + row)

    for column in ("setting_x", "setting_y"):
        values = chunk[column].to_numpy()
        row = _first_bad(~np.isin(values, (0, 1)))
        if row is not None:
            fail(row, f"{column} must be 0 or 1, got {values[row]}")

    detector = chunk["detector"].str.strip()
    row = _first_bad(~detector.isin(CHANNELS).to_numpy(dtype=bool))
    if row is not None:
        fail(row, f"unknown detector {detector.iloc[row]!r}")

    tag = chunk["path_tag"].fillna("").str.strip()
    row = _first_bad(~tag.isin(PATH_TAGS + ("",)).to_numpy(dtype=bool))
    if row is not None:
        fail(row, f"unknown path_tag {tag.iloc[row]!r}")

    times = chunk["time_ps"].to_numpy(dtype=np.int64)
    starts_early = previous_time is not None and times.size > 0 and times[0] < previous_time
    row = _first_bad(np.r_[starts_early, np.diff(times) < 0])
    if row is not None:
        fail(row, "events are not in time order")

    return pd.DataFrame({
        "time_ps": times,
        "detector": pd.Categorical(detector, categories=CHANNELS),
        "pulse_index": chunk["pulse_index"].to_numpy(dtype=np.int64),
        "setting_x": chunk["setting_x"].to_numpy().astype(np.int8),
        "setting_y": chunk["setting_y"].to_numpy().astype(np.int8),
        "path_tag": pd.Categorical(tag.where(tag != ""), categories=PATH_TAGS),
    })


def _locate_bad_row(path: Path) -> Optional[int]:
    """Slow scan used only after the typed reader failed: first line whose integer fields do not parse."""
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False, on_bad_lines="skip")
    raw = raw.fillna("")
    bad = np.zeros(len(raw), dtype=bool)
    for column in ("time_ps", "pulse_index", "setting_x", "setting_y"):
        bad |= ~raw[column].str.strip().str.fullmatch(r"-?\d+").to_numpy(dtype=bool)
    row = _first_bad(bad)
    return None if row is None else row + 2


def read_events(path: str | Path, chunk_rows: int = READ_CHUNK_ROWS) -> Iterator[pd.DataFrame]:
    """
    Streams a validated event CSV in chunks. Malformed rows abort with their 1-based file line number.
    """
    path = Path(path)
    if not path.is_file():
        raise MalformedInputError(f"event file {path} does not exist")
    with path.open("r", encoding="utf-8") as handle:
        header = handle.readline().strip()
    if tuple(part.strip() for part in header.split(",")) != EVENT_COLUMNS:
        raise MalformedInputError(f"expected header {','.join(EVENT_COLUMNS)}, got {header!r}", line=1)

    line = 2
    previous_time = None
    try:
        reader = pd.read_csv(path, dtype=_FAST_DTYPES, keep_default_na=False, skip_blank_lines=False,
                             chunksize=chunk_rows)
        for chunk in reader:
            events = _validate_events(chunk, line, previous_time)
            line += len(chunk)
            if len(events):
                previous_time = int(events["time_ps"].iloc[-1])
            yield events
    except pd.errors.ParserError as e:
        match = _PARSER_LINE.search(str(e))
        raise MalformedInputError(f"cannot parse event row ({e})", line=int(match.group(1)) if match else None) from e
    except (ValueError, TypeError) as e:
        if isinstance(e, MalformedInputError):
            raise
        raise MalformedInputError(f"non-integer field ({e})", line=_locate_bad_row(path)) from e


def read_all_events(path: str | Path) -> pd.DataFrame:
    frames = list(read_events(path))
    return pd.concat(frames, ignore_index=True) if frames else empty_events()


# --- Count tables ---

def is_count_table(path: str | Path) -> bool:
    with Path(path).open("r", encoding="utf-8") as handle:
        header = handle.readline().strip()
    return tuple(part.strip() for part in header.split(",")) == TABLE_COLUMNS


def read_count_table(path: str | Path) -> CountTable:
    """Reads x,y,a,b,count rows; repeated cells add up."""
    path = Path(path)
    if not path.is_file():
        raise MalformedInputError(f"count table {path} does not exist")
    if not is_count_table(path):
        raise MalformedInputError(f"expected header {','.join(TABLE_COLUMNS)}", line=1)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    if raw.empty:
        raise EmptyDataError(f"count table {path} has no rows")

    records = []
    for row, values in enumerate(raw.itertuples(index=False), start=2):
        try:
            x, y, a, b = (int(str(v).strip()) for v in values[:4])
            count = float(str(values[4]).strip())
        except ValueError:
            raise MalformedInputError(f"non-numeric entry in {tuple(values)}", line=row) from None
        if x not in (0, 1) or y not in (0, 1) or a not in OUTCOMES or b not in OUTCOMES:
            raise MalformedInputError(f"invalid cell ({x}, {y}, {a}, {b})", line=row)
        if not np.isfinite(count) or count < 0:
            raise MalformedInputError(f"count must be finite and non-negative, got {count}", line=row)
        records.append((x, y, a, b, count))
    return CountTable.from_records(records)


def write_count_table(table: CountTable, path: str | Path) -> None:
    pd.DataFrame(table.records(), columns=list(TABLE_COLUMNS)).to_csv(path, index=False, lineterminator="\n")


# --- Histograms and reports ---

def write_histogram(histogram: Histogram, path: str | Path) -> None:
    histogram.to_frame().to_csv(path, index=False, lineterminator="\n")


def write_report(report: RunReport, path: str | Path) -> None:
    Path(path).write_text(report_json(report) + "\n", encoding="utf-8")


def report_json(report: RunReport) -> str:
    return json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True)
