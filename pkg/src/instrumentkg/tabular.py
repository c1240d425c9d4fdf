"""Parse tabular dataset content and pull out what an experiment measured.

Input format: a "/*" ... "*/" delimited header block of "Key: value"
lines, one tab-separated column-name line, then tab-separated data rows.
From a parsed table we extract measured parameters (non-axis columns run
through an alias table), temporal bounds and the experiment location.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from typing import Optional

from .model import Doi, ExperimentDetails


class MalformedHeader(ValueError):
    pass


class RaggedRow(ValueError):
    """A data row whose cell count differs from the column count."""

    def __init__(self, index: int, expected: int, got: int):
        super().__init__(f"row {index}: expected {expected} cells, got {got}")
        self.index = index


class NoTemporalData(ValueError):
    pass


class NoLocationData(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    short_name: str
    long_name: str
    unit: str = ""
    raw: str = ""


@dataclass(frozen=True)
class TabularDataset:
    header_metadata: tuple[tuple[str, str], ...]
    columns: tuple[Column, ...]
    rows: tuple[tuple[str, ...], ...]

    def header(self, key: str) -> Optional[str]:
        wanted = key.lower()
        for name, value in self.header_metadata:
            if name.lower() == wanted:
                return value
        return None


@dataclass(frozen=True)
class ParameterDescriptor:
    name: str
    unit: str
    source_column: str

    def display(self) -> str:
        return f"{self.name} ({self.unit})" if self.unit else self.name


@dataclass(frozen=True)
class TemporalBounds:
    start: date
    end: date

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"start {self.start} after end {self.end}")


@dataclass(frozen=True)
class GeoName:
    name: str
    latitude: Optional[float] = None
    longitude: Optional[float] = None

    def __post_init__(self) -> None:
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")


def _split_unit(cell: str) -> tuple[str, str]:
    cell = cell.strip()
    if cell.endswith("]") and "[" in cell:
        name, _, unit = cell.rpartition("[")
        return name.strip(), unit[:-1].strip()
    return cell, ""


def parse_tabular(data: bytes | str) -> TabularDataset:
    """Parse header block, column line and data rows.

    Raises MalformedHeader on structural problems in the header and
    RaggedRow (with the 0-based data row index) on a short or long row.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.split("\n")
    i = 0
    while i < len(lines) and not lines[i].strip():
        i += 1
    if i >= len(lines) or not lines[i].lstrip().startswith("/*"):
        raise MalformedHeader("missing '/*' header block")
    i += 1
    header: list[tuple[str, str]] = []
    seen: set[str] = set()
    closed = False
    while i < len(lines):
        line = lines[i]
        if line.lstrip().startswith("*/"):
            closed = True
            i += 1
            break
        stripped = line.strip()
        if stripped:
            key, sep, value = stripped.partition(":")
            if not sep:
                raise MalformedHeader(f"header line without ':': {stripped!r}")
            key = key.strip()
            if key.lower() in seen:
                raise MalformedHeader(f"duplicate header key {key!r}")
            seen.add(key.lower())
            header.append((key, value.strip()))
        i += 1
    if not closed:
        raise MalformedHeader("header block never closed with '*/'")
    while i < len(lines) and not lines[i].strip():
        i += 1
    columns: tuple[Column, ...] = ()
    rows: list[tuple[str, ...]] = []
    if i < len(lines) and lines[i].strip():
        cells = lines[i].rstrip("\r").split("\t")
        cols = []
        for cell in cells:
            name, unit = _split_unit(cell)
            cols.append(Column(short_name=name, long_name=name, unit=unit, raw=cell.strip()))
        columns = tuple(cols)
        i += 1
        row_index = 0
        for line in lines[i:]:
            if not line.strip():
                continue
            cells = line.rstrip("\r").split("\t")
            if len(cells) != len(columns):
                raise RaggedRow(row_index, len(columns), len(cells))
            rows.append(tuple(cell.strip() for cell in cells))
            row_index += 1
    return TabularDataset(header_metadata=tuple(header), columns=columns, rows=tuple(rows))


def serialize_tabular(ds: TabularDataset) -> str:
    """Inverse of parse_tabular for round-trip checks."""
    lines = ["/* DATA:"]
    lines += [f"{key}: {value}" for key, value in ds.header_metadata]
    lines.append("*/")
    if ds.columns:
        lines.append("\t".join(col.raw for col in ds.columns))
        lines += ["\t".join(row) for row in ds.rows]
    return "\n".join(lines) + "\n"


# Columns that locate a measurement instead of reporting one.
_AXIS_NAMES = {
    "event", "event(s)", "events", "date/time", "datetime", "date", "time",
    "latitude", "lat", "longitude", "lon", "long", "elevation",
}


def _is_axis(column: Column) -> bool:
    return column.short_name.lower() in _AXIS_NAMES


DEFAULT_ALIASES_PATH = Path(__file__).parent / "data" / "parameter_aliases.json"


def load_aliases(path: Optional[Path] = None) -> dict[str, str]:
    """Alias table mapping lowercase column names to canonical parameter names."""
    raw = json.loads(Path(path or DEFAULT_ALIASES_PATH).read_text("utf-8"))
    return {key.lower(): value for key, value in raw.items()}


def extract_parameters(
    ds: TabularDataset, aliases: Optional[dict[str, str]] = None
) -> list[ParameterDescriptor]:
    """One descriptor per non-axis column.

    Unknown column names pass through verbatim; known abbreviations map to
    their canonical long names.
    """
    if aliases is None:
        aliases = load_aliases()
    descriptors = []
    seen: set[str] = set()
    for column in ds.columns:
        if _is_axis(column) or column.raw in seen:
            continue
        seen.add(column.raw)
        name = aliases.get(column.short_name.lower(), column.short_name)
        descriptors.append(
            ParameterDescriptor(name=name, unit=column.unit, source_column=column.raw)
        )
    return descriptors


def _parse_date(cell: str) -> Optional[date]:
    cell = cell.strip()
    if not cell:
        return None
    try:
        return datetime.fromisoformat(cell.replace("Z", "+00:00")).date()
    except ValueError:
        pass
    try:
        return date.fromisoformat(cell)
    except ValueError:
        return None


def extract_temporal_bounds(ds: TabularDataset) -> TemporalBounds:
    """Min/max experiment dates.

    Header MinimumDateTime/MaximumDateTime take precedence; otherwise every
    date/time axis column is scanned. Datetimes are truncated to dates.
    """
    min_header = ds.header("MinimumDateTime")
    max_header = ds.header("MaximumDateTime")
    if min_header and max_header:
        start = _parse_date(min_header)
        end = _parse_date(max_header)
        if start and end:
            return TemporalBounds(start=start, end=end)
        raise NoTemporalData("unparseable MinimumDateTime/MaximumDateTime")
    date_column_indexes = [
        idx
        for idx, column in enumerate(ds.columns)
        if column.short_name.lower() in ("date/time", "datetime", "date")
    ]
    dates = []
    for row in ds.rows:
        for idx in date_column_indexes:
            parsed = _parse_date(row[idx])
            if parsed:
                dates.append(parsed)
    if not dates:
        raise NoTemporalData("no date header keys and no parseable date cells")
    return TemporalBounds(start=min(dates), end=max(dates))


def _mean_column(ds: TabularDataset, names: tuple[str, ...]) -> Optional[float]:
    indexes = [
        idx for idx, col in enumerate(ds.columns) if col.short_name.lower() in names
    ]
    values = []
    for row in ds.rows:
        for idx in indexes:
            try:
                values.append(float(row[idx]))
            except ValueError:
                continue
    return sum(values) / len(values) if values else None


def extract_location(ds: TabularDataset) -> GeoName:
    """Experiment location from header keys, with column-mean coordinates.

    A "Location" header wins; otherwise the tail of the "Event(s)" value is
    used (its "Location: X" segment when present, else the last
    '*'-separated segment). Raises NoLocationData when neither a name nor
    coordinates can be found.
    """
    name = ds.header("Location") or ""
    if not name:
        events = ds.header("Event(s)") or ds.header("Events") or ""
        if events:
            segments = [segment.strip() for segment in events.split("*")]
            for segment in segments:
                if segment.lower().startswith("location:"):
                    name = segment.split(":", 1)[1].strip()
                    break
            else:
                name = segments[-1]
    latitude = _header_float(ds, "Latitude")
    longitude = _header_float(ds, "Longitude")
    if latitude is None:
        latitude = _mean_column(ds, ("latitude", "lat"))
    if longitude is None:
        longitude = _mean_column(ds, ("longitude", "lon", "long"))
    if not name and latitude is None and longitude is None:
        raise NoLocationData("no location header key and no coordinate columns")
    return GeoName(name=name, latitude=latitude, longitude=longitude)


def _header_float(ds: TabularDataset, key: str) -> Optional[float]:
    value = ds.header(key)
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        return None


def analyze_dataset(
    doi: Doi, data: bytes | str, aliases: Optional[dict[str, str]] = None
) -> ExperimentDetails:
    """Full content analysis of one dataset into ExperimentDetails.

    Temporal bounds and location are optional: datasets without them still
    yield their parameters.
    """
    ds = parse_tabular(data)
    parameters = tuple(d.name for d in extract_parameters(ds, aliases))
    try:
        bounds = extract_temporal_bounds(ds)
        start, end = bounds.start, bounds.end
    except NoTemporalData:
        start = end = None
    try:
        location = extract_location(ds).name
    except NoLocationData:
        location = ""
    return ExperimentDetails(
        dataset_doi=doi,
        parameters=parameters,
        temporal_start=start,
        temporal_end=end,
        location=location,
    )
