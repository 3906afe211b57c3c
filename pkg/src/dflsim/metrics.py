"""Metrics emission and comparison.

One complete record per line (csv with header, or jsonl), flushed after
every row so a crashed run leaves a parseable prefix. Floats are written
with 17 significant digits, which round-trips every double bit-exactly;
byte-identical files for identical runs are part of the contract, so
nothing here may embed timestamps or environment details.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError
from .trace import TRACE_FIELDS, TraceRow


def _fmt(value: float) -> str:
    return "%.17g" % value


def _fmt_json(value: float) -> str:
    # json.loads accepts these extension tokens; bare "inf" it does not
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return _fmt(value)


def format_row(row: TraceRow, fmt: str) -> str:
    values = row.as_dict()
    if fmt == "csv":
        parts = [str(values["t"])]
        parts += [_fmt(values[name]) for name in TRACE_FIELDS[1:]]
        return ",".join(parts)
    if fmt == "jsonl":
        parts = [f'"t": {values["t"]}']
        parts += [f'"{name}": {_fmt_json(values[name])}' for name in TRACE_FIELDS[1:]]
        return "{" + ", ".join(parts) + "}"
    raise ConfigurationError(f"unknown metrics format {fmt!r}")


class MetricsWriter:
    """Streams trace rows to a file, one flushed line per row."""

    def __init__(self, path: str, fmt: str = "csv"):
        if fmt not in ("csv", "jsonl"):
            raise ConfigurationError(f"unknown metrics format {fmt!r}")
        self.path = path
        self.format = fmt
        self.rows_written = 0
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        if fmt == "csv":
            self._fh.write(",".join(TRACE_FIELDS) + "\n")
            self._fh.flush()

    def write(self, row: TraceRow):
        self._fh.write(format_row(row, self.format) + "\n")
        self._fh.flush()
        self.rows_written += 1

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _row_from_values(values: dict) -> TraceRow:
    missing = [name for name in TRACE_FIELDS if name not in values]
    if missing:
        raise ConfigurationError(f"metrics record is missing fields: {missing}")
    extra = [name for name in values if name not in TRACE_FIELDS]
    if extra:
        raise ConfigurationError(f"metrics record has unknown fields: {extra}")
    return TraceRow(t=int(values["t"]),
                    **{name: float(values[name]) for name in TRACE_FIELDS[1:]})


def read_metrics(path: str) -> list[TraceRow]:
    """Parse a metrics file written by MetricsWriter; the format is sniffed
    from the first line."""
    import json

    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise ConfigurationError(f"metrics file {path} is empty")
    rows = []
    if lines[0].startswith("{"):
        for i, line in enumerate(lines, 1):
            try:
                values = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}:{i}: bad record: {exc}") from exc
            rows.append(_row_from_values(values))
        return rows
    header = lines[0].split(",")
    if tuple(header) != TRACE_FIELDS:
        raise ConfigurationError(
            f"{path}: header {header} does not match the metrics schema")
    for i, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != len(TRACE_FIELDS):
            raise ConfigurationError(f"{path}:{i}: expected {len(TRACE_FIELDS)} fields")
        try:
            values = {name: float(part) for name, part in zip(TRACE_FIELDS, parts)}
        except ValueError as exc:
            raise ConfigurationError(f"{path}:{i}: bad numeric field: {exc}") from exc
        rows.append(_row_from_values(values))
    return rows


@dataclass(frozen=True)
class CompareReport:
    rows: int
    max_deviation: float
    at_t: int | None
    at_field: str | None

    def describe(self) -> str:
        if self.at_field is None:
            return f"compared {self.rows} rows: no deviation"
        return (f"compared {self.rows} rows: max deviation {_fmt(self.max_deviation)} "
                f"at t={self.at_t} field={self.at_field}")


def compare_trajectories(rows_a, rows_b) -> CompareReport:
    """Largest per-field absolute deviation between two equally long traces.

    Two nans in the same slot count as agreement; nan against a number is an
    infinite deviation.
    """
    if len(rows_a) != len(rows_b):
        raise ConfigurationError(
            f"trajectory lengths differ: {len(rows_a)} vs {len(rows_b)}")
    worst = 0.0
    at_t = None
    at_field = None
    for a, b in zip(rows_a, rows_b):
        da, db = a.as_dict(), b.as_dict()
        for name in TRACE_FIELDS:
            va, vb = float(da[name]), float(db[name])
            if math.isnan(va) and math.isnan(vb):
                continue
            dev = abs(va - vb)
            if math.isnan(dev):
                dev = math.inf
            if dev > worst:
                worst = dev
                at_t = a.t
                at_field = name
    return CompareReport(rows=len(rows_a), max_deviation=worst,
                         at_t=at_t, at_field=at_field)
