"""Readers and writers for observations, truth, diagnostics and report files.

Floats are written with ``repr`` (shortest round-trip decimal), so a write
followed by a read reproduces every value bit for bit.
"""
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Union

from pydantic import BaseModel, ValidationError

from app.exceptions import FileFormatError
from app.models.state import TickOutput
from app.models.types import ObservationRecord
from app.schemas.reports import DiagnosticsRecord

logger = logging.getLogger(__name__)


def sidecar(path: str, suffix: str) -> str:
    """``<path>.<suffix>.json`` next to an output file."""
    return f"{path}.{suffix}.json"


def _float(text: str, path: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise FileFormatError(f"column '{column}': '{text}' is not a number", line=line, path=path)
    if not math.isfinite(value):
        raise FileFormatError(f"column '{column}': value must be finite, got '{text}'", line=line, path=path)
    return value


def _int(text: str, path: str, line: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise FileFormatError(f"column '{column}': '{text}' is not an integer", line=line, path=path)


def _open_rows(path: str):
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as e:
        raise FileFormatError(f"cannot open file: {e}", path=path) from e
    return handle


@dataclass
class Table:
    """A CSV with an integer ``t`` column and named string columns."""

    path: str
    columns: List[str]
    t: List[int] = field(default_factory=list)
    cells: Dict[str, List[str]] = field(default_factory=dict)
    lines: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    def floats(self, column: str) -> List[float]:
        return [_float(v, self.path, line, column) for v, line in zip(self.cells[column], self.lines)]


def read_table(path: str) -> Table:
    """Read a comma-separated file whose first column is a strictly increasing ``t``."""
    with _open_rows(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header:
            raise FileFormatError("missing header", line=1, path=path)
        header = [h.strip() for h in header]
        if header[0] != "t" or len(header) < 2 or len(set(header)) != len(header):
            raise FileFormatError(
                f"header must start with 't' and name distinct columns, got {','.join(header)}",
                line=1, path=path)
        table = Table(path=path, columns=header[1:], cells={c: [] for c in header[1:]})
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise FileFormatError(f"expected {len(header)} cells, got {len(row)}", line=line, path=path)
            t = _int(row[0].strip(), path, line, "t")
            if table.t and t <= table.t[-1]:
                raise FileFormatError(f"t must be strictly increasing, got {t} after {table.t[-1]}",
                                      line=line, path=path)
            table.t.append(t)
            table.lines.append(line)
            for column, cell in zip(table.columns, row[1:]):
                table.cells[column].append(cell.strip())
    return table


def _observation_columns(n: int) -> List[str]:
    return ["y"] + [f"expert_{i}" for i in range(n)]


def read_observations(path: str) -> List[ObservationRecord]:
    """Parse ``t,y,expert_0,...,expert_{N-1}``; errors carry the 1-based line number."""
    table = read_table(path)
    n = len(table.columns) - 1
    if n < 1 or table.columns != _observation_columns(n):
        raise FileFormatError(
            f"observations header must be t,y,expert_0,...,expert_{{N-1}}, got t,{','.join(table.columns)}",
            line=1, path=path)
    ys = table.floats("y")
    experts = [table.floats(f"expert_{i}") for i in range(n)]
    observations = [ObservationRecord(t=t, y=y, predictions=[col[k] for col in experts])
                    for k, (t, y) in enumerate(zip(table.t, ys))]
    logger.info(f"Read {len(observations)} observations of {n} experts from {path}")
    return observations


def write_observations(path: str, observations: Sequence[ObservationRecord]) -> None:
    if not observations:
        raise FileFormatError("refusing to write an observations file without rows", path=path)
    n = observations[0].n
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(",".join(["t"] + _observation_columns(n)) + "\n")
        for obs in observations:
            cells = [str(obs.t), repr(obs.y)] + [repr(float(f)) for f in obs.predictions]
            handle.write(",".join(cells) + "\n")
    logger.info(f"Wrote {len(observations)} observations to {path}")


def write_truth(path: str, ts: Sequence[int], hidden: Sequence[int]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("t,active_expert\n")
        for t, w in zip(ts, hidden):
            handle.write(f"{int(t)},{int(w)}\n")
    logger.info(f"Wrote hidden truth for {len(ts)} ticks to {path}")


def read_truth(path: str) -> List[int]:
    table = read_table(path)
    if table.columns != ["active_expert"]:
        raise FileFormatError("truth header must be t,active_expert", line=1, path=path)
    return [_int(v, path, line, "active_expert") for v, line in zip(table.cells["active_expert"], table.lines)]


def diagnostics_record(output: TickOutput) -> DiagnosticsRecord:
    return DiagnosticsRecord(
        t=output.t,
        y=output.y,
        fused=output.fused,
        estimates=[float(v) for v in output.estimates],
        pi_bar=output.pi_bar.tolist(),
        scores=[float(v) for v in output.scores],
        q=output.q_next.entries.ravel().tolist(),
        floor_events=output.floor_events,
        mixture=None if output.mixture is None else [float(v) for v in output.mixture],
        q_valid=output.q_next.is_valid,
    )


def write_diagnostics(path: str, outputs: Iterable[TickOutput]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as handle:
        for output in outputs:
            handle.write(json.dumps(diagnostics_record(output).model_dump()) + "\n")
            count += 1
    logger.info(f"Wrote {count} diagnostics lines to {path}")
    return count


def read_diagnostics(path: str) -> List[DiagnosticsRecord]:
    records = []
    with _open_rows(path) as handle:
        for line, text in enumerate(handle, start=1):
            if not text.strip():
                continue
            try:
                records.append(DiagnosticsRecord.model_validate(json.loads(text)))
            except json.JSONDecodeError as e:
                raise FileFormatError(f"invalid JSON: {e.msg}", line=line, path=path) from e
            except ValidationError as e:
                raise FileFormatError(f"invalid diagnostics record: {e.errors()[0]['msg']}",
                                      line=line, path=path) from e
    return records


def write_json(path: str, payload: Union[BaseModel, dict]) -> None:
    data = payload.model_dump() if isinstance(payload, BaseModel) else payload
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(json.dumps(data, indent=2) + "\n")
    logger.info(f"Wrote {path}")
