"""Delimited output: header row, '#' metadata comments, round-trippable floats."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__


def fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, np.integer):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        # repr is the shortest string that parses back to the same double
        return "nan" if math.isnan(value) else repr(float(value))
    if value is None:
        return ""
    return str(value)


def render(header: Sequence[str], rows: Iterable[Sequence[Any]],
           metadata: Mapping[str, Any] | None = None, timestamp: bool = True) -> str:
    buf = io.StringIO()
    buf.write(f"# mnac {__version__}\n")
    if timestamp:
        now = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()
        buf.write(f"# generated: {now}\n")
    for key, val in (metadata or {}).items():
        buf.write(f"# {key} = {fmt(val)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write(path, header, rows, metadata=None) -> str:
    text = render(header, rows, metadata)
    if path is None or str(path) == "-":
        return text
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)
    return text


def body(text: str) -> str:
    """Everything except '#' comment lines."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def _parse(cell: str):
    if cell == "":
        return None
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def parse(text: str) -> tuple[dict[str, str], list[dict[str, Any]]]:
    """Split CSV text into (metadata, rows); numeric cells come back as int/float."""
    meta = {}
    lines = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, val = line[1:].partition("=")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        lines.append(line)
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        return meta, []
    return meta, [dict(zip(header, (_parse(c) for c in row))) for row in reader]


def read(path) -> tuple[dict[str, str], list[dict[str, Any]]]:
    return parse(Path(path).read_text())
