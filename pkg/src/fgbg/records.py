"""Line-delimited JSON record files (one object per line, UTF-8)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from .errors import RecordError


def write_records(path: str | Path, records: Iterable[dict]) -> int:
    """Write records as JSONL; returns the number of lines written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
            n += 1
    return n


def read_records(path: str | Path) -> Iterator[dict]:
    """Yield records from a JSONL file; malformed lines raise RecordError."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{lineno}: invalid record: {exc}") from exc
            if not isinstance(obj, dict):
                raise RecordError(f"{path}:{lineno}: record is not an object")
            yield obj
