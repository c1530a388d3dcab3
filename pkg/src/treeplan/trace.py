"""Structured run traces: one JSON object per line, streamed as written.

Every artifact opens with a header record carrying the seed and config so
runs are attributable; planners emit flat expansion records and nested
sub-planner records (level, action id, result tags, sizes). The format is
line-diffable and renderers consume it without loading whole files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable


def _jsonable(value: Any):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):  # numpy scalars
        return value.item()
    if hasattr(value, "tolist"):
        return value.tolist()
    return repr(value)


class TraceWriter:
    """Append-only JSONL sink; context-manages the underlying file."""

    def __init__(self, path: str | Path, header: dict | None = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")
        if header is not None:
            self.write({"type": "header", **header})

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(_jsonable(record), sort_keys=True))
        self._fh.write("\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __call__(self, record: dict) -> None:
        self.write(record)


class TraceBuffer:
    """In-memory sink with the same calling convention, for tests."""

    def __init__(self):
        self.records: list[dict] = []

    def __call__(self, record: dict) -> None:
        self.records.append(_jsonable(record))


def read_trace(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
