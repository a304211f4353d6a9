"""Line-delimited JSON helpers used by every file interface."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Union

__all__ = ["append_jsonl", "read_jsonl", "write_jsonl"]


def read_jsonl(path: Union[str, Path]) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records


def write_jsonl(path: Union[str, Path], records: Iterable[dict]) -> None:
    lines = [json.dumps(record, ensure_ascii=False, sort_keys=True)
             for record in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def append_jsonl(path: Union[str, Path], record: dict) -> None:
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
        handle.flush()
