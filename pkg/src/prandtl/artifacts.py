"""Machine-readable artifact writers.

CSV: comma-separated, header row, LF endings, floats at 17 significant
digits.  JSON: UTF-8, stable key order, trailing newline.
"""

from __future__ import annotations

import json
from pathlib import Path


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path, header, columns) -> None:
    cols = [list(c) for c in columns]
    n = len(cols[0])
    assert all(len(c) == n for c in cols)
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(fmt17(c[i]) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8",
                          newline="\n")


def write_json(path, obj) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8", newline="\n")


def write_jsonl(path, rows) -> None:
    lines = [json.dumps(r, sort_keys=True, ensure_ascii=False) for r in rows]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8", newline="\n")
