"""CSV output with a fixed dialect: comma separated, '.' decimal, 17
significant digits, header row, LF line endings.  The 17-digit format makes
float round-trips bit-stable, which golden files rely on."""

from __future__ import annotations

import math
from pathlib import Path


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.17g}"
    return str(value)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(str(h) for h in header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")
