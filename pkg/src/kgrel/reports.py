"""CSV and JSON emission for metric and diagnostic tables."""

from __future__ import annotations

import csv
import json
import math
import os
from typing import Iterable, Mapping, Sequence


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "" if math.isnan(value) else f"{value:.6f}"
    return str(value)


def _jsonable(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):  # numpy scalar
        return _jsonable(value.item())
    return value


def write_csv(
    path: str | os.PathLike,
    records: Sequence[Mapping],
    config: Mapping | None = None,
    columns: Sequence[str] | None = None,
) -> None:
    """Write ``records`` as CSV preceded by ``# key=value`` lines for ``config``."""
    if columns is None:
        columns = list(records[0]) if records else []
    with open(path, "w", encoding="utf-8", newline="") as handle:
        for key, value in (config or {}).items():
            if isinstance(value, (list, tuple)):
                value = " ".join(str(v) for v in value)
            handle.write(f"# {key}={_cell(value)}\n")
        writer = csv.writer(handle, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(columns)
        for rec in records:
            writer.writerow([_cell(rec.get(col)) for col in columns])


def read_csv(path: str | os.PathLike) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Inverse of :func:`write_csv`: returns (config, rows) as strings."""
    config = {}
    with open(path, encoding="utf-8", newline="") as handle:
        lines = handle.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# ") and not body:
            key, _, value = line[2:].partition("=")
            config[key] = value
        else:
            body.append(line)
    return config, list(csv.DictReader(body))


def write_json(path: str | os.PathLike, records: Iterable[Mapping], config: Mapping | None = None, **extra) -> None:
    payload = {"config": _jsonable(dict(config or {})), "rows": _jsonable(list(records))}
    payload.update(_jsonable(extra))
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=False, allow_nan=False)
        handle.write("\n")
