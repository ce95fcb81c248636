"""CSV and file helpers shared by the data, train and cli modules."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def meta_line(meta: dict) -> str:
    return "# meta: " + json.dumps(meta, sort_keys=True, separators=(",", ":"))


def dumps_csv(header: list[str], rows, meta: dict) -> str:
    lines = [meta_line(meta), ",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows, meta) -> Path:
    path = Path(path)
    atomic_write_text(path, dumps_csv(header, rows, meta))
    return path


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Return (meta, header, rows as strings) for a file written by ``write_csv``."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# meta: "):
        raise ValueError(f"{path}: missing '# meta:' provenance line")
    meta = json.loads(lines[0][len("# meta: ") :])
    header = lines[1].split(",")
    rows = [ln.split(",") for ln in lines[2:] if ln]
    return meta, header, rows


def read_numeric_csv(path) -> tuple[dict, list[str], np.ndarray]:
    meta, header, rows = read_csv(path)
    arr = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    return meta, header, arr.reshape(len(rows), len(header))
