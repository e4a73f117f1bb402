"""Atomic, byte-deterministic artifact writing (JSON and CSV)."""

import json
import os
import tempfile


def atomic_write_text(path, text: str):
    """Write via a temp file in the same directory, then rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload: dict):
    atomic_write_text(path, json.dumps(payload, indent=1, sort_keys=True) + "\n")


def format_cell(value) -> str:
    """Stable cell formatting: floats via repr (shortest round-trip)."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, rows):
    """Rows are tuples; the first row is the header."""
    lines = [",".join(format_cell(c) for c in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")
