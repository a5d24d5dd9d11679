"""CSV and JSON sidecar emission.

Floats are written with ``format(x, ".17g")`` (round-trip exact) and
negative zero is written as ``0``, so identical values always produce
identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .. import __version__


def git_blob_sha1(data: bytes) -> str:
    """Content hash as computed by ``git hash-object``."""
    h = hashlib.sha1(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def format_value(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    if isinstance(x, float) or hasattr(x, "dtype"):
        x = float(x)
        if x == 0:
            return "0"
        if math.isnan(x):
            return "nan"
        return format(x, ".17g")
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row length differs from header")
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path: Path, header, rows) -> str:
    text = csv_text(header, rows)
    path.write_text(text)
    return git_blob_sha1(text.encode())


def write_sidecar(path: Path, command: str, config: dict, inputs: dict[str, bytes], outputs: dict[str, str], extra=None):
    doc = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {name: git_blob_sha1(data) for name, data in sorted(inputs.items())},
        "outputs": outputs,
    }
    if extra:
        doc["results"] = extra
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")
