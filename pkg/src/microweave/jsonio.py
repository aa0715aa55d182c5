"""Canonical JSON bytes and atomic file writes, shared by the serializers.

Canonical means: UTF-8, compact separators, no trailing newline, insertion
order preserved (callers build objects in documented field order).  Two
equal in-memory values always serialize to identical bytes.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


def canonical_bytes(obj) -> bytes:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def atomic_write(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over the
    target, so readers never observe a half-written file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
