"""Versioned JSON report files."""

from __future__ import annotations

import datetime as _dt
import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1.0"


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_report(path, kind: str, arguments: dict, payload: dict) -> dict:
    """Write ``{schema_version, kind, generated_at, arguments, ...payload}``.

    ``generated_at`` is the only field that varies between identical runs.
    """
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "arguments": arguments,
        **payload,
    }
    Path(path).write_text(json.dumps(doc, default=_default, indent=1, sort_keys=False))
    return doc


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())
