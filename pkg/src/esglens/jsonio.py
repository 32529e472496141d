"""Canonical JSON helpers.

Persistence and golden tests compare files byte for byte, so every dump
goes through one canonical form: sorted keys, compact separators, UTF-8.
"""

from __future__ import annotations

import json
import os
from typing import Any

__all__ = ["canonical_dumps", "read_json_file", "write_json_file"]


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def write_json_file(path: str, obj: Any) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(obj))
        fh.write("\n")


def read_json_file(path: str) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
