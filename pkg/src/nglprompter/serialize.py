"""Canonical JSON: sorted keys, floats rounded to 6 significant digits."""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any


def _canon(obj: Any) -> Any:
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite float {obj} cannot be serialized")
        rounded = float(f"{obj:.6g}")
        return 0.0 if rounded == 0 else rounded
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if hasattr(obj, "to_json"):
        return _canon(obj.to_json())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    return json.dumps(_canon(obj), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def content_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("ascii")).hexdigest()[:16]
