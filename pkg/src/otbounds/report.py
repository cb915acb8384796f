"""Verification records shared by every check."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

SCHEMA_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class BoundReport:
    """Outcome of one executable check.

    ``constant`` and ``exponent`` are whatever the check fits (a sup ratio,
    a log-log slope, ...); ``worst_margin`` is negative exactly when some
    probe violates the checked inequality.
    """

    name: str
    statement: str
    passed: bool
    constant: float = float("nan")
    exponent: float = float("nan")
    exponent_band: tuple[float, float] = (float("nan"), float("nan"))
    worst_point: Any = None
    worst_margin: float = float("nan")
    tolerance: float = 0.0
    n_samples: int = 0
    seed: int | None = None
    wall_clock: float = 0.0
    details: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        self.passed = bool(self.passed)
        lo, hi = self.exponent_band
        if not (math.isnan(lo) or math.isnan(hi)) and lo > hi:
            raise ValueError("exponent band is empty")

    def to_dict(self):
        out = _jsonable(asdict(self))
        out["schema_version"] = SCHEMA_VERSION
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data.pop("schema_version", None)
        for key in ("constant", "exponent", "worst_margin"):
            if isinstance(data.get(key), str):
                data[key] = float(data[key])
        if "exponent_band" in data:
            data["exponent_band"] = tuple(float(v) for v in data["exponent_band"])
        return cls(**data)
