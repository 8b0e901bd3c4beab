"""Evaluation records and the JSON-lines metrics stream."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Union


@dataclass
class MetricsRecord:
    task: str
    split: str
    epoch: int
    loss: float
    accuracy: float
    prec1: float
    prec5: float
    per_class: dict = field(default_factory=dict)
    wall_seconds: Optional[float] = None
    seed: int = 0
    config_hash: str = ""
    encoder: str = ""
    dataset_hash: str = ""
    chance: Optional[float] = None
    n: int = 0

    def __post_init__(self):
        for name in ("accuracy", "prec1", "prec5"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.prec1 > self.prec5:
            raise ValueError(f"prec1={self.prec1} exceeds prec5={self.prec5}")

    def to_json(self, timing: bool = False) -> str:
        """One JSON line; wall-clock time is left out unless ``timing`` so reruns compare bitwise."""
        d = asdict(self)
        if not timing:
            d["wall_seconds"] = None
        if isinstance(d["loss"], float) and not math.isfinite(d["loss"]):
            d["loss"] = None
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "MetricsRecord":
        d = json.loads(line)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown fields {sorted(unknown)}")
        if d.get("loss") is None:
            d["loss"] = float("nan")
        return cls(**d)


class MetricsError(ValueError):
    pass


def append_records(path: Union[str, Path], records: Iterable[MetricsRecord], timing: bool = False) -> None:
    with open(path, "a", encoding="utf-8") as f:
        for r in records:
            f.write(r.to_json(timing) + "\n")


def read_records(path: Union[str, Path]) -> list[MetricsRecord]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                out.append(MetricsRecord.from_json(line))
            except (ValueError, TypeError) as exc:
                raise MetricsError(f"{path}:{lineno}: malformed metrics line ({exc})") from None
    return out
