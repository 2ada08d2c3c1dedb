"""Self-describing outcomes of statistical and pathwise verifications."""
from __future__ import annotations

import json
from dataclasses import dataclass, field


def _jsonable(obj):
    import numpy as np
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


@dataclass
class TestReport:
    """One verification outcome: statistic vs. threshold plus metadata."""

    name: str
    parameters: dict
    statistic: float
    threshold: float
    passed: bool
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": _jsonable(self.parameters),
            "statistic": float(self.statistic),
            "threshold": float(self.threshold),
            "pass": bool(self.passed),
            "metadata": _jsonable(self.metadata),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "TestReport":
        return cls(name=d["name"], parameters=d.get("params", {}),
                   statistic=d["statistic"], threshold=d["threshold"],
                   passed=d["pass"], metadata=d.get("metadata", {}))

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: statistic={self.statistic:.6g} threshold={self.threshold:.6g}"
