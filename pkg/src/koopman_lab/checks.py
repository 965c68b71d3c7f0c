"""Pass/fail result shared by the checkers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class CheckResult:
    passed: bool
    witness: dict[str, Any] | None = None
    residual: float = 0.0
    note: str = ""
    details: dict[str, Any] = field(default_factory=dict)

    def __bool__(self):
        return self.passed

    def as_dict(self) -> dict:
        out = {"passed": self.passed, "residual": self.residual, "witness": self.witness}
        if self.note:
            out["note"] = self.note
        if self.details:
            out["details"] = self.details
        return out
