"""Structured check results and their JSON-lines serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

PASS = "pass"
FAIL = "fail"
SKIPPED = "skipped"


def _clean(value: Any) -> Any:
    """Convert numpy scalars/arrays to plain JSON types; non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one numerical identity check.

    ``verdict`` is ``pass`` iff ``max_residual < tolerance``; skipped reports
    carry their reason in ``notes["reason"]``.
    """

    check_name: str
    anchor: str
    points_sampled: int
    max_residual: float
    mean_residual: float
    tolerance: float
    verdict: str
    notes: dict = field(default_factory=dict)

    @classmethod
    def from_residuals(cls, check_name, anchor, residuals, tolerance, notes=None):
        """Build a report from per-sample residuals (any shape; NaN counts as failure)."""
        res = np.asarray(residuals, dtype=float).ravel()
        if res.size == 0:
            return cls.skipped(check_name, anchor, "no residuals evaluated", tolerance)
        res = np.where(np.isnan(res), np.inf, res)
        max_r = float(res.max())
        mean_r = float(res.mean())
        verdict = PASS if max_r < tolerance else FAIL
        return cls(check_name, anchor, int(res.size), max_r, mean_r, float(tolerance), verdict, dict(notes or {}))

    @classmethod
    def skipped(cls, check_name, anchor, reason, tolerance=0.0, notes=None):
        n = dict(notes or {})
        n["reason"] = reason
        return cls(check_name, anchor, 0, 0.0, 0.0, float(tolerance), SKIPPED, n)

    @classmethod
    def failed(cls, check_name, anchor, reason, tolerance=0.0, notes=None):
        """A check that could not be evaluated because a precondition raised."""
        n = dict(notes or {})
        n["error"] = reason
        return cls(check_name, anchor, 0, math.inf, math.inf, float(tolerance), FAIL, n)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def merge(self, other: CheckReport) -> CheckReport:
        """Combine two reports of the same check (associative, commutative)."""
        if other.check_name != self.check_name:
            raise ValueError(f"cannot merge {self.check_name!r} with {other.check_name!r}")
        if self.verdict == SKIPPED:
            return other
        if other.verdict == SKIPPED:
            return self
        n = self.points_sampled + other.points_sampled
        mean = (
            (self.mean_residual * self.points_sampled + other.mean_residual * other.points_sampled) / n
            if n
            else max(self.mean_residual, other.mean_residual)
        )
        max_r = max(self.max_residual, other.max_residual)
        tol = min(self.tolerance, other.tolerance)
        either_failed = FAIL in (self.verdict, other.verdict)
        verdict = FAIL if either_failed or not max_r < tol else PASS
        notes = {**other.notes, **self.notes}
        return CheckReport(self.check_name, self.anchor, n, max_r, mean, tol, verdict, notes)

    def to_dict(self) -> dict:
        return {
            "check": self.check_name,
            "anchor": self.anchor,
            "samples": self.points_sampled,
            "max_residual": _clean(self.max_residual),
            "mean_residual": _clean(self.mean_residual),
            "tol": _clean(self.tolerance),
            "verdict": self.verdict,
            "notes": _clean(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_text(self) -> str:
        return (
            f"{self.verdict.upper():7s} {self.check_name:32s} max={self.max_residual:.3e} "
            f"mean={self.mean_residual:.3e} tol={self.tolerance:.1e} n={self.points_sampled}"
        )


def merge_all(reports):
    """Fold a non-empty iterable of same-named reports."""
    reports = list(reports)
    out = reports[0]
    for r in reports[1:]:
        out = out.merge(r)
    return out
