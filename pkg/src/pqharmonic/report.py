"""Run reports with a canonical JSON form.

Floats are rounded to 12 significant digits and keys are sorted, so parsing
a report and serializing it again reproduces the same bytes.  Non-finite
numbers are stored as the strings ``"NaN"``, ``"Infinity"`` and
``"-Infinity"``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

SIG_DIGITS = 12
PASS, FAIL, SKIP = "pass", "fail", "skip"


def canonical(value):
    """Recursively round floats and convert numpy containers to plain JSON types."""
    if isinstance(value, dict):
        return {str(k): canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [canonical(v) for v in value]
    if isinstance(value, np.ndarray):
        return canonical(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        x = float(f"{x:.{SIG_DIGITS}g}")
        return 0.0 if x == 0 else x
    return value


def dumps(obj) -> str:
    return json.dumps(canonical(obj), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


@dataclass
class CheckRecord:
    name: str
    computed: object = None
    expected: object = None
    abs_error: float | None = None
    rel_error: float | None = None
    tolerance: float | None = None
    status: str = PASS
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status != FAIL


def _max_abs(a) -> float:
    arr = np.abs(np.asarray(a, dtype=float))
    return float(np.max(arr)) if arr.size else 0.0


def compare(name: str, computed, expected, tolerance: float, mode: str = "rel",
            note: str = "") -> CheckRecord:
    """Check ``computed`` against ``expected`` in the max norm.

    ``mode="rel"`` divides by ``max|expected|`` (falling back to the absolute
    error when the expected value is identically 0); ``mode="abs"`` compares
    the absolute error directly.
    """
    c = np.asarray(computed, dtype=float)
    e = np.asarray(expected, dtype=float)
    err = _max_abs(c - e)
    scale = _max_abs(e)
    rel = err / scale if scale > 0 else err
    measure = err if mode == "abs" else rel
    ok = bool(np.isfinite(measure) and measure <= tolerance)
    return CheckRecord(name, c, e, err, rel, tolerance, PASS if ok else FAIL, note)


def skipped(name: str, reason: str) -> CheckRecord:
    return CheckRecord(name, status=SKIP, note=reason)


@dataclass
class RunReport:
    command: list
    params: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    duration: float = 0.0

    @property
    def status(self) -> str:
        return FAIL if any(c.status == FAIL for c in self.checks) else PASS

    def add(self, record: CheckRecord) -> CheckRecord:
        self.checks.append(record)
        return record

    def to_dict(self) -> dict:
        return {
            "command": list(self.command),
            "params": self.params,
            "checks": [asdict(c) for c in self.checks],
            "values": self.values,
            "status": self.status,
            "duration": self.duration,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        checks = [CheckRecord(**c) for c in data.get("checks", [])]
        report = cls(list(data["command"]), data.get("params", {}), checks,
                     data.get("values", {}), data.get("duration", 0.0))
        stored = data.get("status")
        if stored is not None and stored != report.status:
            raise ValueError(f"stored status {stored!r} contradicts the check records")
        return report

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    def render_text(self) -> str:
        lines = ["command: " + " ".join(str(c) for c in self.command)]
        if self.params:
            lines.append("params:  " + ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(self.params.items())))
        for k, v in sorted(self.values.items()):
            lines.append(f"  {k:<14} {_fmt(v)}")
        if self.checks:
            width = max(len(c.name) for c in self.checks)
            for c in self.checks:
                err = "" if c.rel_error is None else f"rel={_fmt(c.rel_error)} abs={_fmt(c.abs_error)}"
                tol = "" if c.tolerance is None else f"tol={_fmt(c.tolerance)}"
                extra = f"  ({c.note})" if c.note else ""
                lines.append(f"  [{c.status.upper():4}] {c.name:<{width}}  {err} {tol}{extra}".rstrip())
        lines.append(f"status: {self.status.upper()}  ({_fmt(self.duration)} s)")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    v = canonical(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "(" + ", ".join(_fmt(x) for x in v) + ")"
    return str(v)
