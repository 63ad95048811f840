"""Structured pass/fail reports for verification runs.

A report is a flat list of named checks plus enough metadata to rerun
them.  Reports serialize to JSON with a fixed schema; two runs of the
same command with the same inputs must produce identical reports except
for the wall-time field, which `canonical_dict` strips before
comparison.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

SCHEMA_VERSION = 1

# Every check id carries the module that owns its semantics.  The table
# is the single source of truth: results with unregistered ids are
# rejected, and two modules can never claim the same id.
_CHECK_OWNERS = {
    "kernel.truncation_bound": "kernel",
    "kernel.symmetry": "kernel",
    "kernel.parity": "kernel",
    "kernel.axis_zeros": "kernel",
    "kernel.cache_roundtrip": "kernel",
    "kernel.cross_backend": "kernel",
    "kernel.fourier_entry": "kernel",
    "spectral.cross_route": "spectral",
    "spectral.gap_identity": "spectral",
    "spectral.psd": "spectral",
    "spectral.zero_set": "spectral",
    "spectral.dispersion_margin": "spectral",
    "spectral.zero_curvature": "spectral",
    "bounds.corner_exact": "bounds",
    "bounds.ordering": "bounds",
    "bounds.lro_positive": "bounds",
    "bounds.cd_halfpoint": "bounds",
    "rp.energy_routes": "rp",
    "rp.row_sums": "rp",
    "rp.ground_state": "rp",
    "rp.cross_symmetric": "rp",
    "rp.cross_psd": "rp",
    "rp.chessboard": "rp",
    "rp.gauge_identity": "rp",
    "mc.drift": "mc",
    "mc.parseval": "mc",
    "mc.trace_rule": "mc",
    "mc.component_symmetry": "mc",
    "mc.energy_reference": "mc",
    "mc.ir_diag": "mc",
    "mc.ir_b36": "mc",
    "mc.gaussdom": "mc",
    "mc.gaussdom_null": "mc",
    "mc.lro_bound": "mc",
}


class ReportError(ValueError):
    pass


def check_owner(check_id: str) -> str:
    try:
        return _CHECK_OWNERS[check_id]
    except KeyError:
        raise ReportError(f"unknown check id: {check_id!r}") from None


def registered_checks() -> dict:
    """Copy of the id -> owning module table."""
    return dict(_CHECK_OWNERS)


def _json_safe(value):
    import numpy as np

    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (bool, int, str)) or value is None:
        return value
    if isinstance(value, float):
        return value
    raise ReportError(f"value not JSON-safe: {value!r}")


@dataclass
class CheckResult:
    """Outcome of one named check.

    value is the measured number the check gated on, threshold the gate.
    Comparisons live in the producing module; the report only records
    the verdict so downstream consumers never re-derive pass/fail.
    """

    check_id: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        check_owner(self.check_id)
        self.passed = bool(self.passed)
        if self.value is not None:
            self.value = float(self.value)
        if self.threshold is not None:
            self.threshold = float(self.threshold)
        self.detail = _json_safe(self.detail)

    @property
    def module(self) -> str:
        return check_owner(self.check_id)

    def as_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "module": self.module,
            "passed": self.passed,
            "value": self.value,
            "threshold": self.threshold,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CheckResult":
        owner = check_owner(d["check_id"])
        if d.get("module", owner) != owner:
            raise ReportError(
                f"check {d['check_id']!r} claims module {d['module']!r}, "
                f"registry says {owner!r}"
            )
        return cls(
            check_id=d["check_id"],
            passed=d["passed"],
            value=d.get("value"),
            threshold=d.get("threshold"),
            detail=d.get("detail", {}),
        )


@dataclass
class VerificationReport:
    command: str
    box: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    backend: str = ""
    seconds: float = 0.0
    checks: list = field(default_factory=list)

    def add(self, check: CheckResult) -> None:
        if any(c.check_id == check.check_id for c in self.checks):
            raise ReportError(f"duplicate check id in report: {check.check_id!r}")
        self.checks.append(check)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def n_failed(self) -> int:
        return sum(0 if c.passed else 1 for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "box": _json_safe(self.box),
            "params": _json_safe(self.params),
            "backend": self.backend,
            "seconds": float(self.seconds),
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ReportError(
                f"unsupported report schema: {d.get('schema_version')!r}"
            )
        rep = cls(
            command=d["command"],
            box=d.get("box", {}),
            params=d.get("params", {}),
            backend=d.get("backend", ""),
            seconds=d.get("seconds", 0.0),
        )
        for entry in d.get("checks", []):
            rep.add(CheckResult.from_dict(entry))
        if "passed" in d and bool(d["passed"]) != rep.passed:
            raise ReportError("stored verdict disagrees with stored checks")
        return rep

    def dumps(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "VerificationReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def canonical_dict(report_dict: dict) -> dict:
    """Report dict with the wall-time field removed.

    Two runs are considered identical when their canonical dicts match.
    """
    out = dict(report_dict)
    out.pop("seconds", None)
    return out


def reports_equivalent(a: dict, b: dict) -> bool:
    return canonical_dict(a) == canonical_dict(b)


import math


def _fmt(x) -> str:
    if x is None:
        return "-"
    if not math.isfinite(x):
        return str(x)
    ax = abs(x)
    if x == int(x) and ax < 1e6:
        return f"{x:.1f}"
    if 1e-3 <= ax < 1e5:
        return f"{x:.6g}"
    return f"{x:.3e}"


def render_table(report: VerificationReport) -> str:
    """Fixed-width text table, one line per check."""
    lines = []
    head = f"{report.command}  backend={report.backend}"
    if report.box:
        head += "  " + " ".join(f"{k}={report.box[k]}" for k in sorted(report.box))
    lines.append(head)
    width = max((len(c.check_id) for c in report.checks), default=10)
    for c in report.checks:
        tag = "PASS" if c.passed else "FAIL"
        lines.append(
            f"  [{tag}] {c.check_id:<{width}}  "
            f"value={_fmt(c.value):>12}  threshold={_fmt(c.threshold):>12}"
        )
    n = len(report.checks)
    lines.append(f"  {n - report.n_failed}/{n} checks passed")
    return "\n".join(lines)


def merge_reports(reports: list) -> "VerificationReport":
    """Combine reports from several commands into one summary.

    Check ids repeat across source reports, so merged entries are
    prefixed with their source command to stay unique.
    """
    merged = VerificationReport(command="report")
    backends = sorted({r.backend for r in reports if r.backend})
    merged.backend = ",".join(backends)
    merged.seconds = float(sum(r.seconds for r in reports))
    for rep in reports:
        for c in rep.checks:
            entry = CheckResult(
                check_id=c.check_id,
                passed=c.passed,
                value=c.value,
                threshold=c.threshold,
                detail={**c.detail, "source": rep.command},
            )
            # bypass duplicate-id guard: same check from two sources is fine
            merged.checks.append(entry)
    return merged


def exit_code(report: VerificationReport) -> int:
    return 0 if report.passed else 1
