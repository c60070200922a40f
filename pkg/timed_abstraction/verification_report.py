"""Verification Report Module

This module provides the Verdict record produced by every check and a
session report that collects verdicts, steps, errors and warnings.
"""

__all__ = ["Verdict", "VerificationReport", "VERDICT_KINDS", "to_jsonable"]

import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any

import numpy as np

VERDICT_KINDS = (
    "nonincreasing",
    "sound",
    "complete",
    "levelset_sync",
    "critical_points",
    "manifold_containment",
    "invariance",
)


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays, tuples and infinities into JSON-friendly values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple | set | frozenset):
        items = sorted(value, key=repr) if isinstance(value, set | frozenset) else value
        return [to_jsonable(v) for v in items]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, float | np.floating):
        number = float(value)
        if math.isinf(number):
            return "inf" if number > 0 else "-inf"
        if math.isnan(number):
            return "nan"
        return number
    return value


@dataclass
class Verdict:
    """
    Outcome of one verification check.

    Attributes:
        kind: Which check produced the verdict (see VERDICT_KINDS)
        passed: Whether the check passed
        witnesses: Points, times or values explaining a failure (or a proper-containment witness)
        tolerances: Numeric tolerances the check used
        coverage: What was sampled
        status: "pass", "fail", or a non-applicability status such as
            "critical_value", "level_set_empty", "hypothesis_not_met"
        details: Additional check-specific data
    """

    kind: str
    passed: bool
    witnesses: list[dict[str, Any]] = field(default_factory=list)
    tolerances: dict[str, float] = field(default_factory=dict)
    coverage: str = ""
    status: str = ""
    details: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in VERDICT_KINDS:
            raise ValueError(f"Unknown verdict kind: {self.kind}")
        if not self.status:
            self.status = "pass" if self.passed else "fail"
        if self.status == "fail" and not self.witnesses:
            raise ValueError(f"Failing {self.kind} verdict must carry at least one witness")

    @property
    def applicable(self) -> bool:
        return self.status in ("pass", "fail")

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable(
            {
                "kind": self.kind,
                "pass": self.passed,
                "status": self.status,
                "witnesses": self.witnesses,
                "tolerances": self.tolerances,
                "coverage": self.coverage,
                "details": self.details,
            }
        )


class VerificationReport:
    """
    Handler for generating verification reports.

    Tracks the steps of a verification session and the verdicts it produced.
    """

    def __init__(self, model: str | None = None):
        """
        Initialize the verification report.

        Args:
            model: Optional name or path of the model being verified
        """
        now = datetime.now()
        self.session_id = now.strftime("%Y%m%d_%H%M%S")
        self.timestamp = now.isoformat()
        self.start_time = now
        self.steps: list[dict[str, Any]] = []
        self.verdicts: list[Verdict] = []

        self.report_data: dict[str, Any] = {
            "session_id": self.session_id,
            "timestamp": self.timestamp,
            "model": model,
            "verification_start": self.timestamp,
            "verification_end": None,
            "verification_duration_seconds": 0,
            "steps": self.steps,
            "errors": [],
            "warnings": [],
            "success": False,
        }

    def start_verification(self, **kwargs) -> None:
        """Mark the start of verification, recording the options used."""
        self.start_time = datetime.now()
        self.report_data["verification_start"] = self.start_time.isoformat()
        self.report_data["options"] = to_jsonable(kwargs)

    def end_verification(self, success: bool | None = None) -> None:
        """
        Mark the end of verification.

        Args:
            success: Overall outcome; defaults to "every verdict passed and no errors"
        """
        end_time = datetime.now()
        if success is None:
            success = self.all_passed
        self.report_data["verification_end"] = end_time.isoformat()
        self.report_data["success"] = success
        duration = (end_time - self.start_time).total_seconds()
        self.report_data["verification_duration_seconds"] = round(duration, 2)

    @property
    def duration_seconds(self) -> float:
        """Get verification duration in seconds."""
        if self.report_data["verification_end"]:
            return self.report_data["verification_duration_seconds"]
        return round((datetime.now() - self.start_time).total_seconds(), 2)

    @property
    def all_passed(self) -> bool:
        return not self.report_data["errors"] and all(v.passed or not v.applicable for v in self.verdicts)

    def add_step(self, step_name: str, status: str, details: str | None = None) -> None:
        """
        Add a verification step to the report.

        Args:
            step_name: Name of the step
            status: Status (success, warning, error)
            details: Optional details about the step
        """
        self.steps.append(
            {"name": step_name, "status": status, "details": details, "timestamp": datetime.now().isoformat()}
        )

    def add_verdict(self, verdict: Verdict, label: str | None = None) -> None:
        """Record a verdict; ``label`` distinguishes several verdicts of the same kind."""
        if label is not None:
            verdict.details.setdefault("label", label)
        self.verdicts.append(verdict)

    def add_error(self, error: str, step: str | None = None) -> None:
        self.report_data["errors"].append({"message": error, "step": step, "timestamp": datetime.now().isoformat()})

    def add_warning(self, warning: str, step: str | None = None) -> None:
        self.report_data["warnings"].append({"message": warning, "step": step, "timestamp": datetime.now().isoformat()})

    def verdicts_dict(self) -> list[dict[str, Any]]:
        """Verdict payload without timestamps; identical across runs with the same seed."""
        return [verdict.to_dict() for verdict in self.verdicts]

    def get_summary(self) -> dict[str, Any]:
        """
        Get verification summary.

        Returns:
            Dictionary with summary statistics
        """
        by_kind: dict[str, dict[str, int]] = {}
        for verdict in self.verdicts:
            counts = by_kind.setdefault(verdict.kind, {"pass": 0, "fail": 0, "not_applicable": 0})
            if not verdict.applicable:
                counts["not_applicable"] += 1
            elif verdict.passed:
                counts["pass"] += 1
            else:
                counts["fail"] += 1

        return {
            "success": self.report_data["success"],
            "duration_seconds": self.report_data["verification_duration_seconds"],
            "total_verdicts": len(self.verdicts),
            "failed_verdicts": sum(1 for v in self.verdicts if v.applicable and not v.passed),
            "verdicts_by_kind": by_kind,
            "errors": len(self.report_data["errors"]),
            "warnings": len(self.report_data["warnings"]),
        }

    def _render(self, console: bool) -> list[str]:
        """Report lines shared by the console summary and the text file; ``console`` adds icons."""
        summary = self.get_summary()
        rule = "=" * 60
        verdict_word = "PASSED" if summary["success"] else "FAILED"

        def mark(icon: str) -> str:
            return f"{icon} " if console else ""

        lines = [rule, f"{mark('📊')}VERIFICATION REPORT", rule, ""]
        lines.append(f"{mark('✅' if summary['success'] else '❌')}Status: {verdict_word}")
        lines.append(f"{mark('⏱️')}Duration: {summary['duration_seconds']}s")
        lines.append(
            f"Verdicts: {summary['total_verdicts']} ({summary['failed_verdicts']} failed), "
            f"errors: {summary['errors']}, warnings: {summary['warnings']}"
        )

        if self.verdicts:
            lines.append("")
        for verdict in self.verdicts:
            label = verdict.details.get("label")
            name = f"{verdict.kind} [{label}]" if label else verdict.kind
            icon = "✅" if verdict.passed else "❌" if verdict.applicable else "⚠️"
            lines.append(f"  {mark(icon)}{name}: {verdict.status}")
            if verdict.coverage:
                lines.append(f"      coverage: {verdict.coverage}")
            if verdict.status == "fail":
                lines.append(f"      witness: {to_jsonable(verdict.witnesses[0])}")

        for heading, icon, entries in (
            ("Errors", "❌", self.report_data["errors"]),
            ("Warnings", "⚠️", self.report_data["warnings"]),
        ):
            if not entries:
                continue
            lines.extend(["", f"{mark(icon)}{heading}:"])
            lines.extend(f"  - {e['message']}" + (f" ({e['step']})" if e["step"] else "") for e in entries)

        if console and self.steps:
            lines.extend(["", "📋 Verification Steps:"])
            step_icons = {"success": "✅", "warning": "⚠️"}
            for step in self.steps:
                lines.append(f"  {step_icons.get(step['status'], '❌')} {step['name']}")
                if step["details"]:
                    lines.append(f"      {step['details']}")

        lines.extend(["", rule])
        return lines

    def print_report(self) -> None:
        """Print a formatted verification report."""
        print()
        for line in self._render(console=True):
            print(line)

    def to_dict(self) -> dict[str, Any]:
        """Session envelope plus the verdict payload and summary."""
        data = self.report_data.copy()
        data["verdicts"] = self.verdicts_dict()
        data["summary"] = self.get_summary()
        return data

    def save_report(self, output_path: str | None = None, format: str = "json") -> str:
        """
        Write the report as JSON or plain text.

        Args:
            output_path: Target file (default: verification_report_{session_id}.json or .txt)
            format: 'json' or 'text'

        Returns:
            The path written
        """
        if format not in ("json", "text"):
            raise ValueError(f"Unsupported format: {format}")
        if output_path is None:
            output_path = f"verification_report_{self.session_id}.{'json' if format == 'json' else 'txt'}"

        target = Path(output_path)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            if format == "json":
                payload = json.dumps(self.to_dict(), indent=2)
            else:
                payload = "\n".join(self._render(console=False)) + "\n"
            target.write_text(payload, encoding="utf-8")
        except OSError as e:
            print(f"❌ Could not write verification report {output_path}: {e}")
            raise

        print(f"💾 Verification report written to {output_path}")
        return output_path
