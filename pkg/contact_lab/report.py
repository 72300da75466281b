"""
Scenario reports. Every check carries its measured value and the bound it
was held to; diagnostic checks are shown but never count as failures.
Text and JSON renderings are produced from the same RunReport.
"""

import dataclasses
import json
import math
from typing import Any, Optional

import tabulate

@dataclasses.dataclass(frozen=True)
class Check:
    name: str
    passed: Optional[bool]
    value: Any = None
    bound: Any = None
    detail: str = ""
    diagnostic: bool = False

    @classmethod
    def info(cls, name, value=None, bound=None, detail=""):
        """A reported measurement with no pass/fail verdict."""
        return cls(name, None, value, bound, detail, diagnostic=True)

    @property
    def status(self):
        if self.diagnostic:
            return "info"
        return "pass" if self.passed else "FAIL"

def _plain(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if hasattr(v, "item"):
        return _plain(v.item())
    return v

def _cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if v is None:
        return ""
    return str(v)

@dataclasses.dataclass
class RunReport:
    scenario: str
    checks: list
    config: dict
    versions: dict
    artefacts: list = dataclasses.field(default_factory=list)
    error: Optional[str] = None

    @property
    def failures(self):
        return [c for c in self.checks if not c.diagnostic and not c.passed]

    @property
    def passed(self):
        return self.error is None and not self.failures

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "failures": [c.name for c in self.failures],
            "checks": [
                {
                    "name": c.name, "status": c.status,
                    "value": _plain(c.value), "bound": _plain(c.bound),
                    "detail": c.detail,
                }
                for c in self.checks
            ],
            "config": _plain(self.config),
            "versions": self.versions,
            "artefacts": list(self.artefacts),
            "error": self.error,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=4)

    def to_text(self):

        rows = [
            (c.name, c.status, _cell(c.value), _cell(c.bound), c.detail)
            for c in self.checks
        ]

        parts = [
            f"Scenario: {self.scenario}",
            "",
            tabulate.tabulate(
                rows, tablefmt="pretty",
                headers=["check", "status", "value", "bound", "detail"],
                maxcolwidths=[None, None, None, None, 50],
                stralign="left",
            ),
            "",
            f"Result: {'pass' if self.passed else 'FAIL'} "
            f"({len(self.failures)} failing of {len(self.checks)})",
        ]

        if self.error:
            parts.append(f"Error: {self.error}")

        parts += ["", "Config:"]
        parts += [f"  {k}: {_plain(v)}" for k, v in self.config.items()]
        parts += ["", "Versions:"]
        parts += [f"  {k}: {v}" for k, v in self.versions.items()]

        return "\n".join(parts) + "\n"
