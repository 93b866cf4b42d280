"""Stable diagnostic codes shared by the translator and the CLI.

Rendered form is ``file:line: severity[CODE]: message`` on stderr; codes
are part of the tool's interface and must not be renumbered or reworded
into other codes once released.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .asmtext import SourceLocation


class Severity(str, Enum):
    NOTE = "note"
    WARNING = "warning"
    ERROR = "error"


# errors
E_ENCODING = "E_ENCODING"
E_PARSE = "E_PARSE"
E_VTYPE_SYNTAX = "E_VTYPE_SYNTAX"
E_FRACTIONAL_LMUL = "E_FRACTIONAL_LMUL"
E_SEW_EXCEEDS_ELEN = "E_SEW_EXCEEDS_ELEN"
E_UNSUPPORTED = "E_UNSUPPORTED"
E_NO_SCRATCH = "E_NO_SCRATCH"
E_EEW_MISMATCH = "E_EEW_MISMATCH"
E_TOOL_MISSING = "E_TOOL_MISSING"

# warnings
W_TAIL_UNDISTURBED = "W_TAIL_UNDISTURBED"
W_MASK_LAYOUT = "W_MASK_LAYOUT"
W_VCSR_SHIM = "W_VCSR_SHIM"
W_EEW_WRAPPED = "W_EEW_WRAPPED"

# notes
N_POLICY_DROPPED = "N_POLICY_DROPPED"
N_REDUNDANT_CONFIG = "N_REDUNDANT_CONFIG"
N_SCRATCH_USED = "N_SCRATCH_USED"
N_REGISTER_CANDIDATE = "N_REGISTER_CANDIDATE"
N_MACRO_OPAQUE = "N_MACRO_OPAQUE"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: Severity
    message: str
    loc: SourceLocation | None = None

    def render(self) -> str:
        where = str(self.loc) if self.loc else "rvvback"
        return f"{where}: {self.severity.value}[{self.code}]: {self.message}"


def error(code: str, message: str, loc: SourceLocation | None = None) -> Diagnostic:
    return Diagnostic(code, Severity.ERROR, message, loc)


def warning(code: str, message: str, loc: SourceLocation | None = None) -> Diagnostic:
    return Diagnostic(code, Severity.WARNING, message, loc)


def note(code: str, message: str, loc: SourceLocation | None = None) -> Diagnostic:
    return Diagnostic(code, Severity.NOTE, message, loc)


def worst_severity(diags) -> Severity | None:
    worst = None
    order = {Severity.NOTE: 0, Severity.WARNING: 1, Severity.ERROR: 2}
    for d in diags:
        if worst is None or order[d.severity] > order[worst]:
            worst = d.severity
    return worst


def has_errors(diags) -> bool:
    return any(d.severity is Severity.ERROR for d in diags)


def has_warnings(diags) -> bool:
    return any(d.severity is Severity.WARNING for d in diags)
