from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # 'error' | 'warning'
    code: str
    message: str
    line: int = 0
    column: int = 0
    label: Optional[str] = None
    source: Optional[str] = None

    def __str__(self) -> str:
        where = f"{self.source}:" if self.source else ""
        where += f"{self.line}:{self.column}: " if self.line else (" " if where else "")
        lbl = f" [@{self.label}]" if self.label else ""
        return f"{where}{self.severity} {self.code}: {self.message}{lbl}"


class VokError(Exception):
    """Base error; ``code`` is a stable identifier such as ``E_AXIOM_FAILED``."""

    def __init__(self, code: str, message: str, label: Optional[str] = None, **detail):
        super().__init__(f"{code}: {message}" + (f" [@{label}]" if label else ""))
        self.code = code
        self.message = message
        self.label = label
        self.detail = detail


class ParseError(VokError):
    def __init__(self, diagnostics: list):
        first = diagnostics[0]
        super().__init__(first.code, "; ".join(str(d) for d in diagnostics), first.label)
        self.diagnostics = list(diagnostics)


class EvalError(VokError):
    pass


class DiagnosticsError(VokError):
    """Raised when loading or instantiating produced error diagnostics."""

    def __init__(self, diagnostics: list):
        first = diagnostics[0]
        super().__init__(first.code, "; ".join(str(d) for d in diagnostics), first.label)
        self.diagnostics = list(diagnostics)
