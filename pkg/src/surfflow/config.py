"""Flat key = value run configuration.

The format is plain text: one ``key = value`` pair per line, ``#``
starts a comment, blank lines are ignored.  Unknown keys are rejected so
typos fail loudly instead of silently using a default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import ParseError

__all__ = ["RunConfig", "parse_config", "load_config"]


@dataclass
class RunConfig:
    """Validated options for one simulation run."""

    scenario: str
    h: Optional[float] = None
    dt: Optional[float] = None
    t_end: Optional[float] = None
    eta: Optional[float] = None
    rho: Optional[float] = None
    output_interval: int = 0          # 0 = auto (<= 200 snapshots)
    seed: int = 0
    solver_tol: float = 1e-8
    threads: int = 1
    output_dir: Optional[str] = None
    overrides: dict = field(default_factory=dict)


_POSITIVE = {"h", "dt", "t_end", "eta", "rho", "solver_tol"}
_FLOAT_KEYS = _POSITIVE
_INT_KEYS = {"output_interval", "seed", "threads"}
_STR_KEYS = {"scenario", "output_dir"}


def parse_config(text: str) -> RunConfig:
    """Parse config text; raises ParseError with a line number on bad input."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}",
                             line=lineno)
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in _FLOAT_KEYS:
            try:
                num = float(val)
            except ValueError:
                raise ParseError(f"{key}: not a number: {val!r}", line=lineno)
            if key in _POSITIVE and num <= 0:
                raise ParseError(f"{key} must be positive, got {num}",
                                 line=lineno)
            values[key] = num
        elif key in _INT_KEYS:
            try:
                num = int(val)
            except ValueError:
                raise ParseError(f"{key}: not an integer: {val!r}",
                                 line=lineno)
            if num < 0 or (key == "threads" and num < 1):
                raise ParseError(f"{key}: invalid value {num}", line=lineno)
            values[key] = num
        elif key in _STR_KEYS:
            if not val:
                raise ParseError(f"{key}: empty value", line=lineno)
            values[key] = val
        else:
            raise ParseError(f"unknown key {key!r}", line=lineno)
    if "scenario" not in values:
        raise ParseError("config must set 'scenario'")
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read())
