"""Shared PASS/FAIL lines for the acceptance suite, printed by conftest."""
from __future__ import annotations

LINES: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> bool:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES[n] = line
    print(line)
    return ok
