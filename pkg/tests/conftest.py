"""Shared pytest hooks.

The acceptance suite registers one result per numbered check; the hook
below prints them as a PASS/FAIL block in the terminal summary so the
outcome of every check is visible in one place even when all tests pass.
"""

from __future__ import annotations

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record_acceptance(num: int, name: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE[num] = (name, bool(ok), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance checks")
    for num in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[num]
        suffix = f"  [{detail}]" if detail else ""
        terminalreporter.write_line(
            f"A{num:02d} {name}: {'PASS' if ok else 'FAIL'}{suffix}"
        )
