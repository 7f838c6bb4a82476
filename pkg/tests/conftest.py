from __future__ import annotations

import pytest

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def criterion(capsys):
    """Record and print a PASS/FAIL line, then fail the test if the check failed."""

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
