"""Shared fixtures; collects acceptance-criterion verdicts for the terminal summary."""
import pytest

_VERDICTS: dict = {}


@pytest.fixture
def record_criterion():
    """Call ``record_criterion(name, passed, detail)`` before asserting a criterion."""

    def record(name: str, passed: bool, detail: str = "") -> None:
        _VERDICTS[name] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_VERDICTS, key=lambda s: int(s[2:]) if s[2:].isdigit() else 0):
        passed, detail = _VERDICTS[name]
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'}  {detail}")
