import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

_VERDICTS = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store a one-line acceptance verdict for the terminal summary."""
    _VERDICTS[criterion] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        ok, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
