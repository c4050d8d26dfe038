import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = []


def record(criterion: int, title: str, passed: bool, detail: str = "") -> bool:
    """Store one acceptance verdict line; the caller still asserts."""
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append((criterion, f"[{status}] criterion {criterion}: {title}" + (f" ({detail})" if detail else "")))
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES, key=lambda item: item[0]):
            terminalreporter.write_line(line)
