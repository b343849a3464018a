import pytest

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance_report():
    def report(number: int, title: str, checks):
        """Record ``checks`` (label, ok, detail) for one criterion and assert them all."""
        ok = all(c[1] for c in checks)
        parts = [f"{label}: {detail} [{'ok' if good else 'FAIL'}]" for label, good, detail in checks]
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): " + "; ".join(parts)
        ACCEPTANCE_LINES[number] = line
        print(line)
        failed = [label for label, good, _ in checks if not good]
        assert ok, f"criterion {number} failed: {', '.join(failed)}"

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
