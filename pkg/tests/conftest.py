import pytest

# (criterion number, title, passed, detail) lines collected by the acceptance suite
CRITERIA: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def criterion(capsys):
    """Record and print one PASS/FAIL line, then fail the test if the check did not hold."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        CRITERIA.append((number, title, bool(ok), detail))
        with capsys.disabled():
            print(f"\ncriterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}", flush=True)
        assert ok, f"criterion {number} ({title}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}")
