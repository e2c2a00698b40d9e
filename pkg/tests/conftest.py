import pytest

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def report():
    """Record one acceptance verdict; printed again in the terminal summary."""
    def _record(number: int, ok: bool, detail: str) -> None:
        _ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} {detail}")
