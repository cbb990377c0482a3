import pytest

_REPORT: dict[str, str] = {}


@pytest.fixture(scope="session")
def report():
    """Record one verdict line per acceptance criterion."""

    def put(key: str, ok: bool, detail: str = ""):
        _REPORT[key] = f"{key}: {'PASS' if ok else 'FAIL'}" + (f"  {detail}" if detail else "")
        print(_REPORT[key])

    return put


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_REPORT, key=lambda k: int(k.split()[1])):
        terminalreporter.write_line(_REPORT[key])
