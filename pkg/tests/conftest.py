import pytest

_verdicts = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_verdicts] = []


@pytest.fixture
def criterion(request, capsys):
    """``criterion(cid, ok, detail)`` prints and records one PASS/FAIL line, then asserts ``ok``."""
    def check(cid: str, ok: bool, detail: str) -> None:
        line = f"{cid} {'PASS' if ok else 'FAIL'}: {detail}"
        request.config.stash[_verdicts].append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_verdicts, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
