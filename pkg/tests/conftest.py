import pytest

N_ACCEPTANCE = 9
_lines: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance check, then assert it."""

    def record(num, title, checks, detail=""):
        failed = [label for label, ok in checks if not ok]
        verdict = "FAIL" if failed else "PASS"
        line = f"{verdict}  acceptance {num}: {title}"
        if detail:
            line += f"  [{detail}]"
        if failed:
            line += f"  failed: {'; '.join(failed)}"
        _lines[num] = line
        print(line)
        assert not failed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _lines:
        return
    terminalreporter.write_sep("=", "acceptance")
    for num in range(1, N_ACCEPTANCE + 1):
        terminalreporter.write_line(_lines.get(num, f"FAIL  acceptance {num}: did not run"))
