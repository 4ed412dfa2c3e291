_ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool) -> None:
    _ACCEPTANCE_LINES.append(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
