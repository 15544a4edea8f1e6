import pytest


def pytest_configure(config):
    pytest.acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if pytest.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(pytest.acceptance_lines, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
