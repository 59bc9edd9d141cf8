import pytest


def pytest_addoption(parser):
    parser.addoption("--extended", action="store_true", default=False,
                     help="also run the slow KdV acceptance analogues")


def pytest_configure(config):
    config.addinivalue_line("markers", "extended: slow KdV analogues, enabled by --extended")
    config.addinivalue_line("markers", "slow: multi-minute Monte-Carlo runs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--extended"):
        return
    skip = pytest.mark.skip(reason="needs --extended")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
