"""Shared pytest hooks: one summary line per acceptance criterion."""

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    number = title = None
    for key, value in report.user_properties:
        if key == "criterion":
            number, title = value
    if number is None:
        return
    detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
    _CRITERIA[number] = {"title": title, "passed": report.passed, "detail": detail}


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", tuple(marker.args)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        c = _CRITERIA[number]
        status = "PASS" if c["passed"] else "FAIL"
        line = f"criterion {number} [{status}] {c['title']}"
        if c["detail"]:
            line += f" -- {c['detail']}"
        terminalreporter.write_line(line)
