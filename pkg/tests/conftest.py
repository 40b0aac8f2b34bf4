"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    entry = _ACCEPTANCE.setdefault(key, {"title": props.get("title", ""), "passed": True, "measured": ""})
    if props.get("measured"):
        entry["measured"] = props["measured"]
    if report.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=int):
        e = _ACCEPTANCE[key]
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {key}: {status}  {e['title']}  [{e['measured']}]")
