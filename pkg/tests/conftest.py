import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")
    config.addinivalue_line("markers", "slow: runs longer than a few seconds")
    config.stash[_RESULTS] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.failed:
        msg = str(call.excinfo.value).splitlines()[0] if call.excinfo else "failed"
        detail = f"{detail}; {msg}" if detail else msg
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    item.config.stash[_RESULTS][number] = (title, status, detail, rep.duration)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[_RESULTS]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, status, detail, dur = results[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} ({dur:.1f} s) {detail}")
