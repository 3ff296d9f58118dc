import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# -- acceptance summary: one line per criterion -------------------------------

_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.outcome != "passed"):
        return
    n, title = mark.args
    status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
    detail = dict(item.user_properties).get("measured", "")
    if rep.outcome == "skipped" and isinstance(rep.longrepr, tuple):
        detail = rep.longrepr[2]
    _CRITERIA.setdefault(n, []).append((title, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        rows = _CRITERIA[n]
        statuses = [s for _, s, _ in rows]
        if "FAIL" in statuses:
            status = "FAIL"
        elif all(s == "SKIP" for s in statuses):
            status = "SKIP"
        elif "SKIP" in statuses:
            status = f"PASS, {statuses.count('SKIP')} part(s) skipped"
        else:
            status = "PASS"
        detail = "; ".join(dict.fromkeys(d for _, _, d in rows if d))
        line = f"criterion {n} [{status}] {rows[0][0]}"
        terminalreporter.write_line(line + (f" :: {detail}" if detail else ""))
