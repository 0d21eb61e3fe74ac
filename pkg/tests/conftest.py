import pytest
from hypothesis import settings

# numba compiles on first call; a per-example deadline would flag that
settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

_CRITERIA = {}  # nodeid -> (number, title)
_OUTCOMES = {}  # number -> (title, passed, detail)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _CRITERIA[item.nodeid] = mark.args


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    key = _CRITERIA.get(item.nodeid)
    if key is None:
        return
    number, title = key
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        if not rep.passed and not detail:
            detail = str(rep.longrepr).strip().splitlines()[-1] if rep.longrepr else ""
        _OUTCOMES[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, passed, detail = _OUTCOMES[number]
        tag = "PASS" if passed else "FAIL"
        tr.write_line(f"{tag}  criterion {number:2d}  {title}  ({detail})")
    n_pass = sum(1 for _, ok, _ in _OUTCOMES.values() if ok)
    tr.write_line(f"{n_pass}/{len(_OUTCOMES)} criteria passed")
