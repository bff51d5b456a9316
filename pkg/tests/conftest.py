from __future__ import annotations

import pytest

from fixtureweb import FixtureWeb

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")
    config.stash[_RESULTS] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    results = item.config.stash[_RESULTS]
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        passed = rep.passed
        prev = results.get(n, (title, True, 0.0))
        results[n] = (title, prev[1] and passed, prev[2] + rep.duration)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_RESULTS]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, passed, seconds = results[n]
        terminalreporter.write_line(
            f"criterion {n}: {'PASS' if passed else 'FAIL'}  {title}  ({seconds:.2f} s)")


@pytest.fixture
def web():
    w = FixtureWeb().start()
    yield w
    w.stop()


@pytest.fixture
def fast_fetch():
    """Fetch settings for talking to the local fixture web."""
    from scriptwatch.fetch import FetchConfig

    def make(web: FixtureWeb, **kw) -> FetchConfig:
        base = dict(proxy=web.proxy, trust_env=False, host_delay_seconds=0.0,
                    timeout_seconds=5.0)
        base.update(kw)
        return FetchConfig(**base)
    return make
