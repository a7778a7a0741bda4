import numpy as np
import pytest

from photonstats.correlations import default_tau_grid, g1_atom, g2_atom
from photonstats.quantum import SystemParams, build_lindblad, steady_state


@pytest.fixture(scope="session")
def params():
    return SystemParams.defaults()


@pytest.fixture(scope="session")
def generator(params):
    return build_lindblad(params)


@pytest.fixture(scope="session")
def rho_ss(generator):
    return steady_state(generator)


@pytest.fixture(scope="session")
def tau():
    return default_tau_grid()


@pytest.fixture(scope="session")
def g1(params, tau):
    return g1_atom(params, tau)


@pytest.fixture(scope="session")
def g2(params, tau):
    return g2_atom(params, tau)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion a test belongs to")
    config.stash[ACCEPTANCE] = {}


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None and (report.when == "call" or report.failed):
        n, title = mark.args
        entry = item.config.stash[ACCEPTANCE].setdefault(n, {"title": title, "ok": True, "notes": []})
        entry["ok"] = entry["ok"] and report.passed
        entry["notes"] += [v for k, v in item.user_properties if k == "note"]
    return report


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        r = results[n]
        status = "PASS" if r["ok"] else "FAIL"
        notes = "; ".join(r["notes"])
        terminalreporter.write_line(f"criterion {n} {status}: {r['title']}" + (f" | {notes}" if notes else ""))
