import os
import sys
from dataclasses import replace

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from rsced.cases import fig3_case, load_case, two_bus_case  # noqa: E402

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if report.passed else "FAIL"
    _CRITERIA[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        line = f"criterion {number:>2} {status}: {title}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def case3():
    return load_case("case3_fig3")


@pytest.fixture(scope="session")
def net3(case3):
    return case3.network()


@pytest.fixture(scope="session")
def scen3(case3, net3):
    return case3.scenarios(net3)


@pytest.fixture(scope="session")
def case2():
    return two_bus_case()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def fig3():
    return fig3_case


@pytest.fixture(scope="session")
def no_recourse_case():
    """Bus 2 has no generation and line 1-2 cannot carry its load once line 0-2 trips.

    Nominal dispatch is fine; only load shed rescues the outage, so C-SCED is infeasible.
    """
    case = fig3_case(line23_capacity=60.0, name="case3_no_recourse")
    gens = list(case.generators)
    gens[2] = replace(gens[2], gmax=0.0)
    return replace(case, generators=tuple(gens))
