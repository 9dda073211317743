import numpy as np
import pandas as pd
import pytest
from hypothesis import settings

from solarsde.data import IrradianceSeries
from solarsde.synthetic import simulate_series

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def constant_input_series(n, nwp=300.0, irradiance=None, start="2010-06-01T01:00Z"):
    ts = pd.date_range(pd.Timestamp(start), periods=n, freq="h")
    y = np.zeros(n) if irradiance is None else irradiance
    return IrradianceSeries.from_arrays(ts, y, np.full(n, nwp))


@pytest.fixture(scope="session")
def m4_year():
    return simulate_series("M4", n_hours=8760, seed=11)


@pytest.fixture(scope="session")
def m7_month():
    return simulate_series("M7", n_hours=24 * 60, seed=12)


# --------------------------------------------------------------------------
# Acceptance reporting: tests marked ``criterion(n)`` get a PASS/FAIL line in
# the terminal summary, with any detail they attach via ``record_property``.
# --------------------------------------------------------------------------

_criteria = []



@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    # a strict xfail is a criterion that runs and fails as documented
    passed = rep.passed and not hasattr(rep, "wasxfail")
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _criteria.append((mark.args[0], item.name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n, name, passed, detail in sorted(_criteria, key=lambda r: (r[0], r[1])):
        line = f"criterion {n:>2} {'PASS' if passed else 'FAIL'}  {name}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
