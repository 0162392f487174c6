import pytest

from jetgamma.expr import JetContext
from jetgamma.jetcalc import Equation, Space, covectors
from jetgamma.operators import OperatorTuple, TotalOperator

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion tracked in the summary")


def pytest_runtest_logreport(report):
    marker = _MARKS.get(report.nodeid)
    if marker is None:
        return
    number, title = marker
    prev = _CRITERIA.get(number, (title, True))
    failed = report.failed or (report.when == "call" and report.skipped)
    _CRITERIA[number] = (title, prev[1] and not failed)


_MARKS: dict = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _MARKS[item.nodeid] = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")


# -- shared fixtures --------------------------------------------------------------


@pytest.fixture(scope="session")
def liouville():
    ctx = JetContext(("x", "y"), ("u",))
    eq = Equation.from_strings(ctx, ["u_xy = exp(2*u)"])
    dom = Space("xi", 1, "even")
    box = TotalOperator.parse(ctx, "u_x + 1/2*D_x", dom)
    boxbar = TotalOperator.parse(ctx, "u_y + 1/2*D_y", dom)
    return {"ctx": ctx, "eq": eq, "domain": dom, "box": box, "boxbar": boxbar,
            "ops": OperatorTuple([box, boxbar], ["box", "boxbar"])}


@pytest.fixture(scope="session")
def kdv():
    ctx = JetContext(("x",), ("u",))
    dom = covectors(ctx)
    A1 = TotalOperator.parse(ctx, "D_x", dom)
    A2 = TotalOperator.parse(ctx, "-1/2*D_xxx + 2*u*D_x + u_x", dom)
    return {"ctx": ctx, "domain": dom, "A1": A1, "A2": A2, "ops": OperatorTuple([A1, A2], ["A1", "A2"])}
