import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from isoquant import geometry as geo

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_polytope(rng: np.random.Generator, n: int) -> geo.Polytope:
    """Hull of a handful of anisotropically scaled Gaussian points."""
    while True:
        m = int(rng.integers(n + 2, 4 * n + 5))
        pts = rng.normal(size=(m, n)) * rng.uniform(0.3, 2.0, size=n) + rng.normal(size=n)
        try:
            return geo.Polytope(pts)
        except geo.GeometryError:
            continue


@st.composite
def polytopes(draw, n=None):
    n = draw(st.sampled_from([2, 3])) if n is None else n
    seed = draw(st.integers(0, 2**32 - 1))
    return random_polytope(np.random.default_rng(seed), n)


@st.composite
def polytope_pairs(draw):
    n = draw(st.sampled_from([2, 3]))
    return draw(polytopes(n)), draw(polytopes(n))


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the run

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    entry = _CRITERIA.setdefault(num, {"title": title, "passed": True, "seen": False, "detail": ""})
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        entry["seen"] = True
        if rep.failed:
            entry["passed"] = False
            msg = str(rep.longrepr).strip().splitlines()
            entry["detail"] = next((ln[1:].strip() for ln in msg if ln.startswith("E ")), msg[-1] if msg else "")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        if not e["seen"]:
            status = "SKIP"
        else:
            status = "PASS" if e["passed"] else "FAIL"
        line = f"criterion {num:>2}: {status}  {e['title']}"
        if status == "FAIL" and e["detail"]:
            line += f"  [{e['detail'][:160]}]"
        terminalreporter.write_line(line)
