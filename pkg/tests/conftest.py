import numpy as np
import pytest
from hypothesis import settings

from npmle.kernel import KernelSpec
from npmle.mixture import ParticleMixture, SampleSet

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_instance(rng, N=None, m=None, d=None, spread=3.0):
    """(kernel, samples, mixture) with random sizes, locations and weights."""
    N = N or int(rng.integers(1, 40))
    m = m or int(rng.integers(1, 12))
    d = d or int(rng.integers(1, 4))
    X = rng.normal(size=(N, d)) * spread
    mu = rng.normal(size=(m, d)) * spread
    w = rng.dirichlet(np.ones(m))
    w = np.maximum(w, 1e-6)
    return KernelSpec(d), SampleSet(X), ParticleMixture.from_weights(mu, w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, collected from marked tests
_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.outcome == "passed"):
        return
    n = mark.args[0]
    entry = _criteria.setdefault(n, {"status": "PASS", "details": []})
    if report.skipped:
        entry["status"] = "EXCLUDED" if entry["status"] == "PASS" else entry["status"]
        entry["details"].append(str(report.longrepr[-1]) if isinstance(report.longrepr, tuple)
                                else "skipped")
        return
    if report.failed:
        entry["status"] = "FAIL"
    entry["details"] += [str(v) for k, v in report.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        detail = "; ".join(e["details"])
        terminalreporter.write_line(f"criterion {n}: {e['status']}" + (f"  ({detail})" if detail else ""))
