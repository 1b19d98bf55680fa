import numpy as np
import pytest

from monocomb.synthetic import kitti_like_scene, render, two_layer_scene

ACCEPTANCE = {
    1: "occlusion oracle equivalence",
    2: "warp identity",
    3: "synthetic end-to-end",
    4: "density accounting",
    5: "interpolation properties",
    6: "metric fidelity",
    7: "format round-trips",
    8: "pipeline determinism",
    9: "performance budget",
}

_results: dict[int, list[bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results.setdefault(n, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in ACCEPTANCE.items():
        runs = _results.get(n)
        if runs is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(runs) else "FAIL"
        terminalreporter.write_line(f"criterion {n} ({title}): {status}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def two_layer():
    return render(two_layer_scene())


@pytest.fixture(scope="session")
def kitti_like():
    return render(kitti_like_scene())

