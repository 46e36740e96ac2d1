import pytest

from even import synthcam


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """Sixteen 16x16 samples covering all weather kinds."""
    out = tmp_path_factory.mktemp("tiny")
    return synthcam.generate_dataset(synthcam.DatasetConfig(out_dir=out, n_samples=16, resolution=(16, 16), seed=3))


# one summary line per acceptance criterion, printed after the run
_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when not in ("setup", "call"):
        return
    number, title = marker.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    if failed:
        detail = call.excinfo.exconly().splitlines()[0][:200]
    if failed or call.when == "call":
        _criteria[number] = (title, "FAIL" if failed else "PASS", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, verdict, detail = _criteria[number]
        terminalreporter.write_line(f"criterion {number} {verdict}: {title}" + (f" ({detail})" if detail else ""))
