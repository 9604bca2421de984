import pytest

_RESULTS = pytest.StashKey[dict]()


@pytest.fixture
def record(request):
    """Store one acceptance verdict for the end-of-run summary."""
    results = request.config.stash.setdefault(_RESULTS, {})

    def _record(n, title, ok, detail=""):
        results[n] = (bool(ok), title, detail)
        print(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})")

    return _record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, detail = results[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
