import pytest

from covertnet.params import NetworkParams, PowerPair


@pytest.fixture
def params():
    return NetworkParams()


@pytest.fixture
def powers():
    # pd = 15 dBm, pc = 20 dBm
    return PowerPair.from_dbm(15.0, 20.0)


def pytest_terminal_summary(terminalreporter):
    # one verdict line per acceptance criterion, collected by test_acceptance.record
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(results, key=str):
        parts = results[crit]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAIL'} ({info})" for name, good, info in parts)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'} -- {detail}")
