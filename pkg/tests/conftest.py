import pytest

from choleracast.simulate import SimConfig, simulate


@pytest.fixture(scope="session")
def sim_inputs(tmp_path_factory):
    """Small synthetic input set: 6 governorates over the default date range."""
    d = tmp_path_factory.mktemp("sim6")
    return {k: v for k, v in simulate(d, config=SimConfig(seed=7, n_governorates=6, n_days=300)).items()}


ACCEPTANCE_LINES = []


def record_acceptance(name: str, ok: bool, detail: str = ""):
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
