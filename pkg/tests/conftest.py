import pytest

from semimarkov.synthetic import SyntheticGeneratorSpec, generate_synthetic

from .helpers import three_state_kernel


@pytest.fixture
def kernel3():
    return three_state_kernel()


@pytest.fixture(scope="session")
def clustered_small():
    return generate_synthetic(SyntheticGeneratorSpec("clustered-wismc", 60000, seed=11))


@pytest.fixture
def tick_csv(tmp_path):
    """Write rows of (timestamp, price) to a CSV and return its path."""
    def write(rows, name="ticks.csv", header="timestamp,price"):
        path = tmp_path / name
        path.write_text(header + "\n" + "".join(f"{t},{p}\n" for t, p in rows))
        return path
    return write


def pytest_terminal_summary(terminalreporter):
    from .helpers import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
