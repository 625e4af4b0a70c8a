import pytest

from loopsim.workload import generate_mandelbrot


@pytest.fixture(scope="session")
def mandelbrot_trace():
    """The default 512x512 Mandelbrot trace (generated once per session)."""
    return generate_mandelbrot()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
