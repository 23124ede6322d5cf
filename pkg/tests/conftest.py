import numpy as np
import pytest

from pssmp import levy


@pytest.fixture
def besq6():
    """xi = 2B + 4t, the Lamperti exponent of the dimension-6 squared Bessel process."""
    return levy.bessel_squared_triplet(6.0)


@pytest.fixture
def besq6_dual(besq6):
    return levy.negate(besq6)


def inverse_gamma_draws(shape, n, seed, scale=0.5):
    """scale / Gamma(shape): the law of I for Brownian motion with drift."""
    rng = np.random.default_rng(seed)
    return scale / rng.gamma(shape, size=n)


# Outcome lines recorded by the acceptance suite, echoed after the run.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    def record(number, title, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}  {title}"
        if detail:
            line += f"  [{detail}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
