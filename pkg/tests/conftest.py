import numpy as np
import pytest

from dualspace.lorentz import euclid_to_lorentz


def random_points(rng, n, dim, scale=1.0, k=-1.0):
    """``n`` manifold points with ``dim`` spatial coordinates."""
    return euclid_to_lorentz(scale * rng.standard_normal((n, dim)), k).data


def random_tangent(rng, base, max_norm=5.0, k=-1.0):
    """Random tangent vector at ``base`` with Lorentz norm <= max_norm."""
    raw = rng.standard_normal(base.shape)
    sign = np.ones(base.shape[-1])
    sign[0] = -1.0
    # project onto the tangent space at base: v - K<v,x> x
    inner = np.sum(raw * base * sign)
    v = raw - k * inner * base
    norm = np.sqrt(abs(np.sum(v * v * sign)))
    return v / norm * rng.uniform(0.0, max_norm)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
