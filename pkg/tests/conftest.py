import numpy as np
import pytest

from mbqns.arma import ArmaModel
from mbqns.probe import generate_fttps


def random_monic(rng, n, max_radius):
    """Real monic polynomial of degree ``n`` with all roots inside ``max_radius``."""
    roots = []
    while len(roots) < n:
        if n - len(roots) >= 2 and rng.random() < 0.5:
            z = rng.uniform(0.1, max_radius) * np.exp(1j * rng.uniform(0.05, np.pi - 0.05))
            roots += [z, np.conj(z)]
        else:
            roots.append(rng.uniform(-max_radius, max_radius))
    return np.atleast_1d(np.real(np.poly(roots)))


def random_stationary(rng, p, q, max_radius=0.9, scale=1.0):
    """ARMA(p, q) with AR poles drawn inside ``max_radius``."""
    ar = random_monic(rng, p, max_radius)[1:]
    ma = scale * rng.normal(size=q + 1)
    ma[0] = abs(ma[0]) + 0.1 * scale
    return ArmaModel(ar, ma)


@pytest.fixture(scope="session")
def fttps64():
    return generate_fttps(64)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record a one-line pass/fail verdict for an acceptance criterion."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
