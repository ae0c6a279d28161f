import numpy as np
import pytest

from gap.core import GaussianModel


def random_lower(rng, d, min_diag=0.5):
    low = np.tril(rng.normal(size=(d, d)), k=-1) * 0.5
    low[np.diag_indices(d)] = rng.uniform(min_diag, 1.5, size=d) * rng.choice([-1.0, 1.0], size=d)
    return low


def random_model(rng, d) -> GaussianModel:
    return GaussianModel(rng.normal(size=d), random_lower(rng, d))


def random_spd(rng, n, shift=None):
    a = rng.normal(size=(n, n))
    return a @ a.T + (n if shift is None else shift) * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance outcomes, keyed by criterion number, printed after the run.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
