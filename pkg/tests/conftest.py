"""Shared fixtures and the acceptance-line reporter.

Acceptance tests record one PASS/FAIL line per criterion through the
``acceptance`` fixture; the lines are echoed again in the terminal
summary so the verdicts survive pytest's output capture.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from mesorm.freeconv import additive_model, multiplicative_model
from mesorm.spectra import build_atomic_measure

ACCEPTANCE_LINES = []


class _Criterion:
    """Collects sub-checks so the summary line reports all of them."""

    def __init__(self, num, title):
        self.num = num
        self.title = title
        self.failed = []
        self.notes = []

    def require(self, cond, msg):
        if cond:
            self.notes.append(msg)
        else:
            self.failed.append(msg)
        return bool(cond)

    def note(self, msg):
        self.notes.append(msg)


def _record(num, title, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {num:2d}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


@pytest.fixture
def acceptance():
    @contextmanager
    def _ctx(num, title):
        crit = _Criterion(num, title)
        start = time.perf_counter()
        try:
            yield crit
        except BaseException as exc:
            _record(num, title, False, f"aborted: {exc!r:.200}")
            raise
        elapsed = time.perf_counter() - start
        detail = "; ".join(crit.failed + crit.notes + [f"{elapsed:.1f}s"])
        _record(num, title, not crit.failed, detail)
        if crit.failed:
            pytest.fail(f"criterion {num} ({title}): " + "; ".join(crit.failed))

    return _ctx


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


# ---------------------------------------------------------------------------
# shared models (session scope: solver caches are reused, never mutated)

@pytest.fixture(scope="session")
def two_point_measure():
    return build_atomic_measure([(-0.5, 1.0), (0.5, 1.0)])


@pytest.fixture(scope="session")
def two_point_model(two_point_measure):
    return additive_model(two_point_measure)


@pytest.fixture(scope="session")
def semicircle_model():
    return additive_model(build_atomic_measure([(0.0, 1.0)]))


@pytest.fixture(scope="session")
def sample_two_point_model():
    return multiplicative_model(
        build_atomic_measure([(1.0, 1.0), (4.0, 1.0)]), 0.5)


@pytest.fixture(scope="session")
def mp_quarter_model():
    return multiplicative_model(build_atomic_measure([(1.0, 1.0)]), 0.25)


def semicircle_m_closed(z):
    """Closed form (-z + sqrt(z - 2) sqrt(z + 2))/2; the factored square
    roots pick the branch with m ~ -1/z at infinity on all of C \\ [-2, 2]."""
    z = complex(z)
    return (-z + np.sqrt(z - 2.0) * np.sqrt(z + 2.0)) / 2.0


def random_upper_z(rng, count, e_range=(-3.0, 3.0), eta_range=(1e-3, 2.0)):
    e = rng.uniform(*e_range, count)
    eta = np.exp(rng.uniform(np.log(eta_range[0]), np.log(eta_range[1]), count))
    return e + 1j * eta
