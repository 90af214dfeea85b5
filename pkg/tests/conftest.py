from __future__ import annotations

import numpy as np
import pytest

from cvmtrack.model import InfoEstimate


def random_spd(rng, n, scale=1.0, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = scale * np.exp(rng.uniform(0.0, np.log(cond), n))
    return (q * w) @ q.T


def random_point(rng):
    """A random valid linearization point: velocity away from zero, positive semi-lengths."""
    speed = rng.uniform(0.5, 20.0)
    heading = rng.uniform(-np.pi, np.pi)
    vel = speed * np.array([np.cos(heading), np.sin(heading)])
    ext = np.array([rng.uniform(0.5, 40.0), rng.uniform(0.5, 40.0), rng.uniform(-np.pi, np.pi)])
    return vel, ext


def random_priors(rng):
    vel, ext = random_point(rng)
    kin = InfoEstimate.from_covariance(np.r_[rng.normal(0, 50, 2), vel], random_spd(rng, 4, 0.2))
    ext_est = InfoEstimate.from_covariance(ext, random_spd(rng, 3, 0.01))
    return kin, ext_est


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
