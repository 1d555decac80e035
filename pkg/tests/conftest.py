"""Shared oracles and helpers for the test suite.

The finite-difference oracles are deliberately independent of the analytic
derivative formulas they check: they only ever call the scalar evaluation
path of whatever function they are given.
"""

import numpy as np
import pytest

#: One line per acceptance criterion, echoed after the run regardless of
#: output capture.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def fd_gradient(f, x, h=1e-5):
    """Central-difference gradient of a scalar-or-vector function of a point."""
    x = np.asarray(x, dtype=float)
    base = np.asarray(f(x))
    out = np.empty(base.shape + (x.shape[0],))
    for j in range(x.shape[0]):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        out[..., j] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h)
    return out


def fd_laplacian(f, x, h=1e-4):
    """Second-order finite-difference Laplacian (5-point in 2D, 7-point in 3D)."""
    x = np.asarray(x, dtype=float)
    center = np.asarray(f(x))
    total = np.zeros_like(center, dtype=float)
    for j in range(x.shape[0]):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        total += (np.asarray(f(xp)) - 2.0 * center + np.asarray(f(xm))) / (h * h)
    return total


def rel_err(approx, exact, floor=1.0):
    """Max elementwise error relative to the larger of |exact| and a floor.

    The floor keeps near-zero entries (saturated tanh tails) from inflating
    the ratio: errors are judged against the scale of the bundle.
    """
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    scale = np.maximum(np.abs(exact), max(floor, 1e-2 * np.max(np.abs(exact))))
    return float(np.max(np.abs(approx - exact) / scale))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
