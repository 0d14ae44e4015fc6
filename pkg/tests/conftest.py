import numpy as np
import pytest

from smallbody.grid import Grid, ScalarField, VectorField, leray_project


def smooth_scalar(grid: Grid, rng, kmax: int = 3) -> ScalarField:
    """Random real trigonometric polynomial with modes |m_i| <= kmax."""
    x, y, z = grid.coords
    q = 2 * np.pi / grid.L
    out = np.zeros(grid.shape)
    for _ in range(6):
        m = rng.integers(-kmax, kmax + 1, size=3)
        a, b = rng.normal(size=2)
        phase = q * (m[0] * x + m[1] * y + m[2] * z)
        out = out + a * np.cos(phase) + b * np.sin(phase)
    return ScalarField(grid, out)


def smooth_vector(grid: Grid, rng, kmax: int = 3) -> VectorField:
    return VectorField(grid, np.stack([smooth_scalar(grid, rng, kmax).values for _ in range(3)]))


def solenoidal(grid: Grid, rng, kmax: int = 3) -> VectorField:
    v = leray_project(smooth_vector(grid, rng, kmax))
    return v - v.values.mean(axis=(1, 2, 3)).reshape(3, 1, 1, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid16():
    return Grid(2 * np.pi, 16)


@pytest.fixture(scope="session")
def grid32():
    return Grid(2 * np.pi, 32)


def vec(grid: Grid, *comps) -> VectorField:
    """Vector field from three broadcastable component arrays."""
    return VectorField(grid, np.stack([np.broadcast_to(c, grid.shape) for c in comps]).astype(float))


def scal(grid: Grid, values) -> ScalarField:
    return ScalarField(grid, np.broadcast_to(values, grid.shape).astype(float))


# criterion number -> (passed, detail), filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
