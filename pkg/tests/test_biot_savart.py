import numpy as np
import pytest

from smallbody.biot_savart import (
    kernel_stream_function,
    make_stream_pair,
    modified_stream_function,
    stream_function,
    time_derivative_ratio,
    verify_local_stream_bound,
)
from smallbody.grid import Grid, VectorField, curl, divergence, gradient, interpolate, lebesgue_norm
from smallbody.solver import initial_datum

from conftest import smooth_scalar, solenoidal, vec

# compactly supported vortex: curl of (-y b, x b, 0) with b = (1 - r^2/a^2)_+^P
RADIUS, POWER = 1.2, 8


def _bump(pts):
    r2 = np.sum(pts**2, axis=1)
    t = np.where(r2 < RADIUS**2, 1 - r2 / RADIUS**2, 0.0)
    return t, r2


def compact_vortex(pts):
    pts = np.atleast_2d(pts)
    x, y, z = pts.T
    t, _ = _bump(pts)
    db = -2 * POWER / RADIUS**2 * t ** (POWER - 1)
    return np.stack([db * (-x * z), db * (-y * z), db * (x * x + y * y) + 2 * t**POWER], axis=1)


def compact_potential(pts):
    x, y, _ = pts.T
    t, _ = _bump(pts)
    b = t**POWER
    return np.stack([-b * y, b * x, 0 * b], axis=1)


def on_grid(g, func):
    X = g.mesh().reshape(3, -1).T
    return VectorField(g, func(X).T.reshape((3,) + g.shape))


def test_zero_source(grid16):
    assert np.all(stream_function(VectorField.zeros(grid16)).values == 0)


def test_single_mode_closed_form():
    g = Grid(3.0, 16)
    x, _, _ = g.coords
    k = 2 * np.pi / g.L
    phi = vec(g, 0, 0, np.sin(k * x))
    psi = stream_function(phi)
    # psi_hat = i k x phi_hat / |k|^2 gives psi = (0, -cos(kx)/k, 0)
    expect = vec(g, 0, -np.cos(k * x) / k, 0)
    assert lebesgue_norm(psi - expect) < 1e-12 * lebesgue_norm(expect)


def test_curl_inverts_on_fifty_fields(grid16):
    rng = np.random.default_rng(11)
    for _ in range(50):
        phi = solenoidal(grid16, rng, kmax=6)
        psi = stream_function(phi)
        assert lebesgue_norm(curl(psi) - phi) <= 1e-8 * lebesgue_norm(phi)
        assert lebesgue_norm(divergence(psi)) <= 1e-10 * lebesgue_norm(psi)


def test_rejects_compressible_source(grid16, rng):
    with pytest.raises(ValueError, match="not solenoidal"):
        stream_function(gradient(smooth_scalar(grid16, rng)))


def test_rejects_mean_flow(grid16, rng):
    with pytest.raises(ValueError, match="mean"):
        stream_function(solenoidal(grid16, rng) + 1.0)


def test_modified_stream_function(grid16, rng):
    psi = stream_function(solenoidal(grid16, rng))
    node = (grid16.axis[3], grid16.axis[7], grid16.axis[12])
    out = modified_stream_function(psi, node)
    assert np.allclose(out.values[:, 3, 7, 12], 0.0, atol=1e-14)
    assert lebesgue_norm(curl(out) - curl(psi)) <= 1e-12 * lebesgue_norm(curl(psi))
    const = VectorField(grid16, np.ones((3,) + grid16.shape) * 2.5)
    assert np.all(modified_stream_function(const, (0.1, 0.2, 0.3)).values == 0)


def test_stream_pair_invariants(grid16, rng):
    phi = solenoidal(grid16, rng)
    h = np.array([0.3, -0.7, 1.1])
    pair = make_stream_pair(phi, h)
    assert lebesgue_norm(curl(pair.psi_eps) - phi) <= 1e-8 * lebesgue_norm(phi)
    assert np.max(np.abs(interpolate(pair.psi_eps, h))) <= 1e-8 * lebesgue_norm(pair.psi, np.inf)


def test_kernel_quadrature_oracle():
    g = Grid(2 * np.pi, 64)
    phi = curl(on_grid(g, compact_potential))
    assert lebesgue_norm(phi - on_grid(g, compact_vortex), np.inf) < 1e-3 * lebesgue_norm(phi, np.inf)
    psi = stream_function(phi)
    rng = np.random.default_rng(1)
    idx = []
    for _ in range(12):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        p = rng.uniform(0.1, 0.9) * RADIUS * d
        idx.append(np.round((p + g.L / 2) / g.spacing).astype(int))
    idx = np.array(idx)
    pts = g.axis[idx]
    spectral = psi.values[:, idx[:, 0], idx[:, 1], idx[:, 2]].T
    oracle = kernel_stream_function(compact_vortex, pts, np.zeros(3), RADIUS, g.spacing / 2, richardson=True)
    err = np.max(np.abs(spectral - oracle)) / np.max(np.abs(oracle))
    assert err < 0.02


class TestLocalBound:
    def test_ratios_bounded_as_radius_halves(self, grid32):
        phi = initial_datum("gaussian_vortex_ring", grid32)
        radii = [grid32.L / 8 / 2**j for j in range(6)][::-1]
        rep = verify_local_stream_bound(phi, (0.2, -0.1, 0.3), radii)
        assert rep.passed

    def test_ratio_flattens_for_small_radii(self, grid32):
        # at a generic point psi_eps is linear near h, so sup/R tends to |grad psi(h)|
        phi = initial_datum("random_band_limited", grid32, seed=5)
        radii = [grid32.L / 64 / 2**j for j in range(4)][::-1]
        rep = verify_local_stream_bound(phi, (0.2, -0.1, 0.3), radii)
        assert max(rep.ratios) / min(rep.ratios) < 1.2

    def test_zero_field(self, grid16):
        rep = verify_local_stream_bound(VectorField.zeros(grid16), (0, 0, 0), [0.1, 0.2])
        assert rep.ratios == [0.0, 0.0] and rep.global_grad_ratio == 0.0

    def test_radius_too_large(self, grid16, rng):
        with pytest.raises(ValueError, match="radius too large"):
            verify_local_stream_bound(solenoidal(grid16, rng), (0, 0, 0), [0.1, grid16.L / 4])

    def test_report_format(self, grid16, rng):
        rep = verify_local_stream_bound(solenoidal(grid16, rng), (0, 0, 0), [0.1, 0.2])
        lines = rep.lines()
        assert lines[0].startswith("R=") and " ratio=" in lines[0]
        assert lines[-1].startswith("global_grad_ratio=")

    def test_time_derivative_bounded(self, grid32, rng):
        phi = solenoidal(grid32, rng)

        def path(t):
            return np.array([0.5 * np.sin(t), 0.3 * t, np.cos(2 * t) - 1])

        ratios = [time_derivative_ratio(phi, path, np.linspace(0, 1, 6), R) for R in (0.2, 0.4, 0.8)]
        assert max(ratios) < 10.0 and min(ratios) > 0
