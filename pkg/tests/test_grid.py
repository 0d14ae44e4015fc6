import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smallbody.grid import (
    Grid,
    ScalarField,
    VectorField,
    curl,
    deformation_tensor,
    divergence,
    gradient,
    inner,
    interpolate,
    laplacian,
    lebesgue_norm,
    leray_project,
    read_snapshot,
    sobolev_norm,
    spectral_evaluate,
    write_snapshot,
)

from conftest import scal, smooth_scalar, smooth_vector, solenoidal, vec

TWO_PI = 2 * np.pi


def rel(a, b):
    return np.linalg.norm(np.ravel(a - b)) / max(np.linalg.norm(np.ravel(b)), 1e-300)


class TestGrid:
    @pytest.mark.parametrize("L,N", [(0.0, 16), (-1.0, 16), (1.0, 7), (1.0, 6), (1.0, 17)])
    def test_rejects_bad_geometry(self, L, N):
        with pytest.raises(ValueError):
            Grid(L, N)

    def test_axis_covers_half_open_box(self):
        g = Grid(3.0, 8)
        assert g.axis[0] == -1.5
        assert g.axis[-1] == pytest.approx(1.5 - g.spacing)

    def test_field_shape_checked(self, grid16):
        with pytest.raises(ValueError):
            ScalarField(grid16, np.zeros((8, 8, 8)))
        with pytest.raises(ValueError):
            VectorField(grid16, np.full((3,) + grid16.shape, np.nan))

    def test_mixing_grids_is_an_error(self, grid16):
        a = ScalarField.zeros(grid16)
        b = ScalarField.zeros(Grid(1.0, 16))
        with pytest.raises(ValueError):
            a + b


class TestOperators:
    def test_single_mode_divergence(self):
        g = Grid(3.0, 16)
        x, _, _ = g.coords
        k = TWO_PI / g.L
        v = vec(g, np.sin(k * x), 0, 0)
        expect = np.broadcast_to(k * np.cos(k * x), g.shape)
        assert np.max(np.abs(divergence(v).values - expect)) < 1e-12

    def test_taylor_green_is_solenoidal(self, grid32):
        x, y, _ = grid32.coords
        tg = vec(grid32, np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y), 0)
        assert lebesgue_norm(divergence(tg)) < 1e-12 * lebesgue_norm(tg)

    def test_identities_over_many_fields(self, grid16):
        rng = np.random.default_rng(0)
        for _ in range(100):
            f = smooth_scalar(grid16, rng, kmax=7)
            v = smooth_vector(grid16, rng, kmax=7)
            cg = curl(gradient(f))
            assert lebesgue_norm(cg) <= 1e-10 * lebesgue_norm(gradient(f))
            dc = divergence(curl(v))
            assert lebesgue_norm(dc) <= 1e-10 * lebesgue_norm(curl(v))

    def test_laplacian_of_mode(self, grid16):
        x, y, z = grid16.coords
        f = scal(grid16, np.cos(2 * x + 3 * z))
        assert rel(laplacian(f).values, -13 * f.values) < 1e-12


class TestDeformation:
    def test_shear(self, grid16):
        # v = (y, 0, 0) is not periodic; check away from the seam with central differences
        _, y, _ = grid16.coords
        v = vec(grid16, y, 0, 0)
        D = deformation_tensor(v, scheme="central")[:, :, 4:12, 4:12, 4:12]
        assert np.allclose(D[0, 1], 0.5) and np.allclose(D[1, 0], 0.5)
        others = [(i, j) for i in range(3) for j in range(3) if (i, j) not in ((0, 1), (1, 0))]
        assert all(np.allclose(D[i, j], 0.0) for i, j in others)

    def test_rigid_field_has_no_deformation(self, grid16):
        X = grid16.mesh()
        a = np.array([0.3, -1.0, 2.0])
        w = np.array([0.4, 0.1, -0.7])
        vals = a.reshape(3, 1, 1, 1) + np.cross(w, X, axis=0)
        D = deformation_tensor(VectorField(grid16, vals), scheme="central")[:, :, 2:-2, 2:-2, 2:-2]
        assert np.max(np.abs(D)) < 1e-10

    def test_symmetric(self, grid16, rng):
        D = deformation_tensor(smooth_vector(grid16, rng))
        assert np.array_equal(D, np.swapaxes(D, 0, 1))

    def test_deformation_bounded_by_gradient(self, grid16, rng):
        for _ in range(10):
            v = smooth_vector(grid16, rng)
            D = deformation_tensor(v)
            G = np.stack([gradient(ScalarField(grid16, v[i])).values for i in range(3)])
            assert np.sum(D**2) <= np.sum(G**2) * (1 + 1e-12)

    def test_unknown_scheme(self, grid16, rng):
        with pytest.raises(ValueError):
            deformation_tensor(smooth_vector(grid16, rng), scheme="upwind")


class TestLeray:
    def test_annihilates_gradients(self, grid16, rng):
        gf = gradient(smooth_scalar(grid16, rng))
        assert lebesgue_norm(leray_project(gf)) <= 1e-10 * lebesgue_norm(gf)

    def test_fixes_solenoidal(self, grid16, rng):
        v = solenoidal(grid16, rng)
        assert rel(leray_project(v).values, v.values) < 1e-12

    def test_helmholtz_pair(self, grid16):
        x, y, z = grid16.coords
        w = vec(grid16, np.sin(2 * y), np.cos(x), 0)
        f = scal(grid16, np.sin(x + z) * np.cos(2 * y))
        assert rel(leray_project(w + gradient(f)).values, w.values) < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_idempotent_and_solenoidal(self, seed):
        g = Grid(TWO_PI, 8)
        v = smooth_vector(g, np.random.default_rng(seed), kmax=3)
        p = leray_project(v)
        assert lebesgue_norm(leray_project(p) - p) <= 1e-12 * max(lebesgue_norm(v), 1e-300)
        assert lebesgue_norm(divergence(p)) <= 1e-10 * max(lebesgue_norm(v), 1e-300)


class TestNorms:
    def test_constant(self):
        g = Grid(1.7, 8)
        f = ScalarField(g, np.full(g.shape, -2.5))
        for q in (1, 2, 3.5):
            assert lebesgue_norm(f, q) == pytest.approx(2.5 * g.L ** (3 / q), rel=1e-12)
        assert lebesgue_norm(f, np.inf) == 2.5

    def test_single_mode_l2(self):
        g = Grid(3.0, 16)
        x, _, _ = g.coords
        f = scal(g, np.sin(TWO_PI * x / g.L))
        assert lebesgue_norm(f) == pytest.approx(g.L**1.5 / np.sqrt(2), rel=1e-10)

    def test_ball_containing_support(self, grid32):
        x, y, z = grid32.coords
        bump = ScalarField(grid32, np.exp(-((x**2 + y**2 + z**2) / 0.1)))
        full = lebesgue_norm(bump)
        assert lebesgue_norm(bump, region=((0, 0, 0), 2.5)) == pytest.approx(full, rel=1e-8)

    def test_region_too_large(self, grid16):
        with pytest.raises(ValueError, match="region exceeds box"):
            lebesgue_norm(ScalarField.zeros(grid16), region=((0, 0, 0), np.pi))

    def test_bad_exponent(self, grid16):
        with pytest.raises(ValueError):
            lebesgue_norm(ScalarField.zeros(grid16), 0.5)

    def test_sobolev_single_mode(self):
        g = Grid(3.0, 16)
        x, _, _ = g.coords
        f = scal(g, np.sin(TWO_PI * x / g.L))
        f = f * (1.0 / lebesgue_norm(f))
        k2 = (TWO_PI / g.L) ** 2
        assert sobolev_norm(f, 1) == pytest.approx(np.sqrt(1 + k2), rel=1e-12)
        assert sobolev_norm(f, -2) == pytest.approx(1 / (1 + k2), rel=1e-12)

    def test_sobolev_zero_is_l2(self, grid16, rng):
        v = smooth_vector(grid16, rng)
        assert sobolev_norm(v, 0) == pytest.approx(lebesgue_norm(v), rel=1e-10)
        assert sobolev_norm(v, -2) <= lebesgue_norm(v)

    def test_unsupported_order(self, grid16):
        with pytest.raises(ValueError):
            sobolev_norm(ScalarField.zeros(grid16), 3)

    def test_gagliardo_nirenberg_ratios_bounded(self, grid16):
        rng = np.random.default_rng(7)
        r3, r4 = [], []
        for _ in range(100):
            v = smooth_vector(grid16, rng, kmax=int(rng.integers(1, 6)))
            l2 = lebesgue_norm(v)
            g2 = np.sqrt(sum(lebesgue_norm(gradient(ScalarField(grid16, v[i]))) ** 2 for i in range(3)))
            r3.append(lebesgue_norm(v, 3) / (l2**0.5 * g2**0.5))
            r4.append(lebesgue_norm(v, 4) / (l2**0.25 * g2**0.75))
        assert max(r3) < 1.0 and max(r4) < 1.0

    def test_inner_is_parseval(self, grid16, rng):
        a, b = smooth_vector(grid16, rng), smooth_vector(grid16, rng)
        assert inner(a, a) == pytest.approx(lebesgue_norm(a) ** 2, rel=1e-12)
        assert inner(a, b) == pytest.approx(inner(b, a), rel=1e-14)


class TestInterpolation:
    def test_reproduces_nodes(self, grid16, rng):
        f = smooth_scalar(grid16, rng)
        i, j, k = 3, 11, 0
        x = (grid16.axis[i], grid16.axis[j], grid16.axis[k])
        assert interpolate(f, x) == pytest.approx(f.values[i, j, k], abs=1e-13)

    def test_exact_mid_cell_for_ramp(self):
        g = Grid(8.0, 8)
        x, y, z = g.coords
        f = scal(g, 2 * x - y + 0.5 * z)
        p = np.array([0.5, -1.5, 1.5])
        assert interpolate(f, p) == pytest.approx(2 * p[0] - p[1] + 0.5 * p[2], abs=1e-12)

    def test_periodic_wrap(self, grid16, rng):
        f = smooth_scalar(grid16, rng)
        p = np.array([0.3, -1.1, 2.0])
        assert interpolate(f, p) == pytest.approx(interpolate(f, p + grid16.L), abs=1e-12)

    def test_second_order_refinement(self):
        pts = np.random.default_rng(3).uniform(-np.pi, np.pi, size=(40, 3))
        errs = []
        for N in (16, 32, 64):
            g = Grid(TWO_PI, N)
            x, y, z = g.coords
            f = scal(g, np.sin(x) * np.cos(y) * np.cos(z))
            errs.append(max(abs(interpolate(f, p) - np.sin(p[0]) * np.cos(p[1]) * np.cos(p[2])) for p in pts))
        slope = np.polyfit(np.log([16, 32, 64]), np.log(errs), 1)[0]
        assert -2.3 < slope < -1.7

    def test_spectral_evaluation_exact_for_trig_polynomials(self, grid16):
        x, y, z = grid16.coords
        f = scal(grid16, np.sin(x + 2 * y) + np.cos(3 * z))
        pts = np.array([[0.1, 0.2, 0.3], [-2.0, 1.4, 3.0]])
        exact = np.sin(pts[:, 0] + 2 * pts[:, 1]) + np.cos(3 * pts[:, 2])
        assert np.allclose(spectral_evaluate(f, pts), exact, atol=1e-12)


def test_snapshot_round_trip(tmp_path, grid16, rng):
    v = smooth_vector(grid16, rng)
    write_snapshot(tmp_path / "v.dat", v)
    back = read_snapshot(tmp_path / "v.dat")
    assert isinstance(back, VectorField) and back.grid == grid16
    assert np.array_equal(back.values, v.values)
    header = (tmp_path / "v.dat").read_text().splitlines()[0]
    assert header.startswith("GRID L=") and "N=16" in header and "COMPONENTS=3" in header


def test_snapshot_rejects_garbage(tmp_path):
    p = tmp_path / "bad.dat"
    p.write_text("nonsense\n")
    with pytest.raises(ValueError):
        read_snapshot(p)
