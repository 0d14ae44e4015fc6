import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smallbody.grid import Grid, deformation_tensor
from smallbody.rigid_body import (
    RigidBodyState,
    Shape,
    advance_body,
    body_velocity_field,
    format_log_record,
    indicator,
    inertia_tensor,
    parse_log_record,
    voxel_inertia_tensor,
)

L = 2 * np.pi


class TestShape:
    def test_degenerate(self):
        with pytest.raises(ValueError):
            Shape.ellipsoid(1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            Shape("cube", (1, 1, 1))
        with pytest.raises(ValueError):
            Shape("sphere", (1, 2, 1))

    def test_normal_is_unit_and_outward(self):
        s = Shape.ellipsoid(1.0, 0.5, 0.3)
        pts = np.array([[1.0, 0, 0], [0, 0.5, 0], [0, 0, -0.3]]).T
        n = s.normal(pts)
        assert np.allclose(np.linalg.norm(n, axis=0), 1)
        assert np.allclose(n.T, [[1, 0, 0], [0, 1, 0], [0, 0, -1]])


class TestInertia:
    def test_sphere_exact(self):
        r, rho = 0.7, 3.0
        s = Shape.sphere(r)
        m = rho * s.volume
        assert np.max(np.abs(inertia_tensor(s, rho) - 0.4 * m * r**2 * np.eye(3))) <= 1e-12 * m * r**2

    def test_linear_in_density(self):
        s = Shape.ellipsoid(1.0, 0.6, 0.4)
        assert np.array_equal(inertia_tensor(s, 4.0), 2 * inertia_tensor(s, 2.0))

    def test_ellipsoid_vs_voxels(self):
        s = Shape.ellipsoid(1.0, 0.6, 0.4)
        exact = inertia_tensor(s, 1.3)
        vox = voxel_inertia_tensor(s, 1.3)
        assert np.max(np.abs(vox - exact)) <= 0.01 * np.max(np.abs(exact))

    def test_needs_positive_density(self):
        with pytest.raises(ValueError):
            inertia_tensor(Shape.sphere(1.0), 0.0)


class TestState:
    def test_mass_and_density(self):
        s = Shape.sphere(0.2)
        st_ = RigidBodyState.at_rest(s, 5.0)
        assert st_.mass == pytest.approx(5.0 * s.volume)

    def test_rejects_non_unit_quaternion(self):
        s = RigidBodyState.at_rest(Shape.sphere(1.0), 1.0)
        with pytest.raises(ValueError):
            s.replace(quat=np.array([0, 0, 0, 2.0]))

    def test_immutable(self):
        s = RigidBodyState.at_rest(Shape.sphere(1.0), 1.0)
        with pytest.raises(ValueError):
            s.h[0] = 1.0


class TestVelocityField:
    def test_translation_only(self, grid16):
        s = RigidBodyState.at_rest(Shape.sphere(1.0), 1.0, l=(1.0, -2.0, 0.5))
        v = body_velocity_field(s, grid16)
        assert np.allclose(v.values, np.array([1.0, -2.0, 0.5]).reshape(3, 1, 1, 1))

    def test_spin_about_z(self, grid16):
        h = np.array([0.3, -0.2, 0.1])
        s = RigidBodyState.at_rest(Shape.sphere(1.0), 1.0, h=h, omega=(0, 0, 2.0))
        v = body_velocity_field(s, grid16)
        x, y, _ = np.meshgrid(*[grid16.axis] * 3, indexing="ij")
        # compare on a ball away from the wrap seam
        near = (x - h[0]) ** 2 + (y - h[1]) ** 2 < 1.5**2
        assert np.allclose(v.values[0][near], -2.0 * (y - h[1])[near])
        assert np.allclose(v.values[1][near], 2.0 * (x - h[0])[near])
        assert np.allclose(v.values[2], 0)

    def test_deformation_free(self):
        g = Grid(L, 32)
        s = RigidBodyState.at_rest(Shape.sphere(1.0), 1.0, l=(0.1, 0.2, 0.3), omega=(0.5, -1.0, 0.7))
        D = deformation_tensor(body_velocity_field(s, g), scheme="central")
        c = slice(8, 24)
        assert np.max(np.abs(D[:, :, c, c, c])) < 1e-10


class TestIndicator:
    def test_far_and_deep(self):
        g = Grid(L, 64)
        s = RigidBodyState.at_rest(Shape.sphere(L / 8), 1.0)
        chi = indicator(s.shape, s, g, g.spacing).values
        assert chi[32, 32, 32] == 1.0 and chi[0, 0, 0] == 0.0
        assert np.all((chi >= 0) & (chi <= 1))

    @pytest.mark.parametrize("kind", ["sphere", "ellipsoid"])
    def test_volume_within_two_percent(self, kind):
        g = Grid(L, 64)
        eps = L / 16
        shape = Shape.sphere(eps) if kind == "sphere" else Shape.ellipsoid(eps, 0.8 * eps, 0.7 * eps)
        s = RigidBodyState.at_rest(shape, 1.0, h=(0.05, -0.02, 0.01))
        chi = indicator(shape, s, g, g.spacing).values
        vol = chi.sum() * g.cell_volume
        assert vol == pytest.approx(shape.volume, rel=0.02)

    def test_width_sharpening(self):
        g = Grid(L, 64)
        s = RigidBodyState.at_rest(Shape.sphere(L / 8), 1.0)
        r = np.sqrt(np.sum(g.mesh() ** 2, axis=0))
        sharp = (r < L / 8).astype(float)
        errs = [np.abs(indicator(s.shape, s, g, w * g.spacing).values - sharp).sum() for w in (3.0, 2.0, 1.0)]
        assert errs[0] > errs[1] > errs[2]

    def test_plateaus(self):
        g = Grid(L, 64)
        R = L / 8
        s = RigidBodyState.at_rest(Shape.sphere(R), 1.0)
        w = g.spacing
        chi = indicator(s.shape, s, g, w).values
        X = g.mesh()
        r = np.sqrt(np.sum(X**2, axis=0))
        assert np.all(chi[r < R - w] == 1.0) and np.all(chi[r > R + w] == 0.0)

    def test_width_range(self, grid16):
        s = RigidBodyState.at_rest(Shape.sphere(1.0), 1.0)
        with pytest.raises(ValueError):
            indicator(s.shape, s, grid16, 4 * grid16.spacing)

    def test_under_resolved_body(self, grid16):
        s = RigidBodyState.at_rest(Shape.sphere(grid16.spacing), 1.0)
        with pytest.raises(ValueError, match="under-resolved"):
            indicator(s.shape, s, grid16, grid16.spacing)


class TestAdvance:
    def body(self, **kw):
        return RigidBodyState.at_rest(Shape.ellipsoid(1.0, 0.7, 0.4), 2.0, **kw)

    def test_free_motion(self):
        s = self.body(l=(0.1, 0.2, -0.3), omega=(0.0, 0.0, 0.0))
        n = advance_body(s, np.zeros(3), np.zeros(3), 0.5)
        assert np.allclose(n.l, s.l) and np.allclose(n.omega, s.omega)
        assert np.allclose(n.h, s.h + 0.5 * s.l)

    def test_constant_force(self):
        s = self.body()
        f = np.array([1.0, -0.5, 2.0])
        for _ in range(40):
            s = advance_body(s, f, np.zeros(3), 0.01)
        assert np.allclose(s.l, 40 * 0.01 * f / s.mass, rtol=1e-12)

    def test_sphere_torque_linear_growth(self):
        s = RigidBodyState.at_rest(Shape.sphere(0.5), 3.0)
        tau = np.array([0.0, 0.2, 0.1])
        for _ in range(25):
            s = advance_body(s, np.zeros(3), tau, 0.02)
        assert np.allclose(s.omega, 25 * 0.02 * tau / s.J0[0, 0], rtol=1e-12)

    def test_free_rotation_invariants(self):
        s = self.body(omega=(0.3, 1.0, -0.4))
        M0 = np.linalg.norm(s.angular_momentum)
        E0 = s.rotational_energy
        for _ in range(1000):
            s = advance_body(s, np.zeros(3), np.zeros(3), 1e-3)
            R = s.rotation
            assert np.max(np.abs(R @ R.T - np.eye(3))) < 1e-10
        assert abs(np.linalg.norm(s.angular_momentum) - M0) < 1e-6
        assert abs(s.rotational_energy - E0) < 1e-4 * E0

    def test_mass_constant(self):
        s = self.body(omega=(1.0, 0.0, 0.0))
        n = advance_body(s, np.ones(3), np.ones(3), 0.1)
        assert n.mass == s.mass and n.rho == s.rho

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_non_finite(self, bad):
        with pytest.raises(ValueError, match="non-finite"):
            advance_body(self.body(), [bad, 0, 0], np.zeros(3), 0.1)

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(st.floats(-2, 2), min_size=3, max_size=3),
        st.lists(st.floats(-2, 2), min_size=3, max_size=3),
        st.floats(1e-4, 0.1),
    )
    def test_quaternion_stays_unit(self, f, tau, dt):
        s = self.body(omega=(0.5, -0.2, 0.1))
        for _ in range(5):
            s = advance_body(s, f, tau, dt)
        assert abs(np.linalg.norm(s.quat) - 1) < 1e-12


def test_log_record_round_trip():
    s = RigidBodyState.at_rest(Shape.sphere(0.3), 1.0, h=(0.1, 0.2, 0.3), l=(1e-3, -2.0, 0.5), omega=(0, 1, 0))
    line = format_log_record(0.25, s)
    assert line.startswith("2.50000000000000000e-01 h=(")
    rec = parse_log_record(line)
    assert rec["t"] == 0.25
    for key in ("h", "l", "omega", "quat"):
        assert np.array_equal(rec[key], getattr(s, key))
