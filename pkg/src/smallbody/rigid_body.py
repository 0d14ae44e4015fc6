"""Rigid body geometry, kinematics and the explicit momentum update.

Orientation is a unit quaternion in scipy's scalar-last ``(x, y, z, w)``
order.  Angular velocities are expressed in the lab frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .grid import Grid, ScalarField, VectorField, periodic_offset

__all__ = [
    "Shape",
    "RigidBodyState",
    "inertia_tensor",
    "voxel_inertia_tensor",
    "body_velocity_field",
    "indicator",
    "advance_body",
    "format_log_record",
    "parse_log_record",
    "MIN_BODY_CELLS",
]

MIN_BODY_CELLS = 2.0
QUAT_TOL = 1e-10


@dataclass(frozen=True)
class Shape:
    """A sphere or an ellipsoid centred on its centre of mass."""

    kind: str
    semi_axes: tuple[float, float, float]

    def __post_init__(self):
        if self.kind not in ("sphere", "ellipsoid"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        axes = tuple(float(a) for a in self.semi_axes)
        if len(axes) != 3 or not all(np.isfinite(axes)) or min(axes) <= 0:
            raise ValueError(f"degenerate shape: semi-axes {self.semi_axes}")
        if self.kind == "sphere" and len(set(axes)) != 1:
            raise ValueError("a sphere needs equal semi-axes")
        object.__setattr__(self, "semi_axes", axes)

    @classmethod
    def sphere(cls, radius: float) -> "Shape":
        return cls("sphere", (radius,) * 3)

    @classmethod
    def ellipsoid(cls, a: float, b: float, c: float) -> "Shape":
        return cls("ellipsoid", (a, b, c))

    @property
    def volume(self) -> float:
        a, b, c = self.semi_axes
        return 4.0 / 3.0 * np.pi * a * b * c

    @property
    def bounding_radius(self) -> float:
        return max(self.semi_axes)

    def level(self, x0: np.ndarray) -> np.ndarray:
        """``sum (x_i / a_i)^2`` for body-frame points ``x0`` of shape ``(3, ...)``."""
        a = np.asarray(self.semi_axes).reshape((3,) + (1,) * (x0.ndim - 1))
        return np.sum((x0 / a) ** 2, axis=0)

    def contains(self, x0: np.ndarray) -> np.ndarray:
        return self.level(x0) <= 1.0

    def normal(self, x0: np.ndarray) -> np.ndarray:
        """Outward unit normal of the level surface through ``x0`` (shape ``(3, ...)``)."""
        a = np.asarray(self.semi_axes).reshape((3,) + (1,) * (x0.ndim - 1))
        g = x0 / a**2
        return g / np.linalg.norm(g, axis=0)


def inertia_tensor(shape: Shape, rho: float) -> np.ndarray:
    """Body-frame inertia of a homogeneous ellipsoid of density ``rho``."""
    if not rho > 0:
        raise ValueError("density must be positive")
    a, b, c = shape.semi_axes
    m = rho * shape.volume
    return np.diag([m * (b * b + c * c), m * (a * a + c * c), m * (a * a + b * b)]) / 5.0


def voxel_inertia_tensor(shape: Shape, rho: float, cells: int = 96) -> np.ndarray:
    """Brute-force inertia by summing cell-centre voxels inside the shape."""
    R = shape.bounding_radius
    h = 2 * R / cells
    ax = -R + (np.arange(cells) + 0.5) * h
    X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"))
    inside = shape.contains(X)
    p = X[:, inside]
    dm = rho * h**3
    r2 = np.sum(p**2, axis=0)
    return dm * (np.eye(3) * r2.sum() - p @ p.T)


@dataclass(frozen=True)
class RigidBodyState:
    h: np.ndarray
    quat: np.ndarray
    l: np.ndarray
    omega: np.ndarray
    mass: float
    J0: np.ndarray
    rho: float
    shape: Shape = field(default_factory=lambda: Shape.sphere(1.0))

    def __post_init__(self):
        for name in ("h", "quat", "l", "omega"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        J0 = np.asarray(self.J0, dtype=float)
        object.__setattr__(self, "J0", J0)
        if self.h.shape != (3,) or self.l.shape != (3,) or self.omega.shape != (3,) or self.quat.shape != (4,):
            raise ValueError("body state vectors have wrong shapes")
        if abs(np.linalg.norm(self.quat) - 1.0) > QUAT_TOL:
            raise ValueError("quaternion is not unit-norm")
        if not np.allclose(J0, J0.T) or np.linalg.eigvalsh(J0).min() <= 0:
            raise ValueError("inertia must be symmetric positive definite")
        if not self.mass > 0:
            raise ValueError("mass must be positive")

    @classmethod
    def at_rest(cls, shape: Shape, rho: float, h=(0.0, 0.0, 0.0), l=(0.0, 0.0, 0.0), omega=(0.0, 0.0, 0.0)):
        return cls(
            h=np.asarray(h, float),
            quat=np.array([0.0, 0.0, 0.0, 1.0]),
            l=np.asarray(l, float),
            omega=np.asarray(omega, float),
            mass=rho * shape.volume,
            J0=inertia_tensor(shape, rho),
            rho=rho,
            shape=shape,
        )

    @property
    def rotation(self) -> np.ndarray:
        return Rotation.from_quat(self.quat).as_matrix()

    @property
    def J(self) -> np.ndarray:
        R = self.rotation
        return R @ self.J0 @ R.T

    @property
    def angular_momentum(self) -> np.ndarray:
        return self.J @ self.omega

    @property
    def translational_energy(self) -> float:
        return float(self.mass * self.l @ self.l)

    @property
    def rotational_energy(self) -> float:
        return float(self.angular_momentum @ self.omega)

    def replace(self, **kw) -> "RigidBodyState":
        return replace(self, **kw)


def body_velocity_field(state: RigidBodyState, grid: Grid) -> VectorField:
    """``l + omega x (x - h)`` at every node, with the minimum-image offset."""
    r = np.stack(np.broadcast_arrays(*periodic_offset(grid, state.h)))
    w = state.omega.reshape(3, 1, 1, 1)
    rot = np.stack(
        [w[1] * r[2] - w[2] * r[1], w[2] * r[0] - w[0] * r[2], w[0] * r[1] - w[1] * r[0]]
    )
    return VectorField(grid, rot + state.l.reshape(3, 1, 1, 1))


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s**2)


def indicator(shape: Shape, state: RigidBodyState, grid: Grid, smoothing_width: float) -> ScalarField:
    """Smoothed characteristic function of the body.

    The transition is placed in the cubed level variable ``c = level^(3/2)``,
    whose sub-level sets have volume proportional to ``c``; an odd-symmetric
    ramp in ``c`` therefore integrates to the exact body volume.  The ramp
    half-width is chosen so that the transition stays inside the band of
    physical half-width ``smoothing_width`` around the surface (exactly so
    for spheres, along the longest axis for ellipsoids).
    """
    dx = grid.spacing
    if not (1.0 - 1e-12) * dx <= smoothing_width <= (3.0 + 1e-12) * dx:
        raise ValueError("smoothing width must lie in [1, 3] grid spacings")
    if shape.bounding_radius < MIN_BODY_CELLS * dx * (1 - 1e-12):
        raise ValueError(
            f"body under-resolved: radius {shape.bounding_radius / dx:.3g} spacings < {MIN_BODY_CELLS:g}"
        )
    r = np.stack(np.broadcast_arrays(*periodic_offset(grid, state.h)))
    x0 = np.einsum("ji,j...->i...", state.rotation, r)
    c = shape.level(x0) ** 1.5
    # the ramp [1 - delta, 1 + delta] in c maps inside [a - w, a + w] in radius
    delta = 1.0 - max(0.0, 1.0 - smoothing_width / shape.bounding_radius) ** 3
    chi = 1.0 - _smoothstep((c - 1.0 + delta) / (2.0 * delta))
    return ScalarField(grid, chi)


def advance_body(state: RigidBodyState, force, torque, dt: float) -> RigidBodyState:
    """Symplectic-Euler step on linear and angular momentum.

    The angular momentum ``J omega`` is advanced first, the orientation is
    rotated by the resulting angular velocity, and ``omega`` is recovered
    from the conserved momentum with the new inertia.
    """
    force = np.asarray(force, dtype=float)
    torque = np.asarray(torque, dtype=float)
    if not (np.all(np.isfinite(force)) and np.all(np.isfinite(torque))):
        raise ValueError("non-finite force or torque")
    if not dt > 0:
        raise ValueError("dt must be positive")
    l_new = state.l + dt * force / state.mass
    M = state.J @ state.omega + dt * torque
    w_mid = np.linalg.solve(state.J, M)
    rot = Rotation.from_rotvec(w_mid * dt) * Rotation.from_quat(state.quat)
    q = rot.as_quat()
    q /= np.linalg.norm(q)
    R = rot.as_matrix()
    J_new = R @ state.J0 @ R.T
    return state.replace(h=state.h + dt * l_new, quat=q, l=l_new, omega=np.linalg.solve(J_new, M))


def _vec(v) -> str:
    return "(" + ",".join(f"{x:.17e}" for x in v) + ")"


def format_log_record(t: float, state: RigidBodyState) -> str:
    return f"{t:.17e} h={_vec(state.h)} l={_vec(state.l)} omega={_vec(state.omega)} quat={_vec(state.quat)}"


def parse_log_record(line: str) -> dict:
    head, *rest = line.split()
    out = {"t": float(head)}
    for tok in rest:
        key, val = tok.split("=", 1)
        out[key] = np.array([float(x) for x in val.strip("()").split(",")])
    return out
