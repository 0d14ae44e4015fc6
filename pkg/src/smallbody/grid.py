"""Periodic-box fields and spectral operators.

Whole-space problems are truncated to the cube ``[-L/2, L/2)^3`` sampled at
``N`` nodes per axis.  Derivatives are taken in Fourier space with physical
wavenumbers ``k = 2*pi*m/L``; the Nyquist mode is dropped from every odd
derivative so that ``div(curl)`` and ``curl(grad)`` vanish to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "gradient",
    "divergence",
    "curl",
    "laplacian",
    "deformation_tensor",
    "leray_project",
    "lebesgue_norm",
    "sobolev_norm",
    "inner",
    "interpolate",
    "spectral_evaluate",
    "periodic_offset",
    "write_snapshot",
    "read_snapshot",
]

SOBOLEV_ORDERS = (-3, -2, -1, 0, 1, 2)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the cube ``[-L/2, L/2)^3``."""

    L: float
    N: int

    def __post_init__(self):
        if not np.isfinite(self.L) or self.L <= 0:
            raise ValueError(f"box length must be positive, got {self.L}")
        if int(self.N) != self.N or self.N < 8 or self.N % 2:
            raise ValueError(f"resolution must be an even integer >= 8, got {self.N}")

    @property
    def spacing(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.N)

    @cached_property
    def axis(self) -> np.ndarray:
        return -0.5 * self.L + self.spacing * np.arange(self.N)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Node coordinates as three broadcastable arrays (ij indexing)."""
        a = self.axis
        return a[:, None, None], a[None, :, None], a[None, None, :]

    def mesh(self) -> np.ndarray:
        """Dense ``(3, N, N, N)`` array of node coordinates."""
        return np.stack(np.broadcast_arrays(*self.coords)).astype(float)

    # --- spectral bookkeeping (real FFT layout: last axis halved) ---

    @cached_property
    def _k1d(self) -> tuple[np.ndarray, np.ndarray]:
        full = 2 * np.pi * sfft.fftfreq(self.N, d=self.spacing)
        half = 2 * np.pi * sfft.rfftfreq(self.N, d=self.spacing)
        return full, half

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Physical wavenumbers (Nyquist kept) on the rfft layout."""
        full, half = self._k1d
        return full[:, None, None], full[None, :, None], half[None, None, :]

    @cached_property
    def deriv_wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers for odd derivatives, Nyquist zeroed."""
        full, half = self._k1d
        full = full.copy()
        half = half.copy()
        full[self.N // 2] = 0.0
        half[-1] = 0.0
        return full[:, None, None], full[None, :, None], half[None, None, :]

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.wavenumbers
        return kx**2 + ky**2 + kz**2

    @cached_property
    def kd2(self) -> np.ndarray:
        kx, ky, kz = self.deriv_wavenumbers
        return kx**2 + ky**2 + kz**2

    @cached_property
    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each rfft coefficient in the full spectrum."""
        w = np.full(self.N // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return np.broadcast_to(w[None, None, :], (self.N, self.N, self.N // 2 + 1))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds truncation mask on integer mode numbers."""
        full = sfft.fftfreq(self.N, d=1.0 / self.N)
        half = sfft.rfftfreq(self.N, d=1.0 / self.N)
        cut = self.N / 3.0
        return (
            (np.abs(full)[:, None, None] < cut)
            & (np.abs(full)[None, :, None] < cut)
            & (np.abs(half)[None, None, :] < cut)
        )

    def fft(self, values: np.ndarray) -> np.ndarray:
        return sfft.rfftn(values, axes=(-3, -2, -1), workers=-1)

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.irfftn(coeffs, s=self.shape, axes=(-3, -2, -1), workers=-1)


def periodic_offset(grid: Grid, center: Sequence[float]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum-image displacement ``x - center`` for every node."""
    L = grid.L
    out = []
    for x, c in zip(grid.coords, center):
        out.append((x - c + 0.5 * L) % L - 0.5 * L)
    return tuple(out)


class _Field:
    grid: Grid
    values: np.ndarray

    def _coerce(self, other):
        if isinstance(other, _Field):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return type(self)(self.grid, self.values + self._coerce(other))

    def __sub__(self, other):
        return type(self)(self.grid, self.values - self._coerce(other))

    def __neg__(self):
        return type(self)(self.grid, -self.values)

    def __mul__(self, other):
        if isinstance(other, ScalarField) and isinstance(self, VectorField):
            return VectorField(self.grid, self.values * other.values[None])
        if isinstance(other, VectorField) and isinstance(self, ScalarField):
            return VectorField(self.grid, self.values[None] * other.values)
        return type(self)(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__
    __radd__ = __add__

    def copy(self):
        return type(self)(self.grid, self.values.copy())


@dataclass(eq=False)
class ScalarField(_Field):
    """Real nodal values of shape ``(N, N, N)``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"scalar field shape {self.values.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar field has non-finite values")

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))


@dataclass(eq=False)
class VectorField(_Field):
    """Real nodal values of shape ``(3, N, N, N)``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (3,) + self.grid.shape:
            raise ValueError(f"vector field shape {self.values.shape} != (3,) + {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("vector field has non-finite values")

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((3,) + grid.shape))

    def __getitem__(self, i: int) -> np.ndarray:
        return self.values[i]

    def dot(self, other: "VectorField") -> ScalarField:
        return ScalarField(self.grid, np.einsum("i...,i...->...", self.values, other.values))

    def cross(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, _cross(self.values, other.values))

    def magnitude(self) -> ScalarField:
        return ScalarField(self.grid, np.sqrt(np.sum(self.values**2, axis=0)))


Field = Union[ScalarField, VectorField]


def _cross(a, b):
    return np.stack(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


# --- coefficient-level kernels (shared with the solver) ---


def grad_hat(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.deriv_wavenumbers
    return np.stack([1j * kx * f_hat, 1j * ky * f_hat, 1j * kz * f_hat])


def div_hat(grid: Grid, v_hat: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.deriv_wavenumbers
    return 1j * (kx * v_hat[0] + ky * v_hat[1] + kz * v_hat[2])


def curl_hat(grid: Grid, v_hat: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.deriv_wavenumbers
    return 1j * np.stack(
        [
            ky * v_hat[2] - kz * v_hat[1],
            kz * v_hat[0] - kx * v_hat[2],
            kx * v_hat[1] - ky * v_hat[0],
        ]
    )


def project_hat(grid: Grid, v_hat: np.ndarray) -> np.ndarray:
    """Remove the longitudinal part ``k (k . v) / |k|^2`` mode by mode."""
    kx, ky, kz = grid.deriv_wavenumbers
    kd2 = grid.kd2
    inv = np.divide(1.0, kd2, out=np.zeros_like(kd2), where=kd2 > 0)
    kv = (kx * v_hat[0] + ky * v_hat[1] + kz * v_hat[2]) * inv
    return np.stack([v_hat[0] - kx * kv, v_hat[1] - ky * kv, v_hat[2] - kz * kv])


# --- field-level operators ---


def gradient(f: ScalarField) -> VectorField:
    g = f.grid
    return VectorField(g, g.ifft(grad_hat(g, g.fft(f.values))))


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    return ScalarField(g, g.ifft(div_hat(g, g.fft(v.values))))


def curl(v: VectorField) -> VectorField:
    g = v.grid
    return VectorField(g, g.ifft(curl_hat(g, g.fft(v.values))))


def laplacian(v: Field) -> Field:
    g = v.grid
    return type(v)(g, g.ifft(-g.k2 * g.fft(v.values)))


def velocity_gradient(v: VectorField, scheme: str = "spectral") -> np.ndarray:
    """Array ``G[i, j] = d v_i / d x_j`` of shape ``(3, 3, N, N, N)``.

    ``scheme="central"`` uses second-order centred differences with periodic
    wrap.  They are exact for fields that are affine on the stencil, which is
    what rigid-motion checks need away from the wrap seam.
    """
    g = v.grid
    if scheme == "central":
        h2 = 2.0 * g.spacing
        return np.stack(
            [
                np.stack([(np.roll(v.values[i], -1, axis=j) - np.roll(v.values[i], 1, axis=j)) / h2 for j in range(3)])
                for i in range(3)
            ]
        )
    if scheme != "spectral":
        raise ValueError(f"unknown derivative scheme {scheme!r}")
    v_hat = g.fft(v.values)
    return np.stack([g.ifft(grad_hat(g, v_hat[i])) for i in range(3)])


def deformation_tensor(v: VectorField, scheme: str = "spectral") -> np.ndarray:
    """Symmetric part of the velocity gradient, shape ``(3, 3, N, N, N)``."""
    G = velocity_gradient(v, scheme)
    return 0.5 * (G + np.swapaxes(G, 0, 1))


def leray_project(v: VectorField) -> VectorField:
    g = v.grid
    return VectorField(g, g.ifft(project_hat(g, g.fft(v.values))))


# --- norms and inner products ---


def _ball_mask(grid: Grid, center, radius: float) -> np.ndarray:
    if radius >= 0.5 * grid.L:
        raise ValueError(f"region exceeds box: radius {radius} >= L/2 = {0.5 * grid.L}")
    dx, dy, dz = periodic_offset(grid, center)
    return dx**2 + dy**2 + dz**2 <= radius**2


def _pointwise_magnitude(f) -> np.ndarray:
    vals = f.values if isinstance(f, _Field) else np.asarray(f)
    if isinstance(f, VectorField) or (vals.ndim == 4):
        return np.sqrt(np.sum(vals**2, axis=0))
    return np.abs(vals)


def lebesgue_norm(f: Field, q: float = 2.0, region: tuple | None = None) -> float:
    """Rectangle-rule ``L^q`` norm, optionally restricted to a ball.

    ``region`` is ``(center, radius)``; membership uses the periodic distance.
    """
    if not (q == np.inf or q >= 1):
        raise ValueError(f"exponent q must be in [1, inf], got {q}")
    mag = _pointwise_magnitude(f)
    if region is not None:
        center, radius = region
        mag = mag[_ball_mask(f.grid, center, radius)]
    if mag.size == 0:
        return 0.0
    if q == np.inf:
        return float(mag.max())
    return float((np.sum(mag**q) * f.grid.cell_volume) ** (1.0 / q))


def inner(a: Field, b: Field) -> float:
    """Rectangle-rule ``L^2`` inner product."""
    return float(np.sum(a.values * b.values) * a.grid.cell_volume)


def spectral_energy(grid: Grid, coeffs: np.ndarray, weight: np.ndarray | None = None) -> float:
    """``sum_k w(k) |v_hat(k)|^2`` normalised so that ``w = 1`` gives ``||v||_{L^2}^2``."""
    power = np.abs(coeffs) ** 2
    if power.ndim == 4:
        power = power.sum(axis=0)
    if weight is not None:
        power = power * weight
    scale = grid.cell_volume / grid.N**3
    return float(np.sum(power * grid.rfft_weights) * scale)


def sobolev_norm(v: Field, s: int) -> float:
    """Spectral ``H^s`` norm with weight ``(1 + |k|^2)^s``."""
    if s not in SOBOLEV_ORDERS:
        raise ValueError(f"unsupported Sobolev order {s}; choose from {SOBOLEV_ORDERS}")
    g = v.grid
    return float(np.sqrt(spectral_energy(g, g.fft(v.values), (1.0 + g.k2) ** s)))


# --- point evaluation ---


def interpolate(f: Field, x: Sequence[float]):
    """Trilinear interpolation with periodic wrap.

    Returns a float for scalar fields and a length-3 array for vector fields.
    """
    g = f.grid
    s = (np.asarray(x, dtype=float) + 0.5 * g.L) / g.spacing
    base = np.floor(s)
    frac = s - base
    i0 = base.astype(int) % g.N
    i1 = (i0 + 1) % g.N
    vals = f.values if f.values.ndim == 4 else f.values[None]
    out = np.zeros(vals.shape[0])
    for cx, wx in ((i0[0], 1 - frac[0]), (i1[0], frac[0])):
        for cy, wy in ((i0[1], 1 - frac[1]), (i1[1], frac[1])):
            for cz, wz in ((i0[2], 1 - frac[2]), (i1[2], frac[2])):
                out += wx * wy * wz * vals[:, cx, cy, cz]
    return out if isinstance(f, VectorField) else float(out[0])


def spectral_evaluate(f: Field, points: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``f`` at arbitrary points.

    ``points`` has shape ``(P, 3)``; returns ``(P,)`` or ``(P, 3)``.
    The Nyquist plane is dropped, which is exact for fields without
    Nyquist content.
    """
    g = f.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    coeffs = np.fft.fftn(f.values, axes=(-3, -2, -1)) / g.N**3
    m = np.fft.fftfreq(g.N, d=1.0 / g.N)
    keep = np.abs(m) < g.N / 2
    m = m[keep]
    k = 2 * np.pi * m / g.L
    sel = np.ix_(keep, keep, keep)
    c = coeffs[(Ellipsis,) + sel] if coeffs.ndim == 4 else coeffs[sel]
    # phases relative to the box origin -L/2
    rel = pts + 0.5 * g.L
    ex = np.exp(1j * np.outer(rel[:, 0], k))
    ey = np.exp(1j * np.outer(rel[:, 1], k))
    ez = np.exp(1j * np.outer(rel[:, 2], k))
    if c.ndim == 3:
        out = np.einsum("abc,pa,pb,pc->p", c, ex, ey, ez, optimize=True)
        return out.real
    out = np.einsum("iabc,pa,pb,pc->pi", c, ex, ey, ez, optimize=True)
    return out.real


# --- persistence ---


def write_snapshot(path, f: Field) -> None:
    """Plain-text snapshot: header line then one node per row, x fastest."""
    g = f.grid
    comps = 3 if isinstance(f, VectorField) else 1
    vals = f.values.reshape((comps,) + g.shape)
    # x-fastest order == Fortran order over (x, y, z)
    cols = np.stack([vals[c].ravel(order="F") for c in range(comps)], axis=1)
    with open(path, "w") as fh:
        fh.write(f"GRID L={g.L!r} N={g.N} COMPONENTS={comps}\n")
        np.savetxt(fh, cols, fmt="%.17e")


def read_snapshot(path) -> Field:
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "GRID":
            raise ValueError(f"{path}: missing GRID header")
        meta = dict(tok.split("=", 1) for tok in header[1:])
        grid = Grid(float(meta["L"]), int(meta["N"]))
        comps = int(meta["COMPONENTS"])
        if comps not in (1, 3):
            raise ValueError(f"{path}: COMPONENTS must be 1 or 3")
        cols = np.loadtxt(fh, ndmin=2)
    if cols.shape != (grid.N**3, comps):
        raise ValueError(f"{path}: expected {grid.N**3} rows of {comps} columns, got {cols.shape}")
    vals = np.stack([cols[:, c].reshape(grid.shape, order="F") for c in range(comps)])
    if comps == 1:
        return ScalarField(grid, vals[0])
    return VectorField(grid, vals)
