"""Penalised pseudo-spectral Navier-Stokes with a free rigid body.

One step does four things in order:

1. advect the velocity fluctuation ``u - mean(u)`` with Heun's method on the
   de-aliased, projected rotational form ``-P[omega x u]``;
2. diffuse exactly in Fourier space, combined with the exact translation by
   the mean velocity (a phase factor);
3. relax the fluid toward the rigid velocity inside the body, implicitly and
   jointly with the body momenta, so the exchanged momentum is exactly
   conserved;
4. project onto divergence-free fields and hand the exchanged force and
   torque to :func:`advance_body`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .biot_savart import stream_function
from .cutoff import CutoffFamily, CutoffProfile, evaluate_cutoff
from .grid import (
    Grid,
    VectorField,
    curl_hat,
    lebesgue_norm,
    periodic_offset,
    project_hat,
    spectral_energy,
    spectral_evaluate,
)
from .rigid_body import RigidBodyState, Shape, advance_body, body_velocity_field, indicator

log = logging.getLogger(__name__)

__all__ = [
    "SimulationConfig",
    "EnergyRecord",
    "Trajectory",
    "BlowUpError",
    "DATUMS",
    "initial_datum",
    "abc_field",
    "make_initial_data",
    "step",
    "run",
    "reference_run",
    "energy_report",
    "write_energy",
    "slip_norm",
]

DATUMS = ("taylor_green", "taylor_green_bump", "gaussian_vortex_ring", "random_band_limited", "abc")


class BlowUpError(RuntimeError):
    """Raised on non-finite state; ``partial`` holds the trajectory so far."""

    def __init__(self, t: float, partial=None):
        super().__init__(f"blow-up at t={t:.17e}")
        self.t = t
        self.partial = partial


def _vec3(x) -> tuple[float, float, float]:
    v = tuple(float(c) for c in x)
    if len(v) != 3:
        raise ValueError("expected three components")
    return v


@dataclass(frozen=True)
class SimulationConfig:
    """All parameters of one run.  ``epsilon = 0`` means no body."""

    nu: float = 0.05
    L: float = 2 * math.pi
    N: int = 32
    dt: float = 0.02
    T: float = 1.0
    epsilon: float = 0.0
    alpha: float = 2.0
    rho0: float = 1.0
    lam: float | None = None
    initial_field_id: str = "taylor_green"
    body_velocity: tuple = (0.0, 0.0, 0.0)
    body_omega: tuple = (0.0, 0.0, 0.0)
    body_center: tuple = (0.0, 0.0, 0.0)
    body_aspect: tuple = (1.0, 1.0, 1.0)
    smoothing_cells: float = 1.0
    output_interval: float | None = None
    seed: int = 0

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        for k in ("body_velocity", "body_omega", "body_center", "body_aspect"):
            set_(k, _vec3(getattr(self, k)))
        if self.lam is None:
            set_("lam", float(self.dt))
        if self.output_interval is None:
            set_("output_interval", float(self.dt))
        self.validate()

    def validate(self) -> None:
        def bad(key, rule):
            raise ValueError(f"{key}: {rule}")

        if not self.nu > 0:
            bad("nu", "must be positive")
        if not self.L > 0:
            bad("L", "must be positive")
        if self.N < 8 or self.N % 2:
            bad("N", "must be even and at least 8")
        if not self.dt > 0:
            bad("dt", "must be positive")
        if not self.T >= 0:
            bad("T", "must be non-negative")
        if not 0 <= self.epsilon <= self.L / 8 * (1 + 1e-12):
            bad("epsilon", "must lie in [0, L/8]")
        if not self.alpha >= 0:
            bad("alpha", "must be non-negative")
        if not self.rho0 > 0:
            bad("rho0", "must be positive")
        if not 0 < self.lam <= self.dt * (1 + 1e-12):
            bad("lam", "must satisfy 0 < lam <= dt")
        if self.initial_field_id not in DATUMS:
            bad("initial_field_id", f"unknown datum; choose from {DATUMS}")
        if min(self.body_aspect) <= 0:
            bad("body_aspect", "must be positive")
        if not 1.0 <= self.smoothing_cells <= 3.0:
            bad("smoothing_cells", "must lie in [1, 3]")
        ratio = self.output_interval / self.dt
        if not self.output_interval > 0 or abs(ratio - round(ratio)) > 1e-9:
            bad("output_interval", "must be a positive multiple of dt")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9:
            bad("T", "must be a multiple of dt")
        if self.has_body and self.epsilon < 2 * self.L / self.N * (1 - 1e-12):
            bad("epsilon", "body under-resolved (needs at least 2 grid spacings)")

    @property
    def grid(self) -> Grid:
        return Grid(self.L, self.N)

    @property
    def has_body(self) -> bool:
        return self.epsilon > 0

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def output_every(self) -> int:
        return int(round(self.output_interval / self.dt))

    @property
    def body_density(self) -> float:
        return self.rho0 * self.epsilon ** (-self.alpha)

    @property
    def shape(self) -> Shape:
        a = np.asarray(self.body_aspect)
        axes = self.epsilon * a / a.max()
        if np.allclose(a, a[0]):
            return Shape.sphere(self.epsilon)
        return Shape.ellipsoid(*axes)

    @property
    def smoothing_width(self) -> float:
        return self.smoothing_cells * self.L / self.N

    def replace(self, **kw) -> "SimulationConfig":
        return replace(self, **kw)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class EnergyRecord:
    t: float
    fluid_kinetic: float
    body_translational: float
    body_rotational: float
    dissipation_integral: float

    @property
    def total(self) -> float:
        return self.fluid_kinetic + self.body_translational + self.body_rotational + self.dissipation_integral

    def line(self) -> str:
        vals = (self.t, self.total, self.fluid_kinetic, self.body_translational, self.body_rotational, self.dissipation_integral)
        return " ".join(f"{v:.17e}" for v in vals)


@dataclass
class Trajectory:
    config: SimulationConfig
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    bodies: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    body_log: list = field(default_factory=list)
    momentum_residuals: list = field(default_factory=list)

    @property
    def initial(self) -> VectorField:
        return self.snapshots[0]

    def center_path(self):
        """Piecewise-linear ``t -> h(t)`` through the per-step body log."""
        if not self.body_log:
            return lambda t: np.asarray(self.config.body_center, float)
        ts = np.array([t for t, _ in self.body_log])
        hs = np.array([b.h for _, b in self.body_log])
        return lambda t: np.array([np.interp(t, ts, hs[:, i]) for i in range(3)])

    def max_speed(self) -> float:
        return max((float(np.linalg.norm(b.l)) for _, b in self.body_log), default=0.0)

    def max_displacement(self) -> float:
        if not self.body_log:
            return 0.0
        h0 = self.body_log[0][1].h
        return max(float(np.linalg.norm(b.h - h0)) for _, b in self.body_log)


# --- initial data ---


def _curl_of(grid: Grid, A: np.ndarray) -> VectorField:
    return VectorField(grid, grid.ifft(curl_hat(grid, grid.fft(A))))


def abc_field(grid: Grid, k: int = 2, coeffs=(1.0, 0.8, 0.6)) -> VectorField:
    """Arnold-Beltrami-Childress field at integer wavenumber ``k``."""
    A, B, C = coeffs
    x, y, z = grid.mesh()
    q = 2 * np.pi * k / grid.L
    return VectorField(
        grid,
        np.stack(
            [
                A * np.sin(q * z) + C * np.cos(q * y),
                B * np.sin(q * x) + A * np.cos(q * z),
                C * np.sin(q * y) + B * np.cos(q * x),
            ]
        ),
    )


def initial_datum(name: str, grid: Grid, seed: int = 0) -> VectorField:
    """Named solenoidal, zero-mean velocity fields on ``grid``."""
    x, y, z = grid.mesh()
    k0 = 2 * np.pi / grid.L
    if name in ("taylor_green", "taylor_green_bump"):
        u = np.stack(
            [np.sin(k0 * x) * np.cos(k0 * y), -np.cos(k0 * x) * np.sin(k0 * y), np.zeros_like(x)]
        )
        tg = VectorField(grid, u)
        if name == "taylor_green":
            return tg
        # localized jet through the origin, carries the body along x
        sigma = grid.L / (4 * np.pi)
        g = np.exp(-(x**2 + y**2 + z**2) / (2 * sigma**2))
        A = np.stack([np.zeros_like(x), np.zeros_like(x), 0.5 * y * g])
        return tg + _curl_of(grid, A)
    if name == "gaussian_vortex_ring":
        R0, sigma = grid.L / 6, grid.L / 20
        rho = np.sqrt(x**2 + y**2)
        g = np.exp(-((rho - R0) ** 2 + z**2) / (2 * sigma**2))
        A = np.stack([-y * g, x * g, np.zeros_like(x)]) / R0
        return _curl_of(grid, A)
    if name == "abc":
        return abc_field(grid)
    if name == "random_band_limited":
        rng = np.random.default_rng(seed)
        A = np.zeros((3,) + grid.shape)
        for _ in range(8):
            m = rng.integers(-3, 4, size=3)
            amp = rng.normal(size=3)
            phase = rng.uniform(0, 2 * np.pi)
            A += amp[:, None, None, None] * np.cos(k0 * (m[0] * x + m[1] * y + m[2] * z) + phase)[None]
        u = _curl_of(grid, A)
        rms = np.sqrt(np.mean(u.values**2))
        return u * (1.0 / rms) if rms > 0 else u
    raise ValueError(f"unknown datum {name!r}")


def make_body(config: SimulationConfig) -> RigidBodyState | None:
    if not config.has_body:
        return None
    shape = config.shape
    return RigidBodyState.at_rest(
        shape, config.body_density, h=config.body_center, l=config.body_velocity, omega=config.body_omega
    )


def make_initial_data(config: SimulationConfig) -> tuple[VectorField, RigidBodyState | None]:
    """Global initial velocity and body state.

    The datum's stream function (anchored at the body centre) is blended with
    the rigid stream function ``l x r / 2 - |r|^2 omega / 2`` through the cut-off
    with plateau radii ``1.5 eps`` and ``2 eps``.  Taking the curl keeps the
    field exactly solenoidal and zero-mean; it is rigid where the cut-off
    vanishes and untouched where it equals one.
    """
    grid = config.grid
    u = initial_datum(config.initial_field_id, grid, config.seed)
    body = make_body(config)
    if body is None:
        return u, None
    fam = CutoffFamily(CutoffProfile(), config.epsilon, body.h, grid)
    eta = evaluate_cutoff(fam).values
    psi = stream_function(u)
    psi_e = psi.values - spectral_evaluate(psi, body.h[None])[0][:, None, None, None]
    r = np.stack(np.broadcast_arrays(*periodic_offset(grid, body.h)))
    l = body.l.reshape(3, 1, 1, 1)
    w = body.omega.reshape(3, 1, 1, 1)
    lxr = np.stack([l[1] * r[2] - l[2] * r[1], l[2] * r[0] - l[0] * r[2], l[0] * r[1] - l[1] * r[0]])
    psi_b = 0.5 * lxr - 0.5 * np.sum(r**2, axis=0) * w
    blend = eta * psi_e + (1.0 - eta) * psi_b
    return _curl_of(grid, blend), body


# --- time stepping ---


def _advective_rhs(grid: Grid, u_hat: np.ndarray) -> np.ndarray:
    """``-P[omega x u']`` for the fluctuation ``u'``, de-aliased by the 2/3 rule."""
    mask = grid.dealias_mask
    uh = u_hat * mask
    uh = uh.copy()
    uh[:, 0, 0, 0] = 0.0
    u = grid.ifft(uh)
    w = grid.ifft(curl_hat(grid, uh))
    cross = np.stack([w[1] * u[2] - w[2] * u[1], w[2] * u[0] - w[0] * u[2], w[0] * u[1] - w[1] * u[0]])
    return -project_hat(grid, grid.fft(cross) * mask)


def advective_operator(u: VectorField) -> VectorField:
    """The solver's discrete ``-(u . grad) u`` up to a gradient, mean flow excluded."""
    g = u.grid
    return VectorField(g, g.ifft(_advective_rhs(g, g.fft(u.values))))


def _penalize(u: np.ndarray, chi: np.ndarray, body: RigidBodyState, grid: Grid, k: float):
    """Implicit joint relaxation; returns new fluid values and rigid velocities."""
    dv = grid.cell_volume
    active = chi > 0
    r = np.stack(np.broadcast_arrays(*periodic_offset(grid, body.h)))[:, active]
    c = chi[active]
    ua = u[:, active]
    w = k * c / (1.0 + k * c)
    W = dv * w.sum()
    S1 = dv * (r * w).sum(axis=1)
    rr = dv * (r * w) @ r.T
    S2 = rr - np.trace(rr) * np.eye(3)  # sum w [r]x[r]x
    Fu = dv * (ua * w).sum(axis=1)
    Tu = dv * (np.cross(r.T, ua.T) * w[:, None]).sum(axis=0)
    X1 = np.array([[0, -S1[2], S1[1]], [S1[2], 0, -S1[0]], [-S1[1], S1[0], 0]])
    J = body.J
    A = np.zeros((6, 6))
    A[:3, :3] = (body.mass + W) * np.eye(3)
    A[:3, 3:] = -X1
    A[3:, :3] = X1
    A[3:, 3:] = J - S2
    rhs = np.concatenate([body.mass * body.l + Fu, J @ body.omega + Tu])
    sol = np.linalg.solve(A, rhs)
    l_new, w_new = sol[:3], sol[3:]
    ub = l_new[:, None] + np.cross(w_new, r.T).T
    out = u.copy()
    out[:, active] = (ua + k * c * ub) / (1.0 + k * c)
    return out, l_new, w_new


def _step_impl(u: VectorField, body, config: SimulationConfig, diag: dict):
    grid = u.grid
    dt = config.dt
    u_hat = grid.fft(u.values)
    mean = u.values.mean(axis=(1, 2, 3))
    # (1) Heun on the fluctuation
    k1 = _advective_rhs(grid, u_hat)
    u1 = u_hat + dt * k1
    k2 = _advective_rhs(grid, u1)
    u_hat = u_hat + 0.5 * dt * (k1 + k2)
    # (2) exact diffusion
    before = spectral_energy(grid, u_hat)
    u_hat = u_hat * np.exp(-config.nu * grid.k2 * dt)
    diag["dissipated"] = before - spectral_energy(grid, u_hat)
    vals = grid.ifft(u_hat)
    diag["momentum_residual"] = 0.0
    if body is not None:
        # (3) implicit penalization, jointly with the body
        chi = indicator(body.shape, body, grid, config.smoothing_width).values
        k = dt / config.lam
        p_before = vals.sum(axis=(1, 2, 3)) * grid.cell_volume
        vals, l_new, w_new = _penalize(vals, chi, body, grid, k)
        p_after = vals.sum(axis=(1, 2, 3)) * grid.cell_volume
        dp = (p_after - p_before) + body.mass * (l_new - body.l)
        scale = np.sum(np.abs(vals)) * grid.cell_volume + body.mass * np.linalg.norm(body.l) + 1e-300
        diag["momentum_residual"] = float(np.linalg.norm(dp) / scale)
        force = body.mass * (l_new - body.l) / dt
        torque = body.J @ (w_new - body.omega) / dt
    # (4) projection, then carry everything along with the mean flow; doing the
    # translation last keeps the step exactly Galilean when the drift is grid-aligned
    kx, ky, kz = grid.wavenumbers  # Nyquist kept: a one-cell shift must flip its sign
    shift = np.exp(-1j * (kx * mean[0] + ky * mean[1] + kz * mean[2]) * dt)
    vals = grid.ifft(project_hat(grid, grid.fft(vals)) * shift)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError
    if body is not None:
        body = advance_body(body, force, torque, dt)
        if not (np.all(np.isfinite(body.h)) and np.all(np.isfinite(body.omega))):
            raise FloatingPointError
    return VectorField(grid, vals), body


def step(u: VectorField, body, config: SimulationConfig, diagnostics: dict | None = None):
    """Advance ``(u, body)`` by one time step ``config.dt``."""
    diag = {} if diagnostics is None else diagnostics
    try:
        return _step_impl(u, body, config, diag)
    except (FloatingPointError, ValueError) as exc:
        if isinstance(exc, ValueError) and "non-finite" not in str(exc):
            raise
        raise BlowUpError(diag.get("t", float("nan"))) from exc


def _energy(u: VectorField, body, config: SimulationConfig, t: float, dissipation: float) -> EnergyRecord:
    dv = u.grid.cell_volume
    sq = np.sum(u.values**2, axis=0)
    if body is None:
        return EnergyRecord(t, float(sq.sum() * dv), 0.0, 0.0, dissipation)
    chi = indicator(body.shape, body, u.grid, config.smoothing_width).values
    return EnergyRecord(
        t, float(np.sum((1 - chi) * sq) * dv), body.translational_energy, body.rotational_energy, dissipation
    )


def _stability_check(u: VectorField, config: SimulationConfig, t: float) -> None:
    umax = float(np.sqrt(np.max(np.sum(u.values**2, axis=0))))
    if umax > 0 and config.dt > 0.5 * u.grid.spacing / umax:
        log.warning("t=%.4g: dt=%.3g exceeds 0.5*spacing/|u|max=%.3g", t, config.dt, 0.5 * u.grid.spacing / umax)


def slip_norm(u: VectorField, body, config: SimulationConfig) -> float:
    """``||chi (u - u_body)||_{L^2}``: how far the fluid is from rigid motion inside the body."""
    if body is None:
        return 0.0
    chi = indicator(body.shape, body, u.grid, config.smoothing_width)
    return lebesgue_norm(chi * (u - body_velocity_field(body, u.grid)))


def run(config: SimulationConfig, keep_snapshots: bool = True, initial=None, on_snapshot=None) -> Trajectory:
    """Integrate over ``[0, T]``.

    ``initial`` overrides ``make_initial_data``; ``on_snapshot(t, u, body)``
    is called at every output time (snapshots are still stored unless
    ``keep_snapshots`` is false).
    """
    u, body = make_initial_data(config) if initial is None else initial
    traj = Trajectory(config)
    dissipation = 0.0
    t = 0.0

    def emit(t, u, body):
        traj.times.append(t)
        traj.bodies.append(body)
        if keep_snapshots or not traj.snapshots:
            traj.snapshots.append(u)
        if on_snapshot is not None:
            on_snapshot(t, u, body)

    emit(0.0, u, body)
    traj.energies.append(_energy(u, body, config, 0.0, 0.0))
    if body is not None:
        traj.body_log.append((0.0, body))
    _stability_check(u, config, 0.0)
    for n in range(1, config.n_steps + 1):
        diag = {"t": n * config.dt}
        try:
            u, body = step(u, body, config, diag)
        except BlowUpError as exc:
            exc.partial = traj
            raise
        t = n * config.dt
        dissipation += diag["dissipated"]
        traj.energies.append(_energy(u, body, config, t, dissipation))
        traj.momentum_residuals.append(diag["momentum_residual"])
        if body is not None:
            traj.body_log.append((t, body))
        if n % config.output_every == 0:
            emit(t, u, body)
            _stability_check(u, config, t)
    return traj


def reference_run(config: SimulationConfig, **kw) -> Trajectory:
    """Same numerics and datum with the body removed."""
    return run(config.replace(epsilon=0.0), **kw)


def energy_report(traj: Trajectory) -> list[EnergyRecord]:
    return list(traj.energies)


def write_energy(path, records) -> None:
    with open(path, "w") as fh:
        fh.write("# t total fluid body_trans body_rot dissipation\n")
        for rec in records:
            fh.write(rec.line() + "\n")
