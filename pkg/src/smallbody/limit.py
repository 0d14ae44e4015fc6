"""Vanishing-body experiments: epsilon sweeps, weak residuals and the Xi diagnostic."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .biot_savart import stream_function
from .cutoff import CutoffFamily, CutoffProfile, cutoff_gradient, evaluate_cutoff, make_test_function
from .grid import (
    VectorField,
    curl,
    curl_hat,
    grad_hat,
    inner,
    laplacian,
    lebesgue_norm,
    sobolev_norm,
    spectral_energy,
    spectral_evaluate,
)
from .rates import fit_rate
from .solver import BlowUpError, SimulationConfig, Trajectory, advective_operator, run, slip_norm

log = logging.getLogger(__name__)

__all__ = [
    "SweepPlan",
    "SweepRecord",
    "SweepReport",
    "run_sweep",
    "TestField",
    "WeakResidual",
    "WeakResidualAccumulator",
    "weak_residual",
    "XiReport",
    "xi_values",
    "xi_diagnostic",
    "holder_constant",
    "xi_representer",
    "DualResidualAccumulator",
    "dual_holder_constant",
    "default_xi_fields",
    "fit_rate",
]


# --- time-dependent test fields ---


@dataclass
class TestField:
    """``phi(t, x) = theta(t) Phi(x)`` with ``theta = cos^2(pi t / (2 T))``.

    ``theta`` and ``theta'`` both vanish at ``T``, so the field has compact
    support in ``[0, T]`` in the sense needed by the weak form.
    """

    __test__ = False

    spatial: VectorField
    T: float

    def theta(self, t: float) -> float:
        return math.cos(0.5 * math.pi * t / self.T) ** 2

    def dtheta(self, t: float) -> float:
        a = 0.5 * math.pi / self.T
        return -a * math.sin(2 * a * t)

    def __add__(self, other: "TestField") -> "TestField":
        if not math.isclose(self.T, other.T):
            raise ValueError("test fields must share the horizon")
        return TestField(self.spatial + other.spatial, self.T)


@dataclass
class WeakResidual:
    time_term: float
    viscous_term: float
    convective_term: float
    initial_term: float
    norm: float

    @property
    def signed(self) -> float:
        return -self.time_term + self.viscous_term + self.convective_term - self.initial_term

    @property
    def value(self) -> float:
        return abs(self.signed) / self.norm if self.norm > 0 else 0.0


def _trapezoid(times, vals) -> float:
    return float(np.trapezoid(vals, times)) if len(times) > 1 else 0.0


class _MovingTest:
    """``Phi_eps(t)`` and ``d/dt Phi_eps(t)`` for a cut-off following the body."""

    def __init__(self, Phi: VectorField, eps: float, profile: CutoffProfile):
        self.Phi = Phi
        self.eps = eps
        self.profile = profile
        self.psi = stream_function(Phi)
        g = Phi.grid
        psi_hat = g.fft(self.psi.values)
        # rows of d_j psi_i for spectral point evaluation
        self._dpsi = [VectorField(g, g.ifft(grad_hat(g, psi_hat[i]))) for i in range(3)]

    def fields(self, h, hdot):
        g = self.Phi.grid
        fam = CutoffFamily(self.profile, self.eps, np.asarray(h, float), g)
        value = make_test_function(self.Phi, fam)
        anchor = spectral_evaluate(self.psi, np.asarray(h, float)[None])[0]
        psi_eps = self.psi.values - anchor[:, None, None, None]
        eta = evaluate_cutoff(fam).values
        grad_eta = cutoff_gradient(fam).values
        G = np.stack([spectral_evaluate(d, np.asarray(h, float)[None])[0] for d in self._dpsi])
        hdot = np.asarray(hdot, float)
        deta = -np.einsum("i,i...->...", hdot, grad_eta)
        dpsi = -(G @ hdot)  # d/dt of the anchor shift
        rate = deta[None] * psi_eps + eta[None] * dpsi[:, None, None, None]
        return value, curl(VectorField(g, rate))


def _convective(u: VectorField) -> VectorField:
    """The solver's ``(u . grad) u`` modulo gradients, mean-flow part included."""
    g = u.grid
    mean = u.values.mean(axis=(1, 2, 3))
    u_hat = g.fft(u.values)
    kx, ky, kz = g.deriv_wavenumbers
    adv = 1j * (kx * mean[0] + ky * mean[1] + kz * mean[2]) * u_hat
    return VectorField(g, g.ifft(adv)) - advective_operator(u)


class WeakResidualAccumulator:
    """Streaming form of :func:`weak_residual`.

    Pass ``add`` as the ``on_snapshot`` hook of :func:`~smallbody.solver.run`
    so long trajectories never have to be held in memory.
    """

    def __init__(self, phi: TestField, nu: float, fam: CutoffFamily | None = None, rest_center=None):
        self.phi = phi
        self.nu = nu
        self.mover = None
        self.rest_center = np.zeros(3) if rest_center is None else np.asarray(rest_center, float)
        if fam is not None:
            fam.require_resolved()
            self.mover = _MovingTest(phi.spatial, fam.epsilon, fam.profile)
        self.times, self.A, self.B, self.C = [], [], [], []
        self.initial = 0.0

    def add(self, t: float, u: VectorField, body=None) -> None:
        if self.mover is None:
            val, rate = self.phi.spatial, None
        elif body is not None:
            val, rate = self.mover.fields(body.h, body.l)
        else:
            val, rate = self.mover.fields(self.rest_center, np.zeros(3))
        th, dth = self.phi.theta(t), self.phi.dtheta(t)
        a = dth * inner(u, val)
        if rate is not None:
            a += th * inner(u, rate)
        if not self.times:
            self.initial = th * inner(u, val)
        self.times.append(t)
        self.A.append(a)
        self.B.append(self.nu * th * inner(u, -laplacian(val)))
        self.C.append(th * inner(_convective(u), val))

    def result(self) -> WeakResidual:
        times = np.asarray(self.times)
        norm = max((abs(self.phi.theta(t)) for t in times), default=0.0) * sobolev_norm(self.phi.spatial, 2)
        return WeakResidual(
            _trapezoid(times, self.A), _trapezoid(times, self.B), _trapezoid(times, self.C), self.initial, norm
        )


def weak_residual(
    traj: Trajectory,
    phi: TestField,
    fam: CutoffFamily | None = None,
) -> WeakResidual:
    """Residual of the weak momentum equation along a stored trajectory.

    Computes ``-int int u . d_t phi + nu int int grad u : grad phi
    + int int (u . grad u) . phi - int u(0) . phi(0)`` with trapezoidal time
    quadrature over the snapshots.  With ``fam`` the spatial factor is
    replaced by ``curl(eta_eps psi_eps)`` following the body centre; only
    ``fam.profile`` and ``fam.epsilon`` are used, the centre comes from the
    trajectory.  The result is normalised by ``sup_t ||phi(t)||_{H^2}``.
    """
    if len(traj.snapshots) != len(traj.times):
        raise ValueError("weak residual needs every snapshot stored")
    acc = WeakResidualAccumulator(phi, traj.config.nu, fam, traj.config.body_center)
    for t, u, body in zip(traj.times, traj.snapshots, traj.bodies):
        acc.add(t, u, body)
    return acc.result()


# --- Xi functional ---


def default_xi_fields(grid, count: int = 5, seed: int = 100, kmax: int = 3) -> list[VectorField]:
    """Solenoidal fields with random coefficients on every mode ``|m| <= kmax``.

    Each field is normalised to unit ``H^2`` norm.  Filling the whole low band
    (rather than a few random modes) matters: the set stands in for a dual
    norm, so it must see whichever low modes the flow happens to occupy.
    """
    rng = np.random.default_rng(seed)
    band = grid.k2 <= (kmax * 2 * np.pi / grid.L) ** 2 + 1e-12
    out = []
    for _ in range(count):
        coeffs = (rng.normal(size=(3,) + band.shape) + 1j * rng.normal(size=(3,) + band.shape)) * band
        f = curl(VectorField(grid, grid.ifft(coeffs)))
        out.append(f * (1.0 / sobolev_norm(f, 2)))
    return out


def xi_values(u: VectorField, phis: Sequence[VectorField], fam: CutoffFamily | None, t: float = 0.0, method: str = "quadrature"):
    """``<Xi(t), phi_j> = int u . phi_eps_j`` for each test field.

    ``method="spectral"`` evaluates ``int curl(u) . (eta psi_eps)`` instead,
    a separate code path that must agree to round-off.
    """
    g = u.grid
    out = []
    for Phi in phis:
        if method == "quadrature":
            val = make_test_function(Phi, fam, t) if fam is not None else Phi
            out.append(inner(u, val))
        elif method == "spectral":
            psi = stream_function(Phi)
            h = fam.center(t) if fam is not None else np.zeros(3)
            anchor = spectral_evaluate(psi, h[None])[0]
            pot = psi.values - anchor[:, None, None, None]
            if fam is not None:
                pot = evaluate_cutoff(fam, t).values[None] * pot
            w_hat = g.fft(curl(u).values)
            p_hat = g.fft(pot)
            s = np.real(np.sum(w_hat * np.conj(p_hat), axis=0))
            out.append(float(np.sum(s * g.rfft_weights) * g.cell_volume / g.N**3))
        else:
            raise ValueError(f"unknown method {method!r}")
    return np.array(out)


@dataclass
class XiReport:
    times: list
    values: np.ndarray  # (n_times, n_fields), already divided by ||phi_j||_{H^2}
    holder_sup: float
    xi_sup: float
    dual_holder_sup: float = float("nan")  # over the whole H^2 unit ball
    dual_sup: float = float("nan")

    def M(self, i: int, j: int) -> float:
        return float(np.max(np.abs(self.values[j] - self.values[i])))


def _point_kernel(grid, h, direction=None) -> np.ndarray:
    """rfft coefficients of the field ``D`` with ``int D f = f(h)`` for the
    trigonometric interpolant (Nyquist dropped), or ``(direction . grad f)(h)``."""
    kx, ky, kz = grid.deriv_wavenumbers
    r = np.asarray(h, float) + 0.5 * grid.L
    out = np.exp(-1j * (kx * r[0] + ky * r[1] + kz * r[2])) / grid.cell_volume
    if direction is not None:
        d = np.asarray(direction, float)
        out = out * (-1j) * (kx * d[0] + ky * d[1] + kz * d[2])
    m = np.abs(np.fft.fftfreq(grid.N, d=1.0 / grid.N))
    keep = (m[:, None, None] < grid.N / 2) & (m[None, :, None] < grid.N / 2) & (np.arange(grid.N // 2 + 1) < grid.N / 2)[None, None, :]
    return out * keep


def _apply_S(grid, src_hat: np.ndarray) -> np.ndarray:
    # S = curl (-Laplacian)^-1, the map phi -> psi; self-adjoint
    inv = np.divide(1.0, grid.kd2, out=np.zeros_like(grid.kd2), where=grid.kd2 > 0)
    return curl_hat(grid, src_hat) * inv


def _weighted_source(grid, w: np.ndarray, weight: np.ndarray, h) -> np.ndarray:
    """Fourier coefficients of ``weight w - (int weight w) delta_h``."""
    ww = weight[None] * w
    c = ww.sum(axis=(1, 2, 3)) * grid.cell_volume
    return grid.fft(ww) - c[:, None, None, None] * _point_kernel(grid, h)[None]


def xi_representer(u: VectorField, fam: CutoffFamily | None, t: float = 0.0) -> np.ndarray:
    """Fourier coefficients of the field ``g`` with ``<Xi(t), phi> = int g . phi``.

    Since ``<Xi, phi> = int curl(u) . eta (psi - psi(h))`` and ``psi = S phi``
    with the self-adjoint ``S = curl (-Laplacian)^-1``, the representer is
    ``g = S(eta w - c delta_h)``, ``w = curl u``, ``c = int eta w``, where
    ``delta_h`` is the trigonometric point-evaluation kernel at ``h``.  With no
    cut-off ``g`` is the mean-free part of ``u``.
    """
    g = u.grid
    w = curl(u).values
    if fam is None or fam.profile.kind == "unit":
        return _apply_S(g, g.fft(w))
    return _apply_S(g, _weighted_source(g, w, evaluate_cutoff(fam, t).values, fam.center(t)))


class DualResidualAccumulator:
    """Exact ``H^-2`` size of the weak-form residual, as a functional of the spatial factor.

    The residual of :class:`WeakResidualAccumulator` is linear in ``Phi``, so
    it equals ``int G . Phi`` for a field ``G`` built from the same pieces as
    :func:`xi_representer`.  ``result()`` returns ``||G||_{H^-2}``, the
    supremum of the normalised residual over every solenoidal ``Phi``.
    """

    def __init__(self, T: float, nu: float, fam: CutoffFamily | None = None, rest_center=None):
        self.clock = TestField(None, T)
        self.nu = nu
        self.fam = fam
        self.rest_center = np.zeros(3) if rest_center is None else np.asarray(rest_center, float)
        self.total = None
        self._prev = None

    def add(self, t: float, u: VectorField, body=None) -> None:
        g = u.grid
        th, dth = self.clock.theta(t), self.clock.dtheta(t)
        # spatial part, tested against Phi_eps: -theta' u + theta (nu (-Lap u) + conv u)
        v = u.values * (-dth) + th * (-self.nu * laplacian(u).values + _convective(u).values)
        w = curl(VectorField(g, v)).values
        w_u = curl(u).values
        if self.fam is None:
            rep = _apply_S(g, g.fft(w))
            first = _apply_S(g, g.fft(w_u)) if self._prev is None else None
        else:
            h = self.rest_center if body is None else np.asarray(body.h, float)
            hdot = np.zeros(3) if body is None else np.asarray(body.l, float)
            fam = CutoffFamily(self.fam.profile, self.fam.epsilon, h, g)
            eta = evaluate_cutoff(fam).values
            src = _weighted_source(g, w, eta, h)
            # rate of the moving test field, tested against u
            deta = -np.einsum("i,i...->...", hdot, cutoff_gradient(fam).values)
            c = (eta[None] * w_u).sum(axis=(1, 2, 3)) * g.cell_volume
            src -= th * (_weighted_source(g, w_u, deta, h) - c[:, None, None, None] * _point_kernel(g, h, hdot)[None])
            rep = _apply_S(g, src)
            first = _apply_S(g, _weighted_source(g, w_u, eta, h)) if self._prev is None else None
        if self._prev is None:
            self.total = -th * first
        else:
            t0, r0 = self._prev
            self.total = self.total + 0.5 * (t - t0) * (r0 + rep)
        self._prev = (t, rep)

    def result(self, grid) -> float:
        if self.total is None:
            return 0.0
        return math.sqrt(spectral_energy(grid, self.total, (1.0 + grid.k2) ** -2))


def dual_holder_constant(grid, times, reps) -> tuple[float, float]:
    """Like :func:`holder_constant` but with the exact ``H^-2`` distance between representers.

    This is the supremum over the whole unit ball of ``H^2``, not over a sample.
    """
    weight = (1.0 + grid.k2) ** -2
    best = 0.0
    for i in range(len(times)):
        for j in range(i + 1, len(times)):
            dt = times[j] - times[i]
            if dt > 0:
                best = max(best, math.sqrt(spectral_energy(grid, reps[j] - reps[i], weight)) / dt**0.25)
    sup = max((math.sqrt(spectral_energy(grid, r, weight)) for r in reps), default=0.0)
    return best, sup


def holder_constant(times, vals) -> tuple[float, float]:
    times = np.asarray(times)
    vals = np.asarray(vals)
    best = 0.0
    for i in range(len(times)):
        for j in range(i + 1, len(times)):
            dt = times[j] - times[i]
            if dt > 0:
                best = max(best, float(np.max(np.abs(vals[j] - vals[i]))) / dt**0.25)
    return best, float(np.max(np.abs(vals))) if vals.size else 0.0


def _check_xi_fields(phis) -> np.ndarray:
    if len(phis) < 5:
        raise ValueError("need at least 5 test fields")
    norms = np.array([sobolev_norm(p, 2) for p in phis])
    if np.any(norms == 0):
        raise ValueError("degenerate test field: zero H^2 norm")
    return norms


def xi_diagnostic(traj: Trajectory, phis: Sequence[VectorField], fam: CutoffFamily | None) -> XiReport:
    """Temporal 1/4-Hoelder constant of ``t -> Xi(t)`` tested on ``phis``.

    With ``fam`` the cut-off follows the trajectory's body; only its profile
    and epsilon are taken from ``fam``.
    """
    if len(traj.times) < 8 or len(traj.snapshots) != len(traj.times):
        raise ValueError("need at least 8 stored snapshots")
    norms = _check_xi_fields(phis)
    rows, reps = [], []
    for t, u, body in zip(traj.times, traj.snapshots, traj.bodies):
        f = None
        if fam is not None:
            h = body.h if body is not None else traj.config.body_center
            f = CutoffFamily(fam.profile, fam.epsilon, h, u.grid)
        rows.append(xi_values(u, phis, f) / norms)
        reps.append(xi_representer(u, f))
    vals = np.array(rows)
    holder, sup = holder_constant(traj.times, vals)
    dual, dual_sup = dual_holder_constant(traj.config.grid, traj.times, reps)
    return XiReport(list(traj.times), vals, holder, sup, dual, dual_sup)


# --- sweeps ---


@dataclass
class SweepPlan:
    base: SimulationConfig
    epsilons: Sequence[float]
    alpha: float = 2.0
    K: tuple = ((0.0, 0.0, 0.0), 1.0)
    control_alpha: float | None = 0.0
    xi_fields: Sequence[VectorField] | None = None

    def __post_init__(self):
        eps = [float(e) for e in self.epsilons]
        if len(eps) < 4:
            raise ValueError("sweep needs at least 4 epsilon values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon schedule must be strictly decreasing")
        self.epsilons = eps
        dx = self.base.L / self.base.N
        if eps[-1] < 2 * dx * (1 - 1e-12):
            raise ValueError("smallest epsilon under-resolved on the base grid")
        center, radius = self.K
        off = (np.asarray(center, float) - np.asarray(self.base.body_center, float) + 0.5 * self.base.L) % self.base.L - 0.5 * self.base.L
        gap = float(np.linalg.norm(off)) - float(radius)
        if gap < 2 * eps[0]:
            raise ValueError(f"comparison ball K comes within {gap:.3g} of the body, need >= {2 * eps[0]:.3g}")
        if self.base.T / self.base.output_interval < 7:
            raise ValueError("sweep needs at least 8 snapshot times")


@dataclass
class SweepRecord:
    epsilon: float
    alpha: float
    failed: bool = False
    error: str = ""
    d: float = float("nan")
    d_series: list = field(default_factory=list)
    energy_excess: float = float("nan")
    momentum_residual: float = float("nan")
    max_speed: float = float("nan")
    displacement: float = float("nan")
    heavy_speed: float = float("nan")
    slip: float = float("nan")
    holder: float = float("nan")
    xi_sup: float = float("nan")
    holder_sampled: float = float("nan")
    xi_sup_sampled: float = float("nan")
    mass: float = float("nan")
    energy: list = field(default_factory=list)

    def lines(self) -> list[str]:
        keys = ("d", "energy_excess", "momentum_residual", "max_speed", "displacement", "heavy_speed", "slip", "holder", "xi_sup", "holder_sampled", "xi_sup_sampled", "mass")
        out = [f"[epsilon={self.epsilon:.17e} alpha={self.alpha:.17e}]", f"failed={str(self.failed).lower()}"]
        if self.failed:
            out.append(f"error={self.error}")
        out += [f"{k}={getattr(self, k):.17e}" for k in keys]
        return out


@dataclass
class SweepReport:
    plan: SweepPlan
    records: list
    control: list
    d_slope: float
    d_monotone: bool
    holder_sup: float

    def main(self, ok_only: bool = True) -> list:
        return [r for r in self.records if not (ok_only and r.failed)]

    def summary_line(self) -> str:
        return f"d_slope={self.d_slope:.17e} d_monotone={str(self.d_monotone).lower()} holder_sup={self.holder_sup:.17e}"

    def text(self) -> str:
        out = []
        for r in self.records + self.control:
            out += r.lines() + [""]
        out += ["[summary]", self.summary_line()]
        return "\n".join(out) + "\n"

    def write(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "sweep_report.txt").write_text(self.text())
        ok = self.main()
        _two_column(d / "eps_d.dat", [(r.epsilon, r.d) for r in ok])
        _two_column(d / "eps_slip.dat", [(r.epsilon, r.slip) for r in ok])
        for r in ok:
            _two_column(d / f"energy_eps{r.epsilon:.6e}.dat", r.energy)


def _two_column(path, rows) -> None:
    with open(path, "w") as fh:
        for a, b in rows:
            fh.write(f"{a:.17e} {b:.17e}\n")


def _one_run(plan: SweepPlan, ref: Trajectory, eps: float, alpha: float, phis) -> SweepRecord:
    cfg = plan.base.replace(epsilon=eps, alpha=alpha)
    rec = SweepRecord(eps, alpha)
    center, radius = plan.K
    profile = CutoffProfile()
    norms = np.array([sobolev_norm(p, 2) for p in phis])
    dists, xis, reps, ts, slips = [], [], [], [], []
    snap_index = {round(t / cfg.dt): i for i, t in enumerate(ref.times)}

    def on_snapshot(t, u, body):
        i = snap_index[round(t / cfg.dt)]
        dists.append(lebesgue_norm(u - ref.snapshots[i], 2, region=(center, radius)))
        fam = CutoffFamily(profile, eps, body.h, u.grid)
        xis.append(xi_values(u, phis, fam) / norms)
        reps.append(xi_representer(u, fam))
        slips.append(slip_norm(u, body, cfg))
        ts.append(t)

    try:
        traj = run(cfg, keep_snapshots=False, on_snapshot=on_snapshot)
    except BlowUpError as exc:
        rec.failed, rec.error = True, str(exc)
        return rec
    e0 = traj.energies[0].total
    rec.d = max(dists)
    rec.d_series = list(zip(ts, dists))
    rec.energy_excess = max(e.total for e in traj.energies) / e0 - 1.0 if e0 > 0 else 0.0
    rec.momentum_residual = max(traj.momentum_residuals, default=0.0)
    rec.max_speed = traj.max_speed()
    rec.displacement = traj.max_displacement()
    rec.heavy_speed = eps**1.5 * rec.max_speed
    rec.slip = max(slips)
    rec.holder, rec.xi_sup = dual_holder_constant(cfg.grid, ts, reps)
    rec.holder_sampled, rec.xi_sup_sampled = holder_constant(ts, np.array(xis))
    rec.mass = traj.bodies[0].mass
    rec.energy = [(e.t, e.total) for e in traj.energies]
    return rec


def run_sweep(plan: SweepPlan, jobs: int = 1) -> SweepReport:
    """Reference run plus one coupled run per (epsilon, alpha)."""
    ref = run(plan.base.replace(epsilon=0.0))
    phis = plan.xi_fields or default_xi_fields(plan.base.grid)
    _check_xi_fields(phis)
    tasks = [(e, plan.alpha) for e in plan.epsilons]
    if plan.control_alpha is not None:
        tasks += [(e, plan.control_alpha) for e in plan.epsilons]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda a: _one_run(plan, ref, *a, phis), tasks))
    else:
        results = [_one_run(plan, ref, *a, phis) for a in tasks]
    main = results[: len(plan.epsilons)]
    control = results[len(plan.epsilons) :]
    ok = [r for r in main if not r.failed]
    try:
        slope = fit_rate([(r.epsilon, r.d) for r in ok]).slope
    except ValueError:
        slope = float("nan")
    ds = [r.d for r in main]
    monotone = not any(r.failed for r in main) and all(b < a for a, b in zip(ds, ds[1:]))
    holder = max((r.holder for r in ok), default=float("nan"))
    return SweepReport(plan, main, control, slope, monotone, holder)
