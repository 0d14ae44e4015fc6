"""Command-line front end.

Usage::

    python3 -m smallbody <command> [--config FILE] [--out DIR] [--set KEY=VALUE ...]
                                   [--jobs N] [--seed N]

Commands: simulate, reference, sweep, verify-cutoff, verify-stream, audit-weak.

Exit status is 0 when every check passes, 1 when a check fails (the failures
are listed in ``failures.txt``), 2 for configuration errors and 3 for runtime
errors.
"""

from __future__ import annotations

import argparse
import ast
import math
import operator
import platform
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .biot_savart import stream_function, verify_local_stream_bound
from .cutoff import CutoffFamily, CutoffProfile, measure_cutoff_scalings, measure_testfn_convergence
from .grid import Grid, curl, lebesgue_norm, sobolev_norm, write_snapshot
from .limit import (
    DualResidualAccumulator,
    SweepPlan,
    default_xi_fields,
    dual_holder_constant,
    holder_constant,
    run_sweep,
    xi_representer,
    xi_values,
)
from .rigid_body import format_log_record
from .solver import BlowUpError, SimulationConfig, abc_field, initial_datum, run, write_energy

COMMANDS = ("simulate", "reference", "sweep", "verify-cutoff", "verify-stream", "audit-weak")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

ENERGY_TOL = 1e-3
MOMENTUM_TOL = 1e-10


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StudyOptions:
    """Keys used by the sweep and verification commands, beyond a single run."""

    epsilons: tuple | None = None
    K_center: tuple | None = None
    K_radius: float | None = None
    control_alpha: float | None = 0.0
    cutoff_N: int = 128
    qs: tuple = (1.2, 2.0, 3.0, 6.0)
    radii: tuple | None = None
    coupled_epsilon: float | None = None


SIM_KEYS = SimulationConfig.keys()
STUDY_KEYS = [f.name for f in fields(StudyOptions)]
TUPLE_KEYS = {"body_velocity", "body_omega", "body_center", "body_aspect", "epsilons", "K_center", "qs", "radii"}
INT_KEYS = {"N", "seed", "cutoff_N"}
STR_KEYS = {"initial_field_id"}
NULLABLE = {"lam", "output_interval", "epsilons", "K_center", "K_radius", "control_alpha", "radii", "coupled_epsilon"}

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def _number(text: str, names: dict) -> float:
    """Evaluate a numeric literal or a small arithmetic expression (``2*pi``, ``L/8``)."""

    def ev(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id in names:
            return names[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"not a number: {text!r}")

    try:
        return ev(ast.parse(text.strip(), mode="eval").body)
    except SyntaxError as exc:
        raise ValueError(f"not a number: {text!r}") from exc


def _convert(key: str, raw: str, names: dict):
    raw = raw.strip()
    if key in NULLABLE and raw.lower() == "none":
        return None
    if key in STR_KEYS:
        return raw
    if key in TUPLE_KEYS:
        inner_ = raw[1:-1] if raw[:1] + raw[-1:] in ("()", "[]") else raw
        return tuple(float(_number(p, names)) for p in inner_.split(",") if p.strip())
    val = _number(raw, names)
    if key in INT_KEYS:
        if float(val) != int(val):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(val)
    return float(val)


@dataclass
class ParsedConfig:
    sim: SimulationConfig
    study: StudyOptions
    lines: dict = field(default_factory=dict)

    def echo(self) -> list[str]:
        out = []
        for k in SIM_KEYS:
            out.append(f"{k} = {_fmt(getattr(self.sim, k))}")
        for k in STUDY_KEYS:
            out.append(f"{k} = {_fmt(getattr(self.study, k))}")
        return out


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, str):
        return v
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, int):
        return str(v)
    return f"{float(v):.17e}"


def parse_config(path, overrides=(), seed: int | None = None) -> ParsedConfig:
    """Read ``key = value`` lines and ``KEY=VALUE`` overrides.

    Later entries win; overrides are applied after the file.  Errors name the
    offending key and its source line.
    """
    entries: list[tuple[str, str, str]] = []  # key, raw, where
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        for n, line in enumerate(p.read_text().splitlines(), 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{p}:{n}: expected 'key = value', got {line.strip()!r}")
            k, v = text.split("=", 1)
            entries.append((k.strip(), v, f"{p}:{n}"))
    for i, ov in enumerate(overrides, 1):
        if "=" not in ov:
            raise ConfigError(f"--set #{i}: expected KEY=VALUE, got {ov!r}")
        k, v = ov.split("=", 1)
        entries.append((k.strip(), v, f"--set #{i}"))
    if seed is not None:
        entries.append(("seed", str(seed), "--seed"))

    names = {"pi": math.pi}
    values, where = {}, {}
    # resolve L first so that expressions like L/8 work anywhere in the file
    for k, v, w in entries:
        if k == "L":
            try:
                names["L"] = float(_number(v, names))
            except ValueError as exc:
                raise ConfigError(f"{w}: L: {exc}") from exc
    names.setdefault("L", SimulationConfig.L)
    for k, v, w in entries:
        if k not in SIM_KEYS and k not in STUDY_KEYS:
            raise ConfigError(f"{w}: {k}: unknown key")
        try:
            values[k] = _convert(k, v, names)
        except ValueError as exc:
            raise ConfigError(f"{w}: {k}: bad value ({exc})") from exc
        where[k] = w
    sim_kw = {k: v for k, v in values.items() if k in SIM_KEYS}
    study_kw = {k: v for k, v in values.items() if k in STUDY_KEYS}
    try:
        sim = SimulationConfig(**sim_kw)
    except ValueError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigError(f"{where.get(key, 'default')}: {exc}") from exc
    try:
        study = StudyOptions(**study_kw)
        _validate_study(study, sim)
    except ValueError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigError(f"{where.get(key, 'default')}: {exc}") from exc
    return ParsedConfig(sim, study, where)


def _validate_study(s: StudyOptions, sim: SimulationConfig) -> None:
    if s.epsilons is not None and any(e <= 0 for e in s.epsilons):
        raise ValueError("epsilons: must be positive")
    if s.K_radius is not None and not 0 < s.K_radius < sim.L / 2:
        raise ValueError("K_radius: must lie in (0, L/2)")
    if s.K_center is not None and len(s.K_center) != 3:
        raise ValueError("K_center: needs three components")
    if s.cutoff_N < 8 or s.cutoff_N % 2:
        raise ValueError("cutoff_N: must be even and at least 8")
    if any(q < 1 for q in s.qs):
        raise ValueError("qs: exponents must be >= 1")


# --- helpers shared by commands ---


class Checks:
    def __init__(self):
        self.rows: list[tuple[str, bool, str]] = []

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.rows.append((name, bool(ok), detail))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.rows)

    def write(self, out: Path) -> None:
        with open(out / "checks.txt", "w") as fh:
            for name, ok, detail in self.rows:
                fh.write(f"check={name} pass={str(ok).lower()} {detail}\n")
        failed = [r for r in self.rows if not r[1]]
        with open(out / "failures.txt", "w") as fh:
            for name, _, detail in failed:
                fh.write(f"check={name} {detail}\n")


def _provenance(out: Path, cmd: str, cfg: ParsedConfig, argv) -> None:
    sim = cfg.sim
    lines = [
        f"# tool smallbody {__version__}",
        f"# command {cmd}",
        f"# argv {' '.join(argv)}",
        f"# seed {sim.seed}",
        f"# grid L={sim.L:.17e} N={sim.N}",
        f"# python {platform.python_version()} numpy {np.__version__}",
        f"# wall_clock {time.strftime('%Y-%m-%dT%H:%M:%S%z')}",
    ] + cfg.echo()
    (out / "provenance.txt").write_text("\n".join(lines) + "\n")


def _write_run(out: Path, traj) -> None:
    with open(out / "trajectory.log", "w") as fh:
        for t, body in traj.body_log:
            fh.write(format_log_record(t, body) + "\n")
    write_energy(out / "energy.dat", traj.energies)
    for i, (t, u) in enumerate(zip(traj.times, traj.snapshots)):
        write_snapshot(out / f"snapshot_{i:04d}.dat", u)
    with open(out / "times.dat", "w") as fh:
        for t in traj.times:
            fh.write(f"{t:.17e}\n")


def _energy_checks(checks: Checks, traj, label: str = "") -> None:
    e0 = traj.energies[0].total
    worst = max(e.total for e in traj.energies)
    excess = worst / e0 - 1.0 if e0 > 0 else 0.0
    checks.add(f"energy{label}", excess <= ENERGY_TOL, f"value={excess:.17e} limit={ENERGY_TOL:.17e}")
    mom = max(traj.momentum_residuals, default=0.0)
    checks.add(f"momentum{label}", mom <= MOMENTUM_TOL, f"value={mom:.17e} limit={MOMENTUM_TOL:.17e}")


def default_sweep_epsilons(L: float) -> tuple:
    return (L / 8, L / 16, L / 24, L / 32)


def default_K(sim: SimulationConfig) -> tuple:
    """Ball of radius L/4 on the far side of the box from the body."""
    L = sim.L
    c = np.asarray(sim.body_center, float)
    d = np.array([1.2, -1.2, 1.2]) * L / 4
    center = (c + d + 0.5 * L) % L - 0.5 * L
    return tuple(center), L / 4


# --- commands ---


def cmd_simulate(cfg: ParsedConfig, out: Path, jobs: int, reference: bool = False) -> Checks:
    sim = cfg.sim.replace(epsilon=0.0) if reference else cfg.sim
    checks = Checks()
    try:
        traj = run(sim)
    except BlowUpError as exc:
        if exc.partial is not None and exc.partial.snapshots:
            write_snapshot(out / "last_valid_snapshot.dat", exc.partial.snapshots[-1])
        raise
    _write_run(out, traj)
    _energy_checks(checks, traj)
    return checks


def cmd_sweep(cfg: ParsedConfig, out: Path, jobs: int) -> Checks:
    sim, st = cfg.sim, cfg.study
    eps = st.epsilons or default_sweep_epsilons(sim.L)
    center, radius = default_K(sim)
    K = (st.K_center or center, st.K_radius or radius)
    plan = SweepPlan(sim, eps, alpha=sim.alpha, K=K, control_alpha=st.control_alpha)
    report = run_sweep(plan, jobs=jobs)
    report.write(out)
    checks = Checks()
    main = report.records
    for r in main + report.control:
        tag = f"[eps={r.epsilon:.6e},alpha={r.alpha:g}]"
        checks.add(f"run_ok{tag}", not r.failed, f"error={r.error!r}" if r.failed else "")
        if not r.failed:
            checks.add(f"energy{tag}", r.energy_excess <= ENERGY_TOL, f"value={r.energy_excess:.17e}")
            checks.add(f"momentum{tag}", r.momentum_residual <= MOMENTUM_TOL, f"value={r.momentum_residual:.17e}")
    checks.add("d_monotone", report.d_monotone, report.summary_line())
    ds = [r.d for r in main]
    checks.add("d_ratio", ds[-1] / ds[0] <= 0.5, f"value={ds[-1] / ds[0]:.17e} limit=5e-01")
    hs = [r.heavy_speed for r in main]
    checks.add("heavy_speed_decreasing", all(b < a for a, b in zip(hs, hs[1:])), "values=" + ",".join(f"{v:.6e}" for v in hs))
    for r, c in zip(main, report.control):
        checks.add(
            f"control_moves_more[eps={r.epsilon:.6e}]",
            c.displacement > r.displacement,
            f"control={c.displacement:.17e} heavy={r.displacement:.17e}",
        )
    hol = [r.holder for r in main if not r.failed]
    if hol:
        checks.add("holder_bounded", max(hol) / min(hol) < 3.0, f"value={max(hol) / min(hol):.17e} limit=3")
    return checks


def cmd_verify_cutoff(cfg: ParsedConfig, out: Path, jobs: int) -> Checks:
    sim, st = cfg.sim, cfg.study
    grid = Grid(sim.L, st.cutoff_N)
    eps = st.epsilons or tuple(sim.L / d for d in (16, 32, 64, 128))
    fams = [CutoffFamily(CutoffProfile(), e, sim.body_center, grid) for e in eps]
    report = measure_cutoff_scalings(fams, st.qs)
    report.write(out / "cutoff_scaling.txt")
    checks = Checks()
    for e in report.entries:
        checks.add(f"slope[{e.quantity},q={e.q:g}]", e.within(0.15), f"slope={e.slope:.17e} theory={e.theory:.17e}")
    phi = abc_field(grid)
    tf = measure_testfn_convergence(phi, fams)
    tf.write(out / "testfn_scaling.txt")
    ratios = tf.extras["bound_ratios"]
    with open(out / "testfn_bound_ratios.dat", "w") as fh:
        for e, r in zip(tf.extras["epsilons"], ratios):
            fh.write(f"{e:.17e} {r:.17e}\n")
    l2, h1 = tf.get("testfn_l2"), tf.get("testfn_h1")
    checks.add("testfn_l2_slope", 1.35 <= l2.slope <= 1.65, f"slope={l2.slope:.17e}")
    checks.add("testfn_h1_slope", 0.35 <= h1.slope <= 0.65, f"slope={h1.slope:.17e}")
    spread = max(ratios) / min(ratios)
    checks.add("testfn_bound_spread", spread < 2.0, f"value={spread:.17e} limit=2")
    return checks


def cmd_verify_stream(cfg: ParsedConfig, out: Path, jobs: int) -> Checks:
    sim, st = cfg.sim, cfg.study
    grid = sim.grid
    checks = Checks()
    worst = 0.0
    for s in range(50):
        phi = initial_datum("random_band_limited", grid, sim.seed + s)
        err = lebesgue_norm(curl(stream_function(phi)) - phi) / lebesgue_norm(phi)
        worst = max(worst, err)
    checks.add("curl_stream_identity", worst <= 1e-8, f"value={worst:.17e} limit=1e-08")
    phi = initial_datum("gaussian_vortex_ring", grid)
    radii = st.radii or tuple(sim.L / 8 / 2**j for j in range(5, -1, -1))
    rep = verify_local_stream_bound(phi, sim.body_center, radii)
    (out / "stream_report.txt").write_text("\n".join(rep.lines()) + "\n")
    checks.add("local_bound", rep.passed, f"max_ratio={max(rep.ratios + [rep.global_grad_ratio]):.17e} cap={rep.cap:g}")
    return checks


def _streamed_residual(config, fam=None, extra=None) -> float:
    """``H^-2`` size of the weak residual, accumulated while the run streams."""
    acc = DualResidualAccumulator(config.T, config.nu, fam, config.body_center)

    def hook(t, u, body):
        acc.add(t, u, body)
        if extra is not None:
            extra(t, u, body)

    run(config, keep_snapshots=False, on_snapshot=hook)
    return acc.result(config.grid)


def cmd_audit_weak(cfg: ParsedConfig, out: Path, jobs: int) -> Checks:
    sim, st = cfg.sim, cfg.study
    base = sim.replace(epsilon=0.0, output_interval=sim.dt)
    fine = base.replace(dt=sim.dt / 2, output_interval=sim.dt / 2, lam=None)
    coarse_ref = _streamed_residual(base)
    fine_ref = _streamed_residual(fine)
    ratio = fine_ref / coarse_ref if coarse_ref > 0 else float("nan")
    eps = st.coupled_epsilon or sim.epsilon or sim.L / 8
    fam = CutoffFamily(CutoffProfile(), eps, sim.body_center, base.grid)
    phis = default_xi_fields(base.grid)
    norms = np.array([sobolev_norm(p, 2) for p in phis])
    xi_t, xi_v, reps, last = [], [], [], {}

    def xi_hook(t, u, body):
        if round(t / sim.dt) % sim.output_every == 0:
            f = CutoffFamily(fam.profile, eps, body.h, u.grid)
            xi_t.append(t)
            xi_v.append(xi_values(u, phis, f) / norms)
            reps.append(xi_representer(u, f))
        last.update(u=u, body=body)

    coupled = _streamed_residual(base.replace(epsilon=eps), fam, xi_hook)
    holder, xi_sup = dual_holder_constant(base.grid, xi_t, reps)
    holder_s, xi_sup_s = holder_constant(xi_t, xi_v)
    # two code paths for <Xi, phi>
    f_end = CutoffFamily(CutoffProfile(), eps, last["body"].h, base.grid)
    a = xi_values(last["u"], phis, f_end)
    b = xi_values(last["u"], phis, f_end, method="spectral")
    gap = float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))
    lines = [
        "# residual sizes are H^-2 norms: sup over solenoidal test fields of unit H^2 norm",
        f"reference_residual dt={base.dt:.17e} value={coarse_ref:.17e}",
        f"reference_residual dt={fine.dt:.17e} value={fine_ref:.17e}",
        f"refinement_ratio={ratio:.17e}",
        f"coupled_residual epsilon={eps:.17e} value={coupled:.17e}",
        f"xi_holder_sup={holder:.17e} xi_sup={xi_sup:.17e}",
        f"xi_holder_sup_sampled={holder_s:.17e} xi_sup_sampled={xi_sup_s:.17e}",
        f"xi_two_path_gap={gap:.17e}",
    ]
    (out / "weak_report.txt").write_text("\n".join(lines) + "\n")
    checks = Checks()
    checks.add("refinement_halves", 0.375 <= ratio <= 0.625, f"value={ratio:.17e}")
    checks.add("coupled_within_3x", coupled <= 3 * coarse_ref, f"value={coupled:.17e} limit={3 * coarse_ref:.17e}")
    checks.add("xi_two_paths", gap <= 1e-10, f"value={gap:.17e} limit=1e-10")
    return checks


HANDLERS = {
    "simulate": cmd_simulate,
    "reference": lambda c, o, j: cmd_simulate(c, o, j, reference=True),
    "sweep": cmd_sweep,
    "verify-cutoff": cmd_verify_cutoff,
    "verify-stream": cmd_verify_stream,
    "audit-weak": cmd_audit_weak,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smallbody", description="Small rigid body in a viscous fluid: runs and checks.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key = value configuration file")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--jobs", type=int, default=1, help="independent runs in parallel (default 1)")
    ap.add_argument("--seed", type=int, default=None)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, args.overrides, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"config error: output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _provenance(out, args.command, cfg, argv)
    try:
        checks = HANDLERS[args.command](cfg, out, args.jobs)
    except Exception as exc:  # report the failing module's message verbatim
        msg = f"{type(exc).__module__}.{type(exc).__name__}: {exc}"
        (out / "failures.txt").write_text(f"error={msg}\n")
        print(f"runtime error: {msg}", file=sys.stderr)
        return EXIT_RUNTIME
    checks.write(out)
    for name, ok, detail in checks.rows:
        print(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
    return EXIT_OK if checks.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
