"""Log-log rate fitting and scaling reports."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)

MIN_POINTS = 4


@dataclass
class RateFit:
    slope: float
    stderr: float
    excluded: list = field(default_factory=list)

    def __iter__(self):
        # unpacks as (slope, stderr)
        return iter((self.slope, self.stderr))


def fit_rate(pairs) -> RateFit:
    """Least-squares slope of ``log(value)`` against ``log(eps)``.

    Pairs whose value is exactly zero are dropped and listed in
    ``RateFit.excluded``.  At least four usable pairs are required.
    """
    pairs = [(float(e), float(v)) for e, v in pairs]
    excluded = [(e, v) for e, v in pairs if v == 0.0]
    usable = [(e, v) for e, v in pairs if v != 0.0]
    if excluded:
        log.warning("fit_rate: excluding %d zero-valued pairs: %s", len(excluded), excluded)
    if len(usable) < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} usable pairs, got {len(usable)}")
    e, v = np.array(usable).T
    if np.any(e <= 0) or np.any(v < 0):
        raise ValueError("rate fitting needs positive scales and non-negative values")
    res = stats.linregress(np.log(e), np.log(v))
    stderr = float(res.stderr) if np.isfinite(res.stderr) else 0.0
    return RateFit(float(res.slope), stderr, excluded)


@dataclass
class ScalingEntry:
    quantity: str
    q: float
    slope: float
    stderr: float
    theory: float
    scales: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def line(self) -> str:
        return (
            f"quantity={self.quantity} q={self.q:.17e} slope={self.slope:.17e} "
            f"stderr={self.stderr:.17e} theory={self.theory:.17e}"
        )

    def within(self, tol: float) -> bool:
        return abs(self.slope - self.theory) <= tol


@dataclass
class ScalingReport:
    entries: list[ScalingEntry] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def add(self, quantity: str, q: float, scales, values, theory: float) -> ScalingEntry:
        fit = fit_rate(zip(scales, values))
        entry = ScalingEntry(quantity, float(q), fit.slope, fit.stderr, float(theory), list(scales), list(values))
        self.entries.append(entry)
        return entry

    def get(self, quantity: str, q: float | None = None) -> ScalingEntry:
        for e in self.entries:
            if e.quantity == quantity and (q is None or np.isclose(e.q, q)):
                return e
        raise KeyError((quantity, q))

    def lines(self) -> list[str]:
        return [e.line() for e in self.entries]

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.lines()) + "\n")

    @staticmethod
    def parse(text: str) -> list[dict]:
        rows = []
        for raw in text.splitlines():
            if not raw.strip():
                continue
            kv = dict(tok.split("=", 1) for tok in raw.split())
            rows.append({k: (v if k == "quantity" else float(v)) for k, v in kv.items()})
        return rows
