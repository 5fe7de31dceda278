"""Empirical strong Feller gaps, coupled gaps, stability exponents and law distances."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.special import kolmogi

from ._parallel import DEFAULT_CHUNK
from .direct import CapabilityError, coupled_map, scheme_is_heuristic
from .girsanov import weighted_run
from .model import ModelSpec
from .segments import GridError, Segment, TimeGrid, segment_sup_norms, sup_norm

__all__ = [
    "TestFunction",
    "TestFunctionBattery",
    "default_battery",
    "GapRow",
    "GapReport",
    "GAP_COLUMNS",
    "strong_feller_gap",
    "improved_feller_gap",
    "StabilityFit",
    "stability_exponent",
    "law_distance",
    "ks_critical_value",
    "perturbations",
]


@dataclass(frozen=True)
class TestFunction:
    """A functional on segment batches ``(N, n_lag + 1, d) -> (N,)`` with values in ``[-1, 1]``."""

    __test__ = False  # not a pytest class

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    bound: float = 1.0

    def __call__(self, segs: np.ndarray) -> np.ndarray:
        return self.fn(segs)


class TestFunctionBattery:
    __test__ = False

    def __init__(self, members: Sequence[TestFunction]):
        names = [f.name for f in members]
        if len(set(names)) != len(names):
            raise ValueError("battery member names must be unique")
        self.members = list(members)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.members]

    def select(self, names: Sequence[str]) -> "TestFunctionBattery":
        by_name = {f.name: f for f in self.members}
        missing = [n for n in names if n not in by_name]
        if missing:
            raise KeyError(f"unknown battery members: {missing}")
        return TestFunctionBattery([by_name[n] for n in names])

    def evaluate(self, segs: np.ndarray) -> np.ndarray:
        """``(n_funcs, N)`` values on a segment batch."""
        return np.stack([np.asarray(f(segs), dtype=float) for f in self.members])


def _fmt(v: float) -> str:
    return f"{v:g}"


def _coord(grid: TimeGrid, s: float) -> int:
    if not -grid.r - 1e-12 <= s <= 1e-12:
        raise GridError(f"segment coordinate s={s} outside [-r, 0]")
    return int(round((s + grid.r) / grid.dt))


def indicator(grid: TimeGrid, s: float, c: float, e: int = 0) -> TestFunction:
    j = _coord(grid, s)
    return TestFunction(f"ind[s={_fmt(s)},c={_fmt(c)}]", lambda segs: (segs[:, j, e] >= c).astype(float))


def tanh_probe(grid: TimeGrid, s: float, c: float, e: int = 0) -> TestFunction:
    j = _coord(grid, s)
    return TestFunction(f"tanh[s={_fmt(s)},c={_fmt(c)}]", lambda segs: np.tanh(segs[:, j, e] - c))


def sup_indicator(c: float) -> TestFunction:
    return TestFunction(f"supind[c={_fmt(c)}]", lambda segs: (segment_sup_norms(segs) >= c).astype(float))


def default_battery(grid: TimeGrid) -> TestFunctionBattery:
    """Indicators of ``seg(s) >= c`` at ``s in {0, -r/2, -r}``, ``c in {0, 0.5, 1}``,
    tanh probes at the same coordinates and sup-norm indicators at ``c in {1, 2}``."""
    coords = [0.0, -grid.r / 2, -grid.r]
    members = [indicator(grid, s, c) for s in coords for c in (0.0, 0.5, 1.0)]
    members += [tanh_probe(grid, s, 0.0) for s in coords]
    members += [sup_indicator(c) for c in (1.0, 2.0)]
    return TestFunctionBattery(members)


def perturbations(x: Segment, deltas: Sequence[float], sign: float = -1.0) -> list[Segment]:
    """Constant shifts ``x + sign * delta``, at sup distance ``delta`` from ``x``."""
    return [x.shifted(sign * d) for d in deltas]


# ---------------------------------------------------------------------------
# reports

GAP_COLUMNS = ("model", "t", "f_name", "delta", "gap", "se", "backend", "N", "seed")


@dataclass(frozen=True)
class GapRow:
    model: str
    t: float
    f_name: str
    delta: float
    gap: float
    se: float
    backend: str
    N: int
    seed: int
    se_paired: float = float("nan")

    def csv_fields(self) -> list[str]:
        return [self.model, repr(float(self.t)), self.f_name, repr(float(self.delta)),
                repr(float(self.gap)), repr(float(self.se)), self.backend, str(self.N), str(self.seed)]


@dataclass
class GapReport:
    rows: list[GapRow]
    warnings: list[str] = field(default_factory=list)

    def for_function(self, name: str) -> list[GapRow]:
        return [r for r in self.rows if r.f_name == name]

    @property
    def f_names(self) -> list[str]:
        return list(dict.fromkeys(r.f_name for r in self.rows))

    def slopes(self) -> dict[str, float]:
        """Per function, log-log slope of gap against delta over rows with both positive."""
        out = {}
        for name in self.f_names:
            pts = [(r.delta, r.gap) for r in self.for_function(name) if r.delta > 0 and r.gap > 0]
            if len(pts) >= 2:
                d, g = np.log(np.array(pts)).T
                out[name] = float(np.polyfit(d, g, 1)[0])
            else:
                out[name] = float("nan")
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(GAP_COLUMNS)
        for r in self.rows:
            w.writerow(r.csv_fields())
        return buf.getvalue()


def _mean_se(v: np.ndarray, axis: int = -1):
    n = v.shape[axis]
    se = v.std(axis=axis, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(np.delete(v.shape, axis))
    return v.mean(axis=axis), se


def strong_feller_gap(
    m: ModelSpec,
    x: Segment,
    ys: Sequence[Segment],
    battery: TestFunctionBattery,
    t: float,
    N: int,
    seed: int,
    backend: str = "girsanov",
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> GapReport:
    """``|E f(X^y_t) - E f(X^x_t)|`` for each ``y`` and battery member.

    ``se`` is the combined marginal standard error ``sqrt(se_x^2 + se_y^2)``
    of the two estimates; ``se_paired`` is the error of the difference under
    the common random numbers actually used.
    """
    notes = []
    if t <= x.grid.r:
        msg = f"t={t} <= r={x.grid.r}: strong Feller is only asserted for t > r"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    inits = [x, *ys]
    funcs = list(battery)
    if backend == "girsanov":
        log_w, fvals, _ = weighted_run(m, inits, t, funcs, N, seed, chunk=chunk, workers=workers)
        prod = np.exp(log_w[:, 0, None, :]) * fvals  # (n_init, n_f, N)
    elif backend == "direct":
        if scheme_is_heuristic(m):
            notes.append(f"{m.name}: direct gaps are heuristic under an unbounded singular drift")
        prod = coupled_map(m, inits, t, N, seed, lambda segs: np.stack([battery.evaluate(s) for s in segs]),
                           chunk=chunk, workers=workers)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    est, se = _mean_se(prod)
    rows = []
    for k, y in enumerate(ys, start=1):
        delta = sup_norm(y - x)
        _, se_pair = _mean_se(prod[k] - prod[0])
        for i, f in enumerate(funcs):
            rows.append(GapRow(
                m.name, t, f.name, delta, float(abs(est[k, i] - est[0, i])),
                float(np.hypot(se[k, i], se[0, i])), backend, N, seed, float(se_pair[i]),
            ))
    return GapReport(rows, notes)


def improved_feller_gap(
    m: ModelSpec,
    x: Segment,
    ys: Sequence[Segment],
    battery: TestFunctionBattery,
    t: float,
    N: int,
    seed: int,
    method: str = "auto",
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> GapReport:
    """Coupled gap ``E |f(X^y_t) - f(X^x_t)|`` under shared noise."""
    if not m.strong_solvable:
        raise CapabilityError(f"{m.name}: coupled gaps need a strong solution")

    def fn(segs):
        fx = battery.evaluate(segs[0])
        return np.stack([np.abs(battery.evaluate(s) - fx) for s in segs[1:]])

    diffs = coupled_map(m, [x, *ys], t, N, seed, fn, method=method, chunk=chunk, workers=workers)
    notes = [f"{m.name}: coupled gaps are heuristic under an unbounded singular drift"] if scheme_is_heuristic(m) else []
    est, se = _mean_se(diffs)
    rows = []
    for k, y in enumerate(ys):
        delta = sup_norm(y - x)
        for i, f in enumerate(battery):
            rows.append(GapRow(m.name, t, f.name, delta, float(est[k, i]), float(se[k, i]),
                               "coupled", N, seed, float(se[k, i])))
    return GapReport(rows, notes)


@dataclass(frozen=True)
class StabilityFit:
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    gamma: float
    deltas: np.ndarray
    moments: np.ndarray
    moment_se: np.ndarray

    @property
    def slope_vs_delta(self) -> float:
        """Slope against ``log delta`` rather than ``log delta^gamma``."""
        return self.gamma * self.slope

    def band(self, z: float = 1.96) -> tuple[float, float]:
        return self.slope - z * self.slope_se, self.slope + z * self.slope_se


def stability_exponent(
    m: ModelSpec,
    x: Segment,
    deltas: Sequence[float],
    gamma: float,
    t: float,
    N: int,
    seed: int,
    method: str = "auto",
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> StabilityFit:
    """Regress ``log E ||X^x_t - X^{x+delta}_t||^gamma`` on ``log delta^gamma``.

    ``delta = 0`` entries give distance exactly 0 and are left out of the fit.
    """
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    if not m.profile.get("1.5", False):
        raise CapabilityError(f"{m.name}: stability exponent needs Condition 1.5")
    deltas = np.asarray(deltas, dtype=float)
    ys = [x.shifted(d) for d in deltas]

    def fn(segs):
        return np.stack([segment_sup_norms(s - segs[0]) ** gamma for s in segs[1:]])

    dist = coupled_map(m, [x, *ys], t, N, seed, fn, method=method, chunk=chunk, workers=workers)
    mom, se = _mean_se(dist)
    keep = deltas > 0
    if keep.sum() < 2:
        raise ValueError("need at least two positive deltas")
    fit = stats.linregress(gamma * np.log(deltas[keep]), np.log(mom[keep]))
    return StabilityFit(float(fit.slope), float(fit.intercept), float(fit.stderr),
                        float(fit.intercept_stderr), float(gamma), deltas, mom, se)


# ---------------------------------------------------------------------------
# law distances


def law_distance(a, b, mode: str = "KS", bins: int = 50) -> float:
    """Two-sample KS statistic, or binned total variation ``sum |p_A - p_B|``
    over ``bins`` equal-width bins spanning the pooled range."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("law_distance needs nonempty samples")
    mode = mode.upper().replace("_", "-")
    if mode == "KS":
        return float(stats.ks_2samp(a, b).statistic)
    if mode in ("TV", "BINNED-TV"):
        lo = min(a.min(), b.min())
        hi = max(a.max(), b.max())
        if hi == lo:
            return 0.0
        edges = np.linspace(lo, hi, bins + 1)
        pa = np.histogram(a, edges)[0] / a.size
        pb = np.histogram(b, edges)[0] / b.size
        return float(np.abs(pa - pb).sum())
    raise ValueError(f"unknown mode {mode!r}")


def ks_critical_value(n: int, m: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample KS critical value at level ``alpha``."""
    return float(kolmogi(alpha) * np.sqrt((n + m) / (n * m)))
