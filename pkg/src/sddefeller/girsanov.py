"""Weak solutions by reweighting drift-free paths.

For a drift-free path ``M`` the drifted law has density

    D(t) = exp( int_0^t a(s)^T dW(s) - 1/2 int_0^t |a(s)|^2 ds ),
    a(s) = sigma(s, M(s))^{-1} [ B(s, M_s) + b(s, M(s)) ],

with respect to the law of ``M``. On the grid the stochastic integral is the
left-point (Ito) sum and everything is accumulated in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from ._parallel import DEFAULT_CHUNK, chunk_ranges, map_ordered
from .driftfree import simulate_batch
from .model import ClampTally, ModelError, ModelSpec, diffusion_matrix, total_drift
from .segments import PathBatch, PathRealization, Segment

__all__ = [
    "DegeneracyError",
    "LogWeightSeries",
    "WeakEstimate",
    "WeightDiagnostics",
    "drift_adjustment",
    "adjustments",
    "log_weight_arrays",
    "accumulate_log_weight",
    "weak_expectation",
    "weighted_run",
    "weight_diagnostics",
    "effective_sample_size",
]

COND_LIMIT = 1e12


class DegeneracyError(ModelError):
    """sigma is numerically singular; Condition 1.3 (non-degeneracy) is violated."""


def adjustments(m: ModelSpec, t: float, segs: np.ndarray, tally: ClampTally | None = None) -> np.ndarray:
    """Solve ``sigma(t, M(t)) a = B(t, M_t) + b(t, M(t))`` for a batch of segments."""
    rhs = total_drift(m, t, segs, tally)
    # a constant sigma is evaluated once rather than per replica
    sig = diffusion_matrix(m, t, segs[:1] if m.constant_diffusion else segs)
    if m.d == 1:
        s = sig[:, 0, 0]
        if np.any(np.abs(s) < 1e-300):
            raise DegeneracyError(f"{m.name}: sigma vanishes (Condition 1.3)")
        return rhs / s[:, None]
    cond = np.linalg.cond(sig)
    if np.any(~np.isfinite(cond)) or np.any(cond > COND_LIMIT):
        raise DegeneracyError(f"{m.name}: sigma condition number above {COND_LIMIT:g} (Condition 1.3)")
    if m.constant_diffusion:
        return np.linalg.solve(sig[0], rhs.T).T
    return np.linalg.solve(sig, rhs[..., None])[..., 0]


def drift_adjustment(m: ModelSpec, path: PathRealization, t: float) -> np.ndarray:
    k = path.grid.step_index(t)
    segs = path.values[None, k : k + path.grid.n_lag + 1]
    return adjustments(m, t, segs)[0]


@dataclass(frozen=True)
class LogWeightSeries:
    times: np.ndarray
    log_d: np.ndarray
    qv: np.ndarray

    def weight(self, t: float) -> float:
        k = int(np.searchsorted(self.times, t - 1e-12))
        return float(np.exp(self.log_d[k]))


def log_weight_arrays(m: ModelSpec, paths: PathBatch, tally: ClampTally | None = None):
    """Running ``log D`` and ``int |a|^2`` on the nodes of ``[0, T]``, each ``(N, n_steps + 1)``."""
    g = paths.grid
    N = len(paths)
    L = g.n_lag
    log_d = np.zeros((g.n_steps + 1, N))
    qv = np.zeros((g.n_steps + 1, N))
    for k in range(g.n_steps):
        t = k * g.dt
        a = adjustments(m, t, paths.values[:, k : k + L + 1], tally)
        if m.d == 1:
            a = a[:, 0]
            a2 = a * a
            stoch = a * paths.noise[:, k, 0]
        else:
            a2 = np.sum(a * a, axis=1)
            stoch = np.sum(a * paths.noise[:, k], axis=1)
        log_d[k + 1] = log_d[k] + stoch - 0.5 * a2 * g.dt
        qv[k + 1] = qv[k] + a2 * g.dt
    return log_d.T, qv.T


def accumulate_log_weight(m: ModelSpec, path: PathRealization) -> LogWeightSeries:
    batch = PathBatch(path.grid, path.values[None], path.noise[None], path.seed, np.array([path.replica]))
    log_d, qv = log_weight_arrays(m, batch)
    g = path.grid
    return LogWeightSeries(np.arange(g.n_steps + 1) * g.dt, log_d[0], qv[0])


def weighted_run(
    m: ModelSpec,
    inits: Sequence[Segment],
    t: float,
    funcs: Sequence[Callable],
    N: int,
    seed: int,
    times: Sequence[float] | None = None,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
    tally: ClampTally | None = None,
):
    """Drift-free runs from each initial segment under common noise.

    Returns ``(log_w, fvals, qv)`` with ``log_w`` of shape ``(n_init, n_times, N)``
    (``log D`` at each requested time, default ``[t]``), ``fvals`` of shape
    ``(n_init, n_funcs, N)`` evaluated on ``M_t`` and ``qv`` the matching
    ``int_0^s |a|^2`` values.
    """
    times = [t] if times is None else list(times)
    grid = inits[0].grid.with_horizon(t)
    idx = [grid.step_index(s) for s in times]
    kt = grid.step_index(t)
    L = grid.n_lag

    def run(span):
        a, b = span
        reps = np.arange(a, b)
        dW = None
        out_w, out_f, out_q = [], [], []
        for x in inits:
            local = ClampTally()
            paths = simulate_batch(m, x, t, seed, reps, dW=dW)
            dW = paths.noise
            log_d, qv = log_weight_arrays(m, paths, local)
            segs = paths.values[:, kt : kt + L + 1]
            out_w.append(log_d[:, idx].T)
            out_q.append(qv[:, idx].T)
            out_f.append(np.stack([np.asarray(f(segs), dtype=float) for f in funcs]) if funcs
                         else np.zeros((0, b - a)))
            if tally is not None:
                tally.add(local.count)
        return np.stack(out_w), np.stack(out_f), np.stack(out_q)

    parts = map_ordered(run, chunk_ranges(N, chunk), workers)
    log_w = np.concatenate([p[0] for p in parts], axis=-1)
    fvals = np.concatenate([p[1] for p in parts], axis=-1)
    qv = np.concatenate([p[2] for p in parts], axis=-1)
    return log_w, fvals, qv


def effective_sample_size(log_w: np.ndarray) -> float:
    """``(sum w)^2 / sum w^2`` computed from log weights."""
    log_w = np.asarray(log_w, dtype=float)
    return float(np.exp(2 * logsumexp(log_w) - logsumexp(2 * log_w)))


@dataclass(frozen=True)
class WeakEstimate:
    estimate: float
    se: float
    mean_weight: float
    ess: float
    n: int
    warning: str | None = None


def _weighted_mean(w: np.ndarray, fv: np.ndarray, self_normalized: bool):
    n = w.size
    if self_normalized:
        sw = w.sum()
        est = float(np.sum(w * fv) / sw)
        se = float(np.sqrt(np.sum(w**2 * (fv - est) ** 2)) / sw)
    else:
        prod = w * fv
        est = float(prod.mean())
        se = float(prod.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return est, se


def weak_expectation(
    m: ModelSpec,
    x: Segment,
    f: Callable,
    t: float,
    N: int,
    seed: int,
    f_bound: float | None = None,
    self_normalized: bool = False,
    ess_floor: float | None = None,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> WeakEstimate:
    """``E f(X_t)`` for the drifted equation as ``(1/N) sum D_i(t) f(M_i,t)``.

    ``f`` maps a batch of segments ``(N, n_lag + 1, d)`` to ``(N,)``. Raw
    weights are used unless ``self_normalized``; an effective sample size
    below ``ess_floor`` (default ``N / 100``) sets ``warning``.
    """
    if t <= 0:
        raise ValueError("t must be a positive grid time")
    log_w, fvals, _ = weighted_run(m, [x], t, [f], N, seed, chunk=chunk, workers=workers)
    lw = log_w[0, 0]
    fv = fvals[0, 0]
    if f_bound is not None and np.any(np.abs(fv) > f_bound):
        raise ValueError("f exceeds its declared bound")
    w = np.exp(lw)
    est, se = _weighted_mean(w, fv, self_normalized)
    ess = effective_sample_size(lw)
    floor = N / 100 if ess_floor is None else ess_floor
    warning = f"effective sample size {ess:.1f} below floor {floor:g}" if ess < floor else None
    return WeakEstimate(est, se, float(w.mean()), ess, N, warning)


@dataclass(frozen=True)
class WeightDiagnostics:
    mean_weight: float
    mean_weight_se: float
    ess: float
    novikov: float
    novikov_se: float
    n: int


def weight_diagnostics(ws, t: float | None = None) -> WeightDiagnostics:
    """Mean weight, ESS and the Monte Carlo ``E exp(1/2 int_0^t |a|^2)``.

    ``ws`` is a sequence of :class:`LogWeightSeries` (evaluated at ``t``) or a
    pair of arrays ``(log_d, qv)`` already taken at ``t``.
    """
    if isinstance(ws, tuple) and len(ws) == 2 and not isinstance(ws[0], LogWeightSeries):
        lw, q = (np.asarray(a, dtype=float) for a in ws)
    else:
        ws = list(ws)
        if not ws:
            raise ValueError("no weight series")
        if t is None:
            t = ws[0].times[-1]
        k = int(np.searchsorted(ws[0].times, t - 1e-12))
        lw = np.array([s.log_d[k] for s in ws])
        q = np.array([s.qv[k] for s in ws])
    n = lw.size
    w = np.exp(lw)
    nov = np.exp(0.5 * q)
    sd = (lambda v: float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0)
    return WeightDiagnostics(float(w.mean()), sd(w), effective_sample_size(lw), float(nov.mean()), sd(nov), n)
