"""Drift-free diffusion ``dM = sigma(t, M) dW`` and its a-priori bounds.

Noise comes from counter-based Philox streams keyed by ``(seed, replica)``,
so a replica's increments do not depend on how replicas are partitioned
into chunks or workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._parallel import DEFAULT_CHUNK, chunk_ranges, map_ordered
from .model import ClampTally, ModelSpec, diffusion_matrix, total_drift
from .segments import PathBatch, PathRealization, Segment, TimeGrid, embed_constant

__all__ = [
    "DomainError",
    "NoiseStream",
    "brownian_increments",
    "increments_batch",
    "euler_values",
    "simulate_batch",
    "simulate_driftfree",
    "simulate_driftfree_batch",
    "MomentEstimate",
    "exp_sup_bound",
    "estimate_exp_sup_moment",
    "estimate_exp_sup_moment_streaming",
    "driftfree_sup_squares",
    "estimate_time_integral",
    "krylov_slope",
    "indicator_mixed_norm",
    "strong_error_study",
]


class DomainError(ValueError):
    """Parameter outside the range where a bound is stated."""


@dataclass(frozen=True)
class NoiseStream:
    seed: int
    replica: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=[int(self.seed), int(self.replica)]))


def brownian_increments(ns: NoiseStream, steps: int, dt: float, d: int) -> np.ndarray:
    """``(steps, d)`` array of independent N(0, dt) increments."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    return ns.generator().standard_normal((steps, d)) * np.sqrt(dt)


def increments_batch(seed: int, replicas, steps: int, dt: float, d: int) -> np.ndarray:
    replicas = np.asarray(replicas)
    out = np.empty((len(replicas), steps, d))
    for j, rep in enumerate(replicas):
        out[j] = NoiseStream(seed, int(rep)).generator().standard_normal((steps, d))
    out *= np.sqrt(dt)
    # time-major storage: the solvers sweep over time with all replicas at once
    return np.ascontiguousarray(out.transpose(1, 0, 2)).transpose(1, 0, 2)


def _apply(sig: np.ndarray, v: np.ndarray) -> np.ndarray:
    if sig.shape[-1] == 1:
        return sig[..., 0] * v
    return np.einsum("nij,nj->ni", sig, v)


def euler_values(
    m: ModelSpec,
    x: Segment,
    grid: TimeGrid,
    dW: np.ndarray,
    drift: bool,
    tally: ClampTally | None = None,
) -> np.ndarray:
    """Euler-Maruyama on ``[0, T]`` with history copied from ``x``.

    ``X(t + dt) = X(t) + [B(t, X_t) + b(t, X(t))] dt * drift + sigma ΔW``.
    """
    if not grid.compatible(x.grid):
        raise ValueError("initial segment is not on the model grid")
    if x.d != m.d:
        raise ValueError(f"segment dimension {x.d} != model dimension {m.d}")
    N = dW.shape[0]
    L = grid.n_lag
    vals = np.empty((grid.n_nodes, N, m.d)).transpose(1, 0, 2)
    vals[:, : L + 1] = x.values
    const_sig = None
    if m.constant_diffusion:
        const_sig = diffusion_matrix(m, 0.0, vals[:1, : L + 1])[0]
        scalar = m.d == 1
    for k in range(grid.n_steps):
        t = k * grid.dt
        segs = vals[:, k : k + L + 1]
        if const_sig is None:
            inc = _apply(diffusion_matrix(m, t, segs), dW[:, k])
        elif scalar:
            inc = const_sig[0, 0] * dW[:, k]
        else:
            inc = dW[:, k] @ const_sig.T
        if drift:
            inc = inc + total_drift(m, t, segs, tally) * grid.dt
        vals[:, k + L + 1] = vals[:, k + L] + inc
    return vals


def simulate_batch(
    m: ModelSpec,
    x: Segment,
    T: float,
    seed: int,
    replicas,
    drift: bool = False,
    tally: ClampTally | None = None,
    dW: np.ndarray | None = None,
) -> PathBatch:
    grid = x.grid.with_horizon(T)
    replicas = np.asarray(replicas)
    if dW is None:
        dW = increments_batch(seed, replicas, grid.n_steps, grid.dt, m.d)
    vals = euler_values(m, x, grid, dW, drift, tally)
    return PathBatch(grid, vals, dW, seed, replicas)


def simulate_driftfree(m: ModelSpec, x: Segment, T: float, ns: NoiseStream) -> PathRealization:
    """One drift-free Euler path on ``[-r, T]`` with its noise record."""
    return simulate_driftfree_batch(m, x, T, ns.seed, [ns.replica])[0]


def simulate_driftfree_batch(m: ModelSpec, x: Segment, T: float, seed: int, replicas) -> PathBatch:
    return simulate_batch(m, x, T, seed, replicas, drift=False)


# ---------------------------------------------------------------------------
# exponential moment of the running sup


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo estimate against its bound; ``passed`` means ``estimate + 3 se <= bound``."""

    estimate: float
    se: float
    bound: float
    passed: bool
    alpha: float
    n: int


def exp_sup_bound(alpha: float, d: int, c_sigma: float, T: float, head_sq: float) -> float:
    """``4 / sqrt(1 - 2 a d C T) * exp(a / (1 - 2 a d C T) |x(0)|^2)``."""
    threshold = 1.0 / (2 * d * c_sigma * T)
    if not 0 <= alpha < threshold:
        raise DomainError(
            f"alpha={alpha} outside [0, 1/(2 d C_sigma T)) = [0, {threshold:.6g})"
        )
    gap = 1 - 2 * alpha * d * c_sigma * T
    return float(4 / np.sqrt(gap) * np.exp(alpha / gap * head_sq))


def _moment_from_sups(sups, alpha, d, c_sigma, T, head_sq) -> MomentEstimate:
    bound = exp_sup_bound(alpha, d, c_sigma, T, head_sq)
    vals = np.exp(alpha * np.asarray(sups))
    n = vals.size
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return MomentEstimate(est, se, bound, est + 3 * se <= bound, alpha, n)


def estimate_exp_sup_moment(paths: PathBatch, alpha: float, c_sigma: float = 1.0) -> MomentEstimate:
    """Monte Carlo ``E exp(alpha sup_[0,T] |M|^2)`` against its closed-form bound.

    The sup is the max over grid nodes, a lower bound on the continuous sup.
    """
    g = paths.grid
    heads = paths.heads()
    x0 = heads[:, 0]
    if not np.all(x0 == x0[0]):
        raise ValueError("all paths must share the initial head")
    sups = np.max(np.sum(heads**2, axis=-1), axis=1)
    return _moment_from_sups(sups, alpha, paths.d, c_sigma, g.T, float(np.sum(x0[0] ** 2)))


def driftfree_sup_squares(
    m: ModelSpec, x: Segment, T: float, N: int, seed: int,
    chunk: int = DEFAULT_CHUNK, workers: int = 1,
) -> np.ndarray:
    """``sup_[0,T] |M|^2`` per replica, computed chunk by chunk."""

    def run(rng_):
        a, b = rng_
        p = simulate_batch(m, x, T, seed, np.arange(a, b))
        return np.max(np.sum(p.heads() ** 2, axis=-1), axis=1)

    return np.concatenate(map_ordered(run, chunk_ranges(N, chunk), workers))


def estimate_exp_sup_moment_streaming(
    m: ModelSpec, x: Segment, T: float, alpha: float, N: int, seed: int, **kw
) -> MomentEstimate:
    if m.c_sigma is None:
        raise DomainError("model declares no C_sigma")
    exp_sup_bound(alpha, m.d, m.c_sigma, T, 0.0)
    sups = driftfree_sup_squares(m, x, T, N, seed, **kw)
    return _moment_from_sups(sups, alpha, m.d, m.c_sigma, T, float(np.sum(x.head**2)))


# ---------------------------------------------------------------------------
# occupation integrals


def estimate_time_integral(paths: PathBatch, f: Callable, f_norm: float | None = None):
    """Mean of the left Riemann sum ``sum_i f(t_i, M(t_i)) dt`` over ``[0, T)``.

    Returns ``(estimate, se, slope)`` where ``slope = estimate / f_norm``
    (``nan`` without a norm).
    """
    g = paths.grid
    heads = paths.heads()
    total = np.zeros(len(paths))
    for k in range(g.n_steps):
        total += np.asarray(f(k * g.dt, heads[:, k]), dtype=float) * g.dt
    est = float(total.mean())
    se = float(total.std(ddof=1) / np.sqrt(total.size)) if total.size > 1 else 0.0
    slope = est / f_norm if f_norm else float("nan")
    return est, se, slope


def krylov_slope(estimates, norms) -> float:
    """Least-squares slope through the origin of estimates against ``||f||``."""
    e = np.asarray(estimates, dtype=float)
    n = np.asarray(norms, dtype=float)
    return float(np.dot(n, e) / np.dot(n, n))


def indicator_mixed_norm(eps: float, T: float, p_: float, q_: float, d: int = 1) -> float:
    """``||1_{|y|<=eps}||`` in ``L^q'([0,T]; L^p'(R^d))`` for the time-constant ball indicator."""
    from math import gamma, pi

    vol = pi ** (d / 2) / gamma(d / 2 + 1) * eps**d
    return T ** (1 / q_) * vol ** (1 / p_)


# ---------------------------------------------------------------------------
# self-convergence


def strong_error_study(
    m: ModelSpec, x0, r: float, T: float, dts, N: int, seed: int, refine: int = 16
):
    """RMS error at ``T`` of Euler on step ``dt`` against a ``refine``-times finer
    reference driven by the same Brownian path. Returns ``(dts, errors, slope)``."""
    errs = []
    for dt in dts:
        fine = TimeGrid(r, T, dt / refine)
        coarse = TimeGrid(r, T, dt)
        dW_f = increments_batch(seed, np.arange(N), fine.n_steps, fine.dt, m.d)
        dW_c = dW_f.reshape(N, coarse.n_steps, refine, m.d).sum(axis=2)
        vf = euler_values(m, embed_constant(x0, fine), fine, dW_f, drift=True)[:, -1]
        vc = euler_values(m, embed_constant(x0, coarse), coarse, dW_c, drift=True)[:, -1]
        errs.append(float(np.sqrt(np.mean(np.sum((vf - vc) ** 2, axis=-1)))))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return np.asarray(dts, dtype=float), np.asarray(errs), slope
