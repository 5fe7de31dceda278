"""Strong solutions of the full delay equation.

Two schemes share the noise conventions of :mod:`sddefeller.driftfree`:

* Euler-Maruyama with the delay drift evaluated on the current segment;
* the step method for pure-delay models, which integrates each block
  ``[k r, (k + 1) r]`` as a plain SDE whose coefficients are read off the
  already constructed previous block.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._parallel import DEFAULT_CHUNK, chunk_ranges, map_ordered
from .driftfree import NoiseStream, euler_values, increments_batch
from .model import ClampTally, ModelError, ModelSpec, diffusion_matrix, singular_drift_values
from .segments import PathBatch, PathRealization, Segment, TimeGrid

__all__ = [
    "CapabilityError",
    "HeuristicSchemeWarning",
    "scheme_is_heuristic",
    "CoupledPair",
    "simulate_strong",
    "simulate_strong_batch",
    "simulate_step_method",
    "step_method_values",
    "simulate_coupled",
    "strong_values",
    "coupled_map",
]


class CapabilityError(ModelError):
    """The requested scheme is not valid for this model."""


class HeuristicSchemeWarning(UserWarning):
    """Strong scheme run on an unbounded singular drift, where it has no convergence guarantee."""


def scheme_is_heuristic(m: ModelSpec) -> bool:
    """True when ``b`` is present and unbounded; Girsanov estimates are the reference there."""
    return m.singular_drift is not None and not m.b_bounded


def _require_strong(m: ModelSpec, warn: bool = True) -> None:
    if not m.strong_solvable:
        raise CapabilityError(
            f"{m.name}: no strong solution scheme (needs Condition 1.5 or a pure-delay form)"
        )
    if warn and scheme_is_heuristic(m):
        warnings.warn(f"{m.name}: unbounded singular drift, strong-scheme results are heuristic; "
                      "use Girsanov weights as reference", HeuristicSchemeWarning, stacklevel=3)


def step_method_values(
    m: ModelSpec, x: Segment, grid: TimeGrid, dW: np.ndarray, tally: ClampTally | None = None
) -> np.ndarray:
    """Blockwise construction for models whose past enters through ``X(t - r)`` only."""
    if not m.pure_delay:
        raise CapabilityError(f"{m.name}: step method needs a pure-delay model")
    if not grid.compatible(x.grid):
        raise ValueError("initial segment is not on the model grid")
    N = dW.shape[0]
    L = grid.n_lag
    dt = grid.dt
    vals = np.empty((grid.n_nodes, N, m.d)).transpose(1, 0, 2)
    vals[:, : L + 1] = x.values
    # explicit in-block sums are possible when neither b nor a head-dependent sigma enters
    head_free = m.singular_drift is None and (m.lag_diffusion is not None or m.constant_diffusion)
    const_sig = None
    if m.lag_diffusion is None and m.constant_diffusion:
        const_sig = diffusion_matrix(m, 0.0, vals[:1, : L + 1])[0]

    vt = vals.transpose(1, 0, 2)  # time-major views, contiguous per node
    dWt = dW.transpose(1, 0, 2)
    for a in range(0, grid.n_steps, L):
        b = min(a + L, grid.n_steps)
        times = np.arange(a, b) * dt
        lagged = vt[a:b]  # X(t - r) at every step of the block, already known
        if m.lag_drift is not None:
            drift = np.stack([m.lag_drift(t, lagged[j]) for j, t in enumerate(times)])
        else:
            drift = np.zeros((b - a, N, m.d))
        sig = None
        if m.lag_diffusion is not None:
            sig = np.stack([m.lag_diffusion(t, lagged[j]) for j, t in enumerate(times)])

        if head_free:
            if sig is not None:
                noise = np.einsum("knij,knj->kni", sig, dWt[a:b])
            elif m.d == 1:
                noise = const_sig[0, 0] * dWt[a:b]
            else:
                noise = dWt[a:b] @ const_sig.T
            # drift and noise summed separately so shared-noise pairs differ by drift sums only
            base = vt[L + a].copy()
            dsum = np.zeros_like(base)
            nsum = np.zeros_like(base)
            for j in range(b - a):
                dsum += drift[j] * dt
                nsum += noise[j]
                vt[L + a + j + 1] = base + dsum + nsum
        else:
            for j in range(b - a):
                k = a + j
                head = vt[L + k]
                inc = drift[j] + singular_drift_values(m, times[j], head, tally)
                s = sig[j] if sig is not None else diffusion_matrix(m, times[j], vals[:, k : k + L + 1])
                vt[L + k + 1] = head + inc * dt + np.einsum("nij,nj->ni", s, dWt[k])
    return vals


def strong_values(
    m: ModelSpec,
    x: Segment,
    grid: TimeGrid,
    dW: np.ndarray,
    method: str = "auto",
    tally: ClampTally | None = None,
) -> np.ndarray:
    """Strong path values under ``dW``; ``method`` is ``euler``, ``step`` or ``auto``."""
    _require_strong(m, warn=False)
    if method == "auto":
        method = "step" if m.pure_delay else "euler"
    if method == "step":
        return step_method_values(m, x, grid, dW, tally)
    if method == "euler":
        return euler_values(m, x, grid, dW, drift=True, tally=tally)
    raise ValueError(f"unknown method {method!r}")


def simulate_strong_batch(
    m: ModelSpec, x: Segment, T: float, seed: int, replicas, dW: np.ndarray | None = None,
    method: str = "euler", tally: ClampTally | None = None,
) -> PathBatch:
    _require_strong(m)
    grid = x.grid.with_horizon(T)
    replicas = np.asarray(replicas)
    if dW is None:
        dW = increments_batch(seed, replicas, grid.n_steps, grid.dt, m.d)
    return PathBatch(grid, strong_values(m, x, grid, dW, method, tally), dW, seed, replicas)


def simulate_strong(m: ModelSpec, x: Segment, T: float, ns: NoiseStream) -> PathRealization:
    """Euler path of the full equation, ``B`` evaluated on the trailing segment."""
    return simulate_strong_batch(m, x, T, ns.seed, [ns.replica])[0]


def simulate_step_method(m: ModelSpec, x: Segment, T: float, ns: NoiseStream) -> PathRealization:
    if not m.pure_delay:
        raise CapabilityError(f"{m.name}: step method needs a pure-delay model")
    return simulate_strong_batch(m, x, T, ns.seed, [ns.replica], method="step")[0]


@dataclass(frozen=True)
class CoupledPair:
    x_path: PathRealization
    y_path: PathRealization

    def __post_init__(self):
        if not np.array_equal(self.x_path.noise, self.y_path.noise):
            raise ValueError("coupled paths must share the noise record")

    def segment_distance(self, t: float) -> float:
        g = self.x_path.grid
        k = g.step_index(t)
        diff = self.x_path.values[k : k + g.n_lag + 1] - self.y_path.values[k : k + g.n_lag + 1]
        return float(np.max(np.linalg.norm(diff, axis=1)))


def simulate_coupled(
    m: ModelSpec, x: Segment, y: Segment, T: float, ns: NoiseStream, method: str = "auto"
) -> CoupledPair:
    """Two strong paths from ``x`` and ``y`` driven by one noise record."""
    if not x.grid.compatible(y.grid):
        raise ValueError("x and y must share a grid")
    px = simulate_strong_batch(m, x, T, ns.seed, [ns.replica], method=method)
    py = simulate_strong_batch(m, y, T, ns.seed, [ns.replica], dW=px.noise, method=method)
    return CoupledPair(px[0], py[0])


def coupled_map(
    m: ModelSpec,
    inits: Sequence[Segment],
    t: float,
    N: int,
    seed: int,
    fn: Callable[[list], np.ndarray],
    method: str = "auto",
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> np.ndarray:
    """Apply ``fn`` to the time-``t`` segments of strong paths from every initial segment.

    All initial segments share each replica's noise. ``fn`` receives a list of
    ``(n, n_lag + 1, d)`` arrays, one per initial segment, and returns an array
    whose last axis runs over the ``n`` replicas of the chunk; chunks are
    concatenated along it in replica order.
    """
    _require_strong(m)
    grid = inits[0].grid.with_horizon(t)
    k = grid.step_index(t)
    L = grid.n_lag

    def run(span):
        a, b = span
        dW = increments_batch(seed, np.arange(a, b), grid.n_steps, grid.dt, m.d)
        segs = [strong_values(m, x, grid, dW, method)[:, k : k + L + 1] for x in inits]
        return np.asarray(fn(segs))

    return np.concatenate(map_ordered(run, chunk_ranges(N, chunk), workers), axis=-1)
