"""Delayed path state: time grids, segments and simulated paths.

A segment is the trailing window ``X_t(s) = X(t + s)``, ``s in [-r, 0]``,
stored on the nodes of a uniform grid. Paths live on ``[-r, T]``; node ``j``
sits at time ``-r + j * dt`` so the initial segment occupies nodes
``0 .. n_lag`` and the segment at time ``t = k * dt`` occupies nodes
``k .. k + n_lag``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridError",
    "TimeGrid",
    "Segment",
    "PathRealization",
    "PathBatch",
    "sup_norm",
    "extract_segment",
    "embed_constant",
]


class GridError(ValueError):
    """Raised for misaligned grids and off-grid or out-of-range times."""


def _aligned_count(length: float, dt: float, what: str) -> int:
    ratio = length / dt
    n = int(round(ratio))
    # one unit of rounding in the quotient is tolerated, nothing more
    if abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise GridError(f"{what}={length!r} is not a multiple of dt={dt!r}")
    return n


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[-r, T]`` with step ``dt``."""

    r: float
    T: float
    dt: float
    n_lag: int = field(init=False, repr=False)
    n_steps: int = field(init=False, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise GridError(f"dt must be positive, got {self.dt!r}")
        if not (np.isfinite(self.r) and self.r > 0):
            raise GridError(f"delay r must be positive, got {self.r!r}")
        if not (np.isfinite(self.T) and self.T >= 0):
            raise GridError(f"horizon T must be nonnegative, got {self.T!r}")
        object.__setattr__(self, "n_lag", _aligned_count(self.r, self.dt, "r"))
        object.__setattr__(self, "n_steps", _aligned_count(self.T, self.dt, "T"))

    @property
    def n_nodes(self) -> int:
        return self.n_lag + self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        """Node times on ``[-r, T]``."""
        return (np.arange(self.n_nodes) - self.n_lag) * self.dt

    @property
    def segment_times(self) -> np.ndarray:
        """Node times of a segment, on ``[-r, 0]``."""
        return (np.arange(self.n_lag + 1) - self.n_lag) * self.dt

    def window(self) -> "TimeGrid":
        """The same grid restricted to ``[-r, 0]``."""
        return TimeGrid(self.r, 0.0, self.dt)

    def with_horizon(self, T: float) -> "TimeGrid":
        return TimeGrid(self.r, T, self.dt)

    def step_index(self, t: float) -> int:
        """Index ``k`` with ``t = k * dt``; raises for off-grid or out-of-range ``t``."""
        k = _aligned_count(t, self.dt, "t")
        if k < 0 or k > self.n_steps:
            raise GridError(f"t={t!r} outside [0, {self.T!r}]")
        return k

    def compatible(self, other: "TimeGrid") -> bool:
        return self.n_lag == other.n_lag and np.isclose(self.dt, other.dt, rtol=1e-12, atol=0)


@dataclass(frozen=True, eq=False)
class Segment:
    """Node values of a path segment on ``[-r, 0]``.

    ``values`` has shape ``(n_lag + 1, d)``; index 0 is time ``-r`` and the
    last row is the head ``x(0)``.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.n_lag + 1:
            raise GridError(
                f"segment needs {self.grid.n_lag + 1} nodes, got shape {np.shape(self.values)}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("segment values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def head(self) -> np.ndarray:
        return self.values[-1]

    def __sub__(self, other: "Segment") -> "Segment":
        return Segment(self.grid, self.values - other.values)

    def __add__(self, other: "Segment") -> "Segment":
        return Segment(self.grid, self.values + other.values)

    def scaled(self, c: float) -> "Segment":
        return Segment(self.grid, c * self.values)

    def shifted(self, v) -> "Segment":
        return Segment(self.grid, self.values + np.asarray(v, dtype=np.float64))

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return self.grid.compatible(other.grid) and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PathRealization:
    """One trajectory on ``[-r, T]`` together with the increments that drove it."""

    grid: TimeGrid
    values: np.ndarray  # (n_nodes, d)
    noise: np.ndarray  # (n_steps, d), Brownian increments
    seed: int = 0
    replica: int = 0

    def __post_init__(self):
        if self.values.shape[0] != self.grid.n_nodes:
            raise GridError("path length does not match its grid")
        if self.noise.shape[0] != self.grid.n_steps:
            raise GridError("noise length must equal T/dt")

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def initial_segment(self) -> Segment:
        return Segment(self.grid.window(), self.values[: self.grid.n_lag + 1])


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Replica-stacked paths: ``values`` is ``(N, n_nodes, d)``, ``noise`` is ``(N, n_steps, d)``."""

    grid: TimeGrid
    values: np.ndarray
    noise: np.ndarray
    seed: int = 0
    replicas: np.ndarray | None = None

    def __post_init__(self):
        if self.replicas is None:
            object.__setattr__(self, "replicas", np.arange(self.values.shape[0]))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    def __getitem__(self, i: int) -> PathRealization:
        return PathRealization(
            self.grid, self.values[i], self.noise[i], self.seed, int(self.replicas[i])
        )

    def segments_at(self, t: float) -> np.ndarray:
        """Segments ``X_t`` of every replica, shape ``(N, n_lag + 1, d)``."""
        k = self.grid.step_index(t)
        return self.values[:, k : k + self.grid.n_lag + 1]

    def heads(self) -> np.ndarray:
        """Values on ``[0, T]``, shape ``(N, n_steps + 1, d)``."""
        return self.values[:, self.grid.n_lag :]


def _euclidean(v: np.ndarray) -> np.ndarray:
    """Norm over the last axis, rescaled so tiny or huge entries neither underflow nor overflow."""
    a = np.abs(v)
    if v.shape[-1] == 1:
        return a[..., 0]
    scale = a.max(axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    return scale[..., 0] * np.sqrt(np.sum((a / safe) ** 2, axis=-1))


def sup_norm(s: Segment) -> float:
    """Max over nodes of the Euclidean norm of the segment value."""
    return float(np.max(_euclidean(s.values)))


def segment_sup_norms(segs: np.ndarray) -> np.ndarray:
    """Batched sup norm for arrays shaped ``(..., n_lag + 1, d)``."""
    return np.max(_euclidean(segs), axis=-1)


def extract_segment(p: PathRealization, t: float) -> Segment:
    """Restriction of ``p`` to ``[t - r, t]`` relabelled to ``[-r, 0]``."""
    k = p.grid.step_index(t)
    return Segment(p.grid.window(), p.values[k : k + p.grid.n_lag + 1])


def embed_constant(v, grid: TimeGrid) -> Segment:
    """Constant segment equal to ``v`` at every node."""
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if not np.all(np.isfinite(v)):
        raise ValueError("constant must be finite")
    return Segment(grid.window(), np.tile(v, (grid.n_lag + 1, 1)))
