"""Grid checks of the Hardy-Littlewood maximal inequality and the stochastic Gronwall lemma."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from ._parallel import DEFAULT_CHUNK, chunk_ranges, map_ordered
from .driftfree import DomainError, increments_batch

__all__ = [
    "GriddedFunction",
    "catalog_function",
    "GRID_CATALOG",
    "maximal_function",
    "maximal_function_grid",
    "sample_pairs",
    "MaximalCheck",
    "maximal_inequality_check",
    "GronwallCheck",
    "DEFAULT_C1",
    "default_c2",
    "deterministic_probe",
    "stochastic_gronwall_check",
]


@dataclass(frozen=True, eq=False)
class GriddedFunction:
    """Node values on the uniform grid ``[-L, L]^d`` with spacing ``h`` (``d`` is 1 or 2)."""

    h: float
    L: float
    values: np.ndarray
    p: float = 2.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if not (self.h > 0 and self.L > 0):
            raise ValueError("h and L must be positive")
        n = int(round(2 * self.L / self.h)) + 1
        if abs((n - 1) * self.h - 2 * self.L) > 1e-9 * self.L:
            raise ValueError("2L must be a multiple of h")
        if v.ndim not in (1, 2) or any(s != n for s in v.shape):
            raise ValueError(f"values must have shape ({n},) or ({n}, {n})")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    def index(self, x) -> tuple[int, ...]:
        """Node index of the point ``x``; raises if ``x`` is off-grid or outside the extent."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.size != self.dim:
            raise ValueError("point dimension mismatch")
        k = (x + self.L) / self.h
        idx = np.rint(k).astype(int)
        if np.any(np.abs(k - idx) > 1e-6) or np.any(idx < 0) or np.any(idx >= self.n):
            raise ValueError(f"{x} is not a grid node")
        return tuple(int(i) for i in idx)

    def map(self, fn) -> "GriddedFunction":
        return GriddedFunction(self.h, self.L, fn(self.values), self.p)

    def gradient_norm(self) -> "GriddedFunction":
        """``|grad phi|`` by second-order finite differences."""
        if self.dim == 1:
            g = np.abs(np.gradient(self.values, self.h))
        else:
            gx, gy = np.gradient(self.values, self.h)
            g = np.hypot(gx, gy)
        return GriddedFunction(self.h, self.L, g, self.p)

    def lp_norm(self, p: float | None = None) -> float:
        p = self.p if p is None else p
        return float((np.sum(np.abs(self.values) ** p) * self.h**self.dim) ** (1 / p))


def _catalog_values(name: str, x: np.ndarray) -> np.ndarray:
    if name == "gaussian-bump":
        return np.exp(-np.sum(x**2, axis=0))
    if name == "smoothed-step":
        # smoothed indicator of [0, 1] in the first coordinate
        s = 0.1
        return 0.5 * (np.tanh(x[0] / s) - np.tanh((x[0] - 1) / s)) * np.exp(-np.sum(x[1:] ** 2, axis=0))
    if name == "sinusoid":
        return np.sin(2 * x[0]) * np.exp(-np.sum(x**2, axis=0) / 8)
    if name == "indicator-unit":
        return ((x[0] >= 0) & (x[0] <= 1)).astype(float) * np.ones_like(np.sum(x, axis=0))
    raise KeyError(f"unknown grid function {name!r}; catalog: {', '.join(GRID_CATALOG)}")


GRID_CATALOG = ("gaussian-bump", "smoothed-step", "sinusoid", "indicator-unit")


def catalog_function(name: str, h: float, L: float, dim: int = 1, p: float = 2.0) -> GriddedFunction:
    axis = -L + h * np.arange(int(round(2 * L / h)) + 1)
    x = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"))
    return GriddedFunction(h, L, _catalog_values(name, x), p)


def _radii(phi: GriddedFunction) -> range:
    # radii h, 2h, ..., L in node units
    return range(1, int(round(phi.L / phi.h)) + 1)


def maximal_function_grid(phi: GriddedFunction) -> np.ndarray:
    """Maximal function at every node.

    For each radius ``k h`` the ball average runs over the grid nodes inside
    the ball and inside the domain (clipped balls, renormalised by their
    node count); the sup is the max over radii ``h, ..., L``.
    """
    v = phi.values
    n = phi.n
    if phi.dim == 1:
        S = np.concatenate([[0.0], np.cumsum(v)])
        i = np.arange(n)
        best = np.full(n, -np.inf)
        for k in _radii(phi):
            lo = np.maximum(i - k, 0)
            hi = np.minimum(i + k, n - 1)
            best = np.maximum(best, (S[hi + 1] - S[lo]) / (hi - lo + 1))
        return best
    ones = np.ones_like(v)
    best = np.full(v.shape, -np.inf)
    for k in _radii(phi):
        r = np.arange(-k, k + 1)
        disk = (r[:, None] ** 2 + r[None, :] ** 2 <= k * k).astype(float)
        total = fftconvolve(v, disk, mode="same")
        count = np.rint(fftconvolve(ones, disk, mode="same"))
        best = np.maximum(best, total / count)
    return best


def maximal_function(phi: GriddedFunction, x) -> float:
    """Maximal function at the grid node ``x`` (a coordinate, not an index)."""
    idx = phi.index(x)
    v = phi.values
    n = phi.n
    best = -np.inf
    if phi.dim == 1:
        (i,) = idx
        for k in _radii(phi):
            lo, hi = max(i - k, 0), min(i + k, n - 1)
            best = max(best, float(v[lo : hi + 1].mean()))
        return best
    i, j = idx
    I, J = np.ogrid[:n, :n]
    d2 = (I - i) ** 2 + (J - j) ** 2
    for k in _radii(phi):
        best = max(best, float(v[d2 <= k * k].mean()))
    return best


def sample_pairs(phi: GriddedFunction, count: int, seed: int = 0) -> np.ndarray:
    """``(count, 2, dim)`` coordinates of distinct node pairs, uniformly drawn."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, phi.n, size=(count, 2, phi.dim))
    same = np.all(idx[:, 0] == idx[:, 1], axis=1)
    while np.any(same):
        idx[same, 1] = rng.integers(0, phi.n, size=(int(same.sum()), phi.dim))
        same = np.all(idx[:, 0] == idx[:, 1], axis=1)
    return -phi.L + phi.h * idx


@dataclass(frozen=True)
class MaximalCheck:
    c_d: float
    c_dp: float
    violations: int
    n_pairs: int
    reference: float


def maximal_inequality_check(
    phi: GriddedFunction,
    pairs: int | np.ndarray = 10_000,
    p: float | None = None,
    seed: int = 0,
    reference: float | None = None,
    margin: float = 1.05,
) -> MaximalCheck:
    """Fit ``C_d`` in ``|phi(x) - phi(y)| <= C |x - y| (M|grad phi|(x) + M|grad phi|(y))``.

    ``C_d`` is the largest ratio over the pairs (0 if ``phi`` is constant on
    them). Violations are counted against ``reference``, by default
    ``margin * C_d``. ``c_dp`` is ``||M|phi| ||_p / ||phi||_p``.
    """
    p = phi.p if p is None else p
    if p <= 1:
        raise ValueError("p must exceed 1")
    coords = sample_pairs(phi, pairs, seed) if np.isscalar(pairs) else np.asarray(pairs, dtype=float)
    if coords.ndim == 2:
        coords = coords[..., None]
    idx = np.rint((coords + phi.L) / phi.h).astype(int)
    if np.any(np.abs(idx * phi.h - phi.L - coords) > 1e-6 * phi.h) or np.any(idx < 0) or np.any(idx >= phi.n):
        raise ValueError("pair coordinates must be grid nodes")
    Mg = maximal_function_grid(phi.gradient_norm())
    at = lambda arr, k: arr[tuple(idx[:, k, c] for c in range(phi.dim))]
    num = np.abs(at(phi.values, 0) - at(phi.values, 1))
    dist = np.linalg.norm(coords[:, 0] - coords[:, 1], axis=-1)
    den = dist * (at(Mg, 0) + at(Mg, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num == 0, 0.0, num / den)
    c_d = float(ratio.max()) if ratio.size else 0.0
    ref = margin * c_d if reference is None else reference
    violations = int(np.count_nonzero(ratio > ref))
    absphi = phi.map(np.abs)
    norm = phi.lp_norm(p)
    M = GriddedFunction(phi.h, phi.L, maximal_function_grid(absphi), p)
    c_dp = M.lp_norm(p) / norm if norm > 0 else float("nan")
    return MaximalCheck(c_d, float(c_dp), violations, len(coords), float(ref))


# ---------------------------------------------------------------------------
# stochastic Gronwall

DEFAULT_C1 = 1.0


def default_c2(p: float) -> float:
    """Default ``c2(p) = 1 / (1 - p)``; with ``c1 = 1`` it clears the deterministic probe."""
    return 1.0 / (1.0 - p)


def _check_p(p: float) -> None:
    if not 0 < p < 1:
        raise DomainError(f"p={p} must lie in (0, 1)")


def deterministic_probe(p: float, c1: float, c2: float, kt=None) -> bool:
    """Does ``C^p e^{p K T} <= C^p c2 e^{c1 K T}`` hold on the ``KT`` grid?

    Compared in the log domain, ``log c2 + (c1 - p) KT >= 0``. The default
    grid is ``0``, a geometric range up to ``1e12`` and the limit
    ``KT -> inf``, where only the sign of ``c1 - p`` matters; the probe then
    passes exactly when ``c1 >= p`` and ``c2 >= 1``.
    """
    _check_p(p)
    if c2 <= 0:
        return False
    if kt is None:
        kt = np.concatenate([[0.0], np.geomspace(1e-3, 1e12, 61), [np.inf]])
    kt = np.asarray(kt, dtype=float)
    slack = c1 - p
    finite = np.isfinite(kt)
    ok = np.all(np.log(c2) + slack * kt[finite] >= 0)
    if np.any(~finite):
        ok = ok and (slack > 0 or (slack == 0 and np.log(c2) >= 0))
    return bool(ok)


@dataclass(frozen=True)
class GronwallCheck:
    scenario: str
    lhs: float
    lhs_se: float
    rhs: float
    passed: bool
    c1: float
    c2: float
    N: int


def stochastic_gronwall_check(
    scenario: str,
    K: float,
    C: float,
    p: float,
    T: float,
    N: int = 100_000,
    seed: int = 0,
    c1: float | None = None,
    c2: float | None = None,
    dt: float = 1e-3,
    vol: float = 0.5,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> GronwallCheck:
    """Estimate ``E sup_[0,T] Z^p`` and compare with ``C^p c2 e^{c1 K T}``.

    Scenarios:

    * ``zero``: ``Z = 0``, ``M = 0``;
    * ``deterministic-exponential``: ``Z(t) = C e^{K t}``, ``M = 0``, which
      meets the hypothesis since ``K int_0^t C e^{K s} ds + C = C e^{K t}``;
    * ``martingale-perturbed``: Euler recursion
      ``Z_{k+1} = Z_k + K S_k dt + vol Z_k dW_k`` with ``S`` the running max,
      so the hypothesis holds with equality and ``M = vol int Z dW``.

    The Monte Carlo scenario passes when ``lhs + 3 se <= rhs``.
    """
    _check_p(p)
    if K < 0 or C < 0 or T < 0:
        raise ValueError("K, C and T must be nonnegative")
    c1 = DEFAULT_C1 if c1 is None else c1
    c2 = default_c2(p) if c2 is None else c2
    rhs = C**p * c2 * np.exp(c1 * K * T)
    if scenario == "zero":
        return GronwallCheck(scenario, 0.0, 0.0, float(rhs), bool(0.0 <= rhs), c1, c2, N)
    if scenario == "deterministic-exponential":
        lhs = C**p * np.exp(p * K * T)
        return GronwallCheck(scenario, float(lhs), 0.0, float(rhs), bool(lhs <= rhs), c1, c2, N)
    if scenario != "martingale-perturbed":
        raise ValueError(f"unknown scenario {scenario!r}")
    steps = int(round(T / dt))

    def run(span):
        a, b = span
        dW = increments_batch(seed, np.arange(a, b), steps, dt, 1)[:, :, 0].T  # (steps, n)
        Z = np.full(b - a, float(C))
        S = Z.copy()
        for k in range(steps):
            Z = Z + K * S * dt + vol * Z * dW[k]
            if np.any(Z < 0):
                raise ArithmeticError("Euler step left the nonnegative cone; reduce dt")
            S = np.maximum(S, Z)
        return S**p

    vals = np.concatenate(map_ordered(run, chunk_ranges(N, chunk), workers))
    lhs = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0
    return GronwallCheck(scenario, lhs, se, float(rhs), bool(lhs + 3 * se <= rhs), c1, c2, N)
