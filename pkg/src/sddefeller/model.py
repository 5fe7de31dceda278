"""Coefficient catalog and sampled checks of the structural conditions.

Coefficients are vectorised over a leading replica axis:

* ``delay_drift(t, segs)`` maps segments ``(N, n_lag + 1, d)`` to ``(N, d)``;
* ``singular_drift(t, y)`` maps heads ``(N, d)`` to ``(N, d)``;
* ``diffusion(t, y)`` maps heads ``(N, d)`` to ``(N, d, d)``, or segments when
  ``diffusion_on_segment`` is set (functional diffusion, outside the
  Lipschitz-in-space class).

Pure-delay models additionally expose ``lag_drift(t, xl)`` /
``lag_diffusion(t, xl)``, functions of the lagged value ``X(t - r)`` only,
which the step method integrates block by block.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .segments import Segment, TimeGrid, segment_sup_norms

__all__ = [
    "ModelError",
    "ModelEvaluationError",
    "UnsupportedModelError",
    "ClampTally",
    "ModelSpec",
    "ConditionReport",
    "CONDITIONS",
    "catalog_names",
    "make_model",
    "sgn",
    "eval_coefficients",
    "total_drift",
    "diffusion_matrix",
    "validate_conditions",
    "sublinear_decomposition",
]

CONDITIONS = ("1.2", "1.3", "1.4", "1.5")
CONDITION_TITLES = {
    "1.2": "singular drift b in L^q_p with d/p + 2/q < 1",
    "1.3": "sigma uniformly elliptic, bounded and Lipschitz in space",
    "1.4": "delay drift continuous on [0, r] and strictly sublinear",
    "1.5": "delay drift Lipschitz in the sup norm",
}


class ModelError(Exception):
    pass


class ModelEvaluationError(ModelError):
    """A coefficient produced a non-finite value."""


class UnsupportedModelError(ModelError):
    """The requested operation needs data the model does not declare."""


class ClampTally:
    """Counts componentwise clamps of the singular drift; merge per-worker tallies with ``+``."""

    def __init__(self, count: int = 0):
        self.count = int(count)

    def add(self, n: int) -> None:
        self.count += int(n)

    def __add__(self, other: "ClampTally") -> "ClampTally":
        return ClampTally(self.count + other.count)

    def __repr__(self):
        return f"ClampTally({self.count})"


def sgn(x):
    """Sign with the convention ``sgn(0) = +1``."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    name: str
    d: int
    diffusion: Callable
    delay_drift: Callable | None = None
    singular_drift: Callable | None = None
    diffusion_on_segment: bool = False
    lag_drift: Callable | None = None
    lag_diffusion: Callable | None = None
    c_sigma: float | None = None
    c_b: float | None = None
    growth: Callable | None = None
    p: float | None = None
    q: float | None = None
    b_bounded: bool = False
    b_max: float = 1e6
    constant_diffusion: bool = False
    profile: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self):
        if self.d < 1:
            raise ModelError("dimension must be >= 1")
        if self.singular_drift is not None and not self.b_bounded:
            p, q = self.p, self.q
            if p is None or q is None:
                raise ModelError(f"{self.name}: singular drift needs exponents p, q")
            if not (p > 1 and q > 1 and self.d / p + 2 / q < 1):
                raise ModelError(f"{self.name}: exponents violate d/p + 2/q < 1")
        if self.c_sigma is not None and self.c_sigma < 1:
            raise ModelError("declare C_sigma >= 1 so one constant bounds both sides")

    @property
    def pure_delay(self) -> bool:
        """Past enters only through ``X(t - r)``: eligible for the step method."""
        return self.lag_drift is not None or self.lag_diffusion is not None or (
            self.delay_drift is None and self.diffusion_on_segment is False
        )

    @property
    def strong_solvable(self) -> bool:
        """Condition 1.5 declared, or the step method applies."""
        return self.profile.get("1.5", False) or self.pure_delay


# ---------------------------------------------------------------------------
# evaluation


def _check_finite(name: str, value: np.ndarray, coefficient: str) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise ModelEvaluationError(f"model {name!r}: {coefficient} returned a non-finite value")
    return value


def delay_drift_values(m: ModelSpec, t: float, segs: np.ndarray) -> np.ndarray:
    if m.delay_drift is None:
        return np.zeros((segs.shape[0], m.d))
    return _check_finite(m.name, np.asarray(m.delay_drift(t, segs), dtype=float), "delay drift B")


def singular_drift_values(
    m: ModelSpec, t: float, heads: np.ndarray, tally: ClampTally | None = None
) -> np.ndarray:
    if m.singular_drift is None:
        return np.zeros_like(heads)
    raw = np.asarray(m.singular_drift(t, heads), dtype=float)
    if np.any(np.isnan(raw)):
        raise ModelEvaluationError(f"model {m.name!r}: singular drift b returned NaN")
    clipped = np.clip(raw, -m.b_max, m.b_max)
    if tally is not None:
        tally.add(np.count_nonzero(clipped != raw))
    return clipped


def total_drift(
    m: ModelSpec, t: float, segs: np.ndarray, tally: ClampTally | None = None
) -> np.ndarray:
    """``B(t, X_t) + b(t, X(t))`` for a batch of segments."""
    return delay_drift_values(m, t, segs) + singular_drift_values(m, t, segs[:, -1], tally)


def diffusion_matrix(m: ModelSpec, t: float, segs: np.ndarray) -> np.ndarray:
    arg = segs if m.diffusion_on_segment else segs[:, -1]
    return _check_finite(m.name, np.asarray(m.diffusion(t, arg), dtype=float), "diffusion sigma")


def eval_coefficients(m: ModelSpec, t: float, seg: Segment, tally: ClampTally | None = None):
    """Evaluate ``(B(t, seg), b(t, seg(0)), sigma(t, seg(0)))`` for one segment."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if seg.d != m.d:
        raise ModelError(f"segment dimension {seg.d} != model dimension {m.d}")
    segs = seg.values[None]
    B = delay_drift_values(m, t, segs)[0]
    b = singular_drift_values(m, t, segs[:, -1], tally)[0]
    sig = diffusion_matrix(m, t, segs)[0]
    return B, b, sig


# ---------------------------------------------------------------------------
# catalog


def _eye_field(d: int, scale: float = 1.0):
    eye = scale * np.eye(d)

    def sigma(t, y):
        return np.broadcast_to(eye, (y.shape[0], d, d))

    return sigma


def _brownian(d: int = 1) -> ModelSpec:
    return ModelSpec(
        name="brownian",
        d=d,
        diffusion=_eye_field(d),
        c_sigma=1.0,
        growth=lambda R: np.zeros_like(np.asarray(R, dtype=float)),
        constant_diffusion=True,
        profile={c: True for c in CONDITIONS},
        params={"d": d},
        notes="B = 0, b = 0, sigma = I",
    )


def _sgn_delay_drift(sigma: float = 1.0) -> ModelSpec:
    def lag_drift(t, xl):
        return sgn(xl)

    return ModelSpec(
        name="sgn-delay-drift",
        d=1,
        diffusion=_eye_field(1, sigma),
        delay_drift=lambda t, segs: lag_drift(t, segs[:, 0]),
        lag_drift=lag_drift,
        c_sigma=max(sigma**2, sigma**-2),
        growth=lambda R: np.ones_like(np.asarray(R, dtype=float)),
        constant_diffusion=True,
        profile={"1.2": True, "1.3": True, "1.4": False, "1.5": False},
        params={"sigma": sigma},
        notes="dX = sgn(X(t - r)) dt + sigma dW; B discontinuous, breaks continuity in 1.4",
    )


def _sgn_delay_diffusion() -> ModelSpec:
    def lag_diffusion(t, xl):
        return sgn(xl)[..., None]

    return ModelSpec(
        name="sgn-delay-diffusion",
        d=1,
        diffusion=lambda t, segs: lag_diffusion(t, segs[:, 0]),
        diffusion_on_segment=True,
        lag_diffusion=lag_diffusion,
        c_sigma=1.0,
        growth=lambda R: np.zeros_like(np.asarray(R, dtype=float)),
        profile={"1.2": True, "1.3": False, "1.4": True, "1.5": True},
        notes="dX = sgn(X(t - r)) dW; functional diffusion, outside 1.3",
    )


def _linear_delay(A: float = -1.0, sigma: float = 1.0, saturation: float = 1e3) -> ModelSpec:
    A = float(A)

    def lag_drift(t, xl):
        return A * np.clip(xl, -saturation, saturation)

    return ModelSpec(
        name="linear-delay",
        d=1,
        diffusion=_eye_field(1, sigma),
        delay_drift=lambda t, segs: lag_drift(t, segs[:, 0]),
        lag_drift=lag_drift,
        c_sigma=max(sigma**2, sigma**-2),
        c_b=max(abs(A), 1e-300),
        growth=lambda R: abs(A) * np.minimum(np.asarray(R, dtype=float), saturation),
        constant_diffusion=True,
        profile={c: True for c in CONDITIONS},
        params={"A": A, "sigma": sigma, "saturation": saturation},
        notes="B(t, x) = A x(-r), saturated at |x(-r)| = saturation",
    )


def _constant_drift(c: float = 1.0, d: int = 1) -> ModelSpec:
    cvec = np.full(d, float(c))

    return ModelSpec(
        name="constant-drift",
        d=d,
        diffusion=_eye_field(d),
        singular_drift=lambda t, y: np.broadcast_to(cvec, y.shape),
        b_bounded=True,
        c_sigma=1.0,
        growth=lambda R: np.zeros_like(np.asarray(R, dtype=float)),
        constant_diffusion=True,
        profile={c_: True for c_ in CONDITIONS},
        params={"c": float(c), "d": d},
        notes="b = c constant (bounded drift)",
    )


def _power_singularity(beta: float = 0.25, p: float = 2.0, q: float = 8.0, scale: float = 1.0,
                       d: int = 1) -> ModelSpec:
    # b = scale |y|^-beta 1{|y| <= 1} e_1 lies in L^p iff beta * p < d; together
    # with d/p + 2/q < 1 this needs beta < d/p < 1 - 2/q.
    if not beta * p < d:
        raise ModelError("power-singularity needs beta * p < d for b in L^p")

    def b(t, y):
        r = np.linalg.norm(y, axis=-1)
        # b is an L^p class; its value on the null set {0} is fixed to 0
        with np.errstate(divide="ignore"):
            mag = np.where((r <= 1.0) & (r > 0), scale * r ** (-beta), 0.0)
        out = np.zeros_like(y)
        out[..., 0] = mag
        return out

    return ModelSpec(
        name="power-singularity",
        d=d,
        diffusion=_eye_field(d),
        singular_drift=b,
        p=p,
        q=q,
        c_sigma=1.0,
        growth=lambda R: np.zeros_like(np.asarray(R, dtype=float)),
        constant_diffusion=True,
        profile={c: True for c in CONDITIONS},
        params={"beta": beta, "p": p, "q": q, "scale": scale, "d": d},
        notes="b(y) = scale |y|^-beta 1{|y|<=1} e_1; needs beta < d/p < 1 - 2/q",
    )


def _sine_diffusion() -> ModelSpec:
    def sigma(t, y):
        return (2.0 + np.sin(y))[..., None]

    return ModelSpec(
        name="sine-diffusion",
        d=1,
        diffusion=sigma,
        c_sigma=9.0,
        growth=lambda R: np.zeros_like(np.asarray(R, dtype=float)),
        profile={c: True for c in CONDITIONS},
        notes="dX = (2 + sin X) dW",
    )


_CATALOG = {
    "brownian": _brownian,
    "sgn-delay-drift": _sgn_delay_drift,
    "sgn-delay-diffusion": _sgn_delay_diffusion,
    "linear-delay": _linear_delay,
    "constant-drift": _constant_drift,
    "power-singularity": _power_singularity,
    "sine-diffusion": _sine_diffusion,
}


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


def make_model(name: str, **params) -> ModelSpec:
    """Build a catalog model; keyword arguments override its parameters."""
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise UnsupportedModelError(
            f"unknown model {name!r}; catalog: {', '.join(catalog_names())}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise UnsupportedModelError(f"bad parameters for {name!r}: {exc}") from None


# ---------------------------------------------------------------------------
# condition checks


@dataclass
class ConditionReport:
    model: str
    passed: dict
    witnesses: dict
    constants: dict
    n_samples: int
    notes: dict = field(default_factory=dict)

    def matches_profile(self, profile: dict) -> bool:
        return all(self.passed[c] == profile.get(c, self.passed[c]) for c in CONDITIONS)


def default_sampler(rng: np.random.Generator, n: int, grid: TimeGrid, d: int):
    """Sample ``(t, x, y)`` with ``t`` in ``[0, r]`` and segment pairs at mixed scales.

    A third of the pairs are far apart, the rest are ``y = x + eta * v`` with
    ``eta`` down to 1e-9 so that jumps of the coefficients are seen. Constant
    segments (including zero) are mixed in because they sit on the sign
    thresholds of the catalog models.
    """
    m = grid.n_lag + 1
    t = rng.uniform(0.0, grid.r, n)
    scale = 10.0 ** rng.uniform(-3, 3, n)
    walk = np.cumsum(rng.standard_normal((n, m, d)), axis=1) * np.sqrt(grid.dt)
    x = scale[:, None, None] * (walk + rng.standard_normal((n, 1, d)))
    kind = rng.integers(0, 4, n)
    const = scale[:, None, None] * rng.standard_normal((n, 1, d)) * np.ones((1, m, 1))
    x = np.where((kind == 1)[:, None, None], const, x)
    x = np.where((kind == 2)[:, None, None], 0.0, x)
    far = rng.random(n) < 1 / 3
    eta = np.where(far, scale, 10.0 ** rng.uniform(-9, 0, n))
    v = rng.standard_normal((n, m, d))
    v = np.where((rng.random(n) < 0.25)[:, None, None], -np.ones((n, m, d)), v)
    v /= segment_sup_norms(v)[:, None, None]
    y = x + eta[:, None, None] * v
    return t, x, y


def validate_conditions(
    m: ModelSpec,
    sampler: Callable | None = None,
    n: int = 10_000,
    seed: int = 0,
    grid: TimeGrid | None = None,
) -> ConditionReport:
    """Check Conditions 1.2-1.5 for ``m`` on ``n`` sampled points.

    Every failed flag carries a witness (the offending sample and ratio).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    grid = grid or TimeGrid(1.0, 1.0, 0.05)
    sampler = sampler or default_sampler
    rng = np.random.default_rng(seed)
    try:
        t, x, y = sampler(rng, n, grid, m.d)
    except Exception as exc:  # noqa: BLE001 - any sampler failure is an input error
        raise ValueError(f"sampler failed: {exc}") from exc
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (n, grid.n_lag + 1, m.d) or y.shape != x.shape:
        raise ValueError("sampler returned segments of the wrong shape")

    passed, wit, const, notes = {}, {}, {}, {}

    # 1.2: exponent arithmetic
    if m.singular_drift is None:
        passed["1.2"] = True
        notes["1.2"] = "b = 0"
    elif m.b_bounded:
        passed["1.2"] = True
        notes["1.2"] = "bounded b; handled like a bounded delay drift"
    else:
        val = m.d / m.p + 2 / m.q
        passed["1.2"] = bool(m.p > 1 and m.q > 1 and val < 1)
        const["d/p+2/q"] = val
        if not passed["1.2"]:
            wit["1.2"] = {"p": m.p, "q": m.q, "d/p+2/q": val}

    # 1.3: ellipticity and Lipschitz bound, evaluated per sample
    sx = np.stack([diffusion_matrix(m, ti, xi[None])[0] for ti, xi in zip(t, x)])
    sy = np.stack([diffusion_matrix(m, ti, yi[None])[0] for ti, yi in zip(t, y)])
    eig = np.linalg.eigvalsh(sx @ np.swapaxes(sx, 1, 2))
    lo, hi = eig.min(axis=1), eig.max(axis=1)
    c_est = float(max(hi.max(), 1.0 / max(lo.min(), 1e-300)))
    if m.diffusion_on_segment:
        dist = segment_sup_norms(x - y)
    else:
        dist = np.linalg.norm(x[:, -1] - y[:, -1], axis=1)
    hs = np.linalg.norm((sx - sy).reshape(n, -1), axis=1)
    ok = dist > 0
    lip = np.where(ok, hs / np.where(ok, dist, 1.0), 0.0)
    const["C_sigma_witnessed"] = c_est
    const["sigma_lipschitz_max"] = float(lip.max())
    c_sig = m.c_sigma if m.c_sigma is not None else np.inf
    tol = 1e-9
    ell_ok = c_est <= c_sig * (1 + tol)
    lip_ok = lip.max() <= c_sig * (1 + tol)
    passed["1.3"] = bool(ell_ok and lip_ok)
    if not ell_ok:
        i = int(np.argmax(np.maximum(hi, 1 / np.maximum(lo, 1e-300))))
        wit["1.3"] = {"t": float(t[i]), "x": x[i].tolist(), "eigenvalues": [float(lo[i]), float(hi[i])]}
    elif not lip_ok:
        i = int(np.argmax(lip))
        wit["1.3"] = {"t": float(t[i]), "x": x[i].tolist(), "y": y[i].tolist(), "ratio": float(lip[i])}

    # 1.4 and 1.5 concern the delay drift
    Bx = np.stack([delay_drift_values(m, ti, xi[None])[0] for ti, xi in zip(t, x)])
    By = np.stack([delay_drift_values(m, ti, yi[None])[0] for ti, yi in zip(t, y)])
    nx = segment_sup_norms(x)
    segdist = segment_sup_norms(x - y)
    if m.delay_drift is None:
        passed["1.4"] = passed["1.5"] = True
        notes["1.4"] = notes["1.5"] = "B = 0"
        const["B_lipschitz_max"] = 0.0
    else:
        if m.growth is None:
            raise UnsupportedModelError(f"{m.name}: growth function g_T undeclared")
        g = np.asarray(m.growth(nx), dtype=float)
        nb = np.linalg.norm(Bx, axis=1)
        growth_ok = nb <= g * (1 + tol) + tol
        R = np.geomspace(1.0, 1e12, 49)
        ratios = np.asarray(m.growth(R), dtype=float) / R
        const["g_T(R)/R"] = ratios.tolist()
        tail = ratios[len(ratios) // 2 :]
        sub_ok = bool(np.all(np.diff(tail) <= 1e-12 * tail[:-1] + 1e-300) and ratios[-1] < 1e-3)
        jump = np.linalg.norm(Bx - By, axis=1)
        close = segdist <= 1e-6
        cont_bad = close & (jump > 1e-3)
        passed["1.4"] = bool(growth_ok.all() and sub_ok and not cont_bad.any())
        if not growth_ok.all():
            i = int(np.argmin(g - nb))
            wit["1.4"] = {"x": x[i].tolist(), "|B|": float(nb[i]), "g_T": float(g[i])}
        elif not sub_ok:
            wit["1.4"] = {"R": R.tolist(), "g_T(R)/R": ratios.tolist()}
        elif cont_bad.any():
            i = int(np.argmax(np.where(cont_bad, jump, -1)))
            wit["1.4"] = {
                "t": float(t[i]), "x": x[i].tolist(), "y": y[i].tolist(),
                "distance": float(segdist[i]), "jump": float(jump[i]),
            }
        okd = segdist > 0
        blip = np.where(okd, jump / np.where(okd, segdist, 1.0), 0.0)
        const["B_lipschitz_max"] = float(blip.max())
        c_b = m.c_b if m.c_b is not None else 1e6
        passed["1.5"] = bool(blip.max() <= c_b * (1 + tol))
        if not passed["1.5"]:
            i = int(np.argmax(blip))
            wit["1.5"] = {"t": float(t[i]), "x": x[i].tolist(), "y": y[i].tolist(), "ratio": float(blip[i])}

    return ConditionReport(m.name, passed, wit, const, n, notes)


def sublinear_decomposition(m: ModelSpec, alpha: float, T: float = 1.0, r_max: float = 1e6) -> float:
    """Smallest grid-witnessed ``K`` with ``g_T(R) <= alpha R + K``.

    The R grid is ``{0} ∪ {2^k}`` up to ``r_max``; the catalog growth
    functions do not depend on the horizon, so ``T`` is informational.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if m.growth is None:
        raise UnsupportedModelError(f"{m.name}: growth function g_T undeclared")
    R = np.concatenate([[0.0], 2.0 ** np.arange(-30, int(np.ceil(np.log2(r_max))) + 1)])
    R = R[R <= r_max]
    g = np.asarray(m.growth(R), dtype=float)
    return float(np.max(g - alpha * R))
