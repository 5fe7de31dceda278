"""Convergence modes of random variables on finite instances.

An instance is a finite probability space ``(Omega, F, P)`` with ``F``
generated by a partition, a finite value space ``E`` carrying a topology
(given directly, or generated by a family of pseudometrics), a limit
variable ``X`` and an eventually constant sequence ``X_k``. Every limit in
``k`` is then the value at the tail, so each mode of convergence becomes a
finite check:

* 1a, convergence in outer probability: ``P*(d(X, X_k) >= eps) -> 0`` for all
  pseudometrics ``d`` of the family and ``eps > 0``; for instances given by a
  topology alone the open-set form ``P(X in O, X_k not in O) -> 0`` is used;
* 1b, ``P(X_k in O) -> P(X in O)`` for every open ``O``;
* 2, ``E|f(X) - f(X_k)| -> 0`` for every bounded Borel ``f``, checked as
  ``P(X in A, X_k not in A) -> 0`` for every Borel ``A``.

Sets are bitmasks: bit ``i`` of a subset of ``E`` (or ``Omega``) is point ``i``.
Probabilities are exact fractions.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import lcm
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "InstanceError",
    "UnsupportedInstanceError",
    "FiniteInstance",
    "ModeVerdict",
    "outer_measure",
    "check_modes",
    "cond2_by_functions",
    "OracleReport",
    "equivalence_oracle",
    "exhaustive_family",
    "random_family",
    "example_pointwise_not_law",
    "example_law_not_pointwise",
    "all_topologies",
    "pseudometric_tables",
    "gauge_topology",
]


class InstanceError(ValueError):
    """Malformed instance: weights, partition, metric, topology or measurability."""


class UnsupportedInstanceError(InstanceError):
    """Sequence description without an eventual constant tail."""


# ---------------------------------------------------------------------------
# set algebra helpers


def _mask(s: Iterable[int]) -> int:
    out = 0
    for i in s:
        out |= 1 << int(i)
    return out


def _members(mask: int, size: int) -> list[int]:
    return [i for i in range(size) if mask >> i & 1]


def _lattice_closure(sets: Iterable[int], full: int) -> tuple[int, ...]:
    """Smallest family containing ``sets``, ``0`` and ``full``, closed under union and intersection."""
    fam = set(sets) | {0, full}
    changed = True
    while changed:
        changed = False
        cur = list(fam)
        for a, b in itertools.combinations(cur, 2):
            for c in (a | b, a & b):
                if c not in fam:
                    fam.add(c)
                    changed = True
    return tuple(sorted(fam))


def _is_topology(opens: Sequence[int], full: int) -> bool:
    fam = set(opens)
    if 0 not in fam or full not in fam:
        return False
    return all((a | b) in fam and (a & b) in fam for a in fam for b in fam)


def _atoms_of(sets: Sequence[int], size: int) -> tuple[int, ...]:
    """Cells of the partition of ``range(size)`` by membership pattern in ``sets``."""
    cells: dict[tuple, int] = {}
    for i in range(size):
        key = tuple(s >> i & 1 for s in sets)
        cells[key] = cells.get(key, 0) | 1 << i
    return tuple(sorted(cells.values()))


def _unions(atoms: Sequence[int]) -> tuple[int, ...]:
    out = []
    for r in range(len(atoms) + 1):
        for combo in itertools.combinations(atoms, r):
            m = 0
            for a in combo:
                m |= a
            out.append(m)
    return tuple(sorted(out))


def _check_pseudometric(table, m: int) -> tuple[tuple[Fraction, ...], ...]:
    t = tuple(tuple(Fraction(v) for v in row) for row in table)
    if len(t) != m or any(len(row) != m for row in t):
        raise InstanceError("metric table must be m x m")
    for i in range(m):
        if t[i][i] != 0:
            raise InstanceError("metric table needs a zero diagonal")
        for j in range(m):
            if t[i][j] < 0 or t[i][j] != t[j][i]:
                raise InstanceError("metric table must be nonnegative and symmetric")
            for k in range(m):
                if t[i][k] > t[i][j] + t[j][k]:
                    raise InstanceError("metric table violates the triangle inequality")
    return t


def gauge_topology(tables, m: int) -> tuple[int, ...]:
    """Topology generated by the open balls ``{y : d(x, y) < r}`` of every table."""
    full = (1 << m) - 1
    balls = set()
    for t in tables:
        for x in range(m):
            for v in set(t[x]):
                # r just above v: the ball is {y : d(x, y) <= v}
                balls.add(_mask(y for y in range(m) if t[x][y] <= v))
    return _lattice_closure(balls, full)


@lru_cache(maxsize=None)
def all_topologies(m: int) -> tuple[tuple[int, ...], ...]:
    """Every topology on ``m`` labelled points (1, 4, 29 for m = 1, 2, 3)."""
    full = (1 << m) - 1
    proper = [s for s in range(1, full)]
    out = []
    for r in range(len(proper) + 1):
        for fam in itertools.combinations(proper, r):
            opens = (0, *fam, full) if full else (0,)
            if _is_topology(opens, full):
                out.append(tuple(sorted(set(opens))))
    return tuple(out)


@lru_cache(maxsize=None)
def pseudometric_tables(m: int, values: tuple = (0, 1, 2)) -> tuple:
    """All pseudometric tables on ``m`` points with off-diagonal entries in ``values``."""
    pairs = list(itertools.combinations(range(m), 2))
    out = []
    for vals in itertools.product(values, repeat=len(pairs)):
        t = [[0] * m for _ in range(m)]
        for (i, j), v in zip(pairs, vals):
            t[i][j] = t[j][i] = v
        try:
            out.append(_check_pseudometric(t, m))
        except InstanceError:
            continue
    return tuple(out)


def _partitions(items: list[int]):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


# ---------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class FiniteInstance:
    """Finite probability space, value space and an eventually constant sequence.

    ``atoms`` partition ``range(n)`` and generate ``F``. ``metrics`` is a
    family of pseudometric tables (a single metric is a family of one) and
    ``opens`` a list of open subsets of ``range(m)``; with only ``metrics``
    the topology is the generated one. ``X_k`` is ``prefix[k]`` for
    ``k < len(prefix)`` and ``tail`` afterwards.
    """

    weights: tuple
    atoms: tuple
    m: int
    X: tuple
    tail: tuple | None
    prefix: tuple = ()
    metrics: tuple | None = None
    opens: tuple | None = None
    name: str = ""

    def __post_init__(self):
        w = tuple(Fraction(v) for v in self.weights)
        if not w or any(v < 0 for v in w) or sum(w) != 1:
            raise InstanceError("weights must be nonnegative and sum to 1")
        n = len(w)
        atoms = tuple(sorted(int(a) if isinstance(a, (int, np.integer)) else _mask(a) for a in self.atoms))
        seen = 0
        for a in atoms:
            if a == 0 or a & seen:
                raise InstanceError("sigma-algebra atoms must be nonempty and disjoint")
            seen |= a
        if seen != (1 << n) - 1:
            raise InstanceError("sigma-algebra atoms must cover Omega")
        if self.m < 1:
            raise InstanceError("E must be nonempty")
        full = (1 << self.m) - 1
        metrics = None
        if self.metrics is not None:
            metrics = tuple(_check_pseudometric(t, self.m) for t in self.metrics)
            if not metrics:
                raise InstanceError("gauge family must be nonempty")
        opens = None
        if self.opens is not None:
            opens = tuple(sorted({int(o) if isinstance(o, (int, np.integer)) else _mask(o) for o in self.opens}))
            if not _is_topology(opens, full):
                raise InstanceError("opens must contain 0 and E and be closed under union and intersection")
        if metrics is not None:
            generated = gauge_topology(metrics, self.m)
            if opens is not None and opens != generated:
                raise InstanceError("opens differ from the topology generated by the metrics")
            opens = generated
        if opens is None:
            raise InstanceError("instance needs metrics or opens")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "metrics", metrics)
        object.__setattr__(self, "opens", opens)
        object.__setattr__(self, "prefix", tuple(tuple(p) for p in self.prefix))
        object.__setattr__(self, "X", tuple(self.X))
        if self.tail is not None:
            object.__setattr__(self, "tail", tuple(self.tail))
        for v in (self.X, *self.prefix, *(() if self.tail is None else (self.tail,))):
            if len(v) != n or any(not 0 <= e < self.m for e in v):
                raise InstanceError("random variables map range(n) into range(m)")
            if not self.measurable(v):
                raise InstanceError(f"map {v} is not F / Borel(E) measurable")

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def borel_atoms(self) -> tuple[int, ...]:
        return _atoms_of(self.opens, self.m)

    @property
    def sigma_algebra(self) -> tuple[int, ...]:
        return _unions(self.atoms)

    def measurable(self, v: Sequence[int]) -> bool:
        """Preimage of every Borel atom is a union of ``F`` atoms."""
        labels = {}
        for k, b in enumerate(self.borel_atoms):
            for e in _members(b, self.m):
                labels[e] = k
        for a in self.atoms:
            if len({labels[v[i]] for i in _members(a, self.n)}) > 1:
                return False
        return True

    def term(self, k: int) -> tuple:
        if self.tail is None and k >= len(self.prefix):
            raise UnsupportedInstanceError("sequence has no eventual constant tail")
        return self.prefix[k] if k < len(self.prefix) else self.tail

    def describe(self) -> str:
        return repr((self.weights, self.atoms, self.m, self.X, self.prefix, self.tail,
                     self.metrics, None if self.metrics else self.opens))

    def digest(self) -> str:
        return hashlib.sha1(self.describe().encode()).hexdigest()[:12]


def outer_measure(inst: FiniteInstance, A) -> Fraction:
    """``P*(A) = min{P(B) : A subset B, B in F}``, enumerating ``F``."""
    a = A if isinstance(A, int) else _mask(A)
    best = Fraction(1)
    for B in inst.sigma_algebra:
        if a & ~B == 0:
            best = min(best, sum((inst.weights[i] for i in _members(B, inst.n)), Fraction(0)))
    return best


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class ModeVerdict:
    cond_1a: bool
    cond_1b: bool
    cond_2: bool
    form_1a: str  # "metric" or "open"
    outer_regular: bool
    cond_1a_open: bool | None = None
    witness_1a: tuple | None = None
    witness_1b: tuple | None = None
    witness_2: tuple | None = None

    @property
    def triple(self) -> tuple[bool, bool, bool]:
        return self.cond_1a, self.cond_1b, self.cond_2

    @property
    def equivalence_holds(self) -> bool:
        return (self.cond_1a and self.cond_1b) == self.cond_2


class _Engine:
    """Integer-weight verdict computation shared by single checks and the oracle."""

    def __init__(self, weights, atoms, m, opens, metrics):
        den = lcm(*(w.denominator for w in weights))
        self.units = [int(w * den) for w in weights]
        self.den = den
        self.n = len(weights)
        self.m = m
        self.atoms = atoms
        self.opens = opens
        self.metrics = metrics
        self.borel_atoms = _atoms_of(opens, m)
        self.borel = _unions(self.borel_atoms)

    def prob(self, omega_mask: int) -> int:
        return sum(self.units[i] for i in range(self.n) if omega_mask >> i & 1)

    def outer(self, omega_mask: int) -> int:
        return sum(self.prob(a) for a in self.atoms if a & omega_mask)

    def preimage(self, v, e_mask: int) -> int:
        return _mask(i for i in range(self.n) if e_mask >> v[i] & 1)

    def outer_regular(self, X) -> bool:
        # finite case: the infimum over open supersets is a minimum
        for A in self.borel:
            pa = self.prob(self.preimage(X, A))
            if all(self.prob(self.preimage(X, O)) != pa for O in self.opens if A & ~O == 0):
                return False
        return True

    def verdict(self, X, T) -> ModeVerdict:
        F = lambda u: Fraction(u, self.den)
        # 1b on opens
        w1b = None
        for O in self.opens:
            diff = self.prob(self.preimage(T, O)) - self.prob(self.preimage(X, O))
            if diff != 0:
                w1b = ("open", tuple(_members(O, self.m)), F(diff))
                break
        # open form of 1a
        w1a_open = None
        for O in self.opens:
            p = self.prob(self.preimage(X, O) & ~self.preimage(T, O))
            if p:
                w1a_open = ("open", tuple(_members(O, self.m)), F(p))
                break
        # metric form of 1a
        w1a_metric = None
        if self.metrics is not None:
            for k, t in enumerate(self.metrics):
                dists = [t[X[i]][T[i]] for i in range(self.n)]
                pos = [d for d in dists if d > 0]
                if not pos:
                    continue
                eps = min(pos)
                p = self.outer(_mask(i for i in range(self.n) if dists[i] >= eps))
                if p:
                    w1a_metric = ("pseudometric", k, eps, F(p))
                    break
        # 2 via Borel sets; witness is the indicator with the largest E|1_A(X) - 1_A(X_k)|
        w2 = None
        best = 0
        for A in self.borel:
            pa, pt = self.preimage(X, A), self.preimage(T, A)
            one_sided = self.prob(pa & ~pt)
            if one_sided:
                both = one_sided + self.prob(pt & ~pa)
                if both > best:
                    best = both
                    w2 = ("indicator", tuple(int(A >> e & 1) for e in range(self.m)), F(both))
        metric_form = self.metrics is not None
        w1a = w1a_metric if metric_form else w1a_open
        return ModeVerdict(
            cond_1a=w1a is None,
            cond_1b=w1b is None,
            cond_2=w2 is None,
            form_1a="metric" if metric_form else "open",
            outer_regular=self.outer_regular(X),
            cond_1a_open=w1a_open is None,
            witness_1a=w1a,
            witness_1b=w1b,
            witness_2=w2,
        )


def _engine(inst: FiniteInstance) -> _Engine:
    return _Engine(inst.weights, inst.atoms, inst.m, inst.opens, inst.metrics)


def check_modes(inst: FiniteInstance) -> ModeVerdict:
    """Decide conditions 1a, 1b and 2 for an eventually constant sequence."""
    if inst.tail is None:
        raise UnsupportedInstanceError("sequence has no eventual constant tail")
    return _engine(inst).verdict(inst.X, inst.tail)


def cond2_by_functions(inst: FiniteInstance, values: Sequence[int] = (-1, 0, 1)) -> tuple[bool, tuple | None]:
    """Condition 2 by enumerating every Borel ``f : E -> values`` and computing ``E|f(X) - f(X_k)|``."""
    if inst.tail is None:
        raise UnsupportedInstanceError("sequence has no eventual constant tail")
    atoms = inst.borel_atoms
    label = {}
    for k, b in enumerate(atoms):
        for e in _members(b, inst.m):
            label[e] = k
    for choice in itertools.product(values, repeat=len(atoms)):
        f = [choice[label[e]] for e in range(inst.m)]
        val = sum((w * abs(f[x] - f[t]) for w, x, t in zip(inst.weights, inst.X, inst.tail)), Fraction(0))
        if val:
            return False, (tuple(f), val)
    return True, None


# ---------------------------------------------------------------------------
# the two discrete examples


def example_pointwise_not_law() -> FiniteInstance:
    """Deterministic ``X_k`` converging to ``X`` while the laws do not converge on opens.

    ``E = {x0, x1}`` with the Sierpinski topology ``{0, {x1}, E}``: every
    neighbourhood of ``x0`` contains ``x1``, so ``X_k = x1`` tends to ``x0``.
    """
    return FiniteInstance(weights=(1,), atoms=((0,),), m=2, X=(0,), tail=(1,),
                          opens=((), (1,), (0, 1)), name="pointwise-not-law")


def example_law_not_pointwise() -> FiniteInstance:
    """``Omega = {-1, +1}`` uniform, ``X(w) = w`` and ``X_k = -X``: equal laws, no convergence."""
    return FiniteInstance(weights=(Fraction(1, 2), Fraction(1, 2)), atoms=((0,), (1,)), m=2,
                          X=(0, 1), tail=(1, 0), metrics=(((0, 2), (2, 0)),), name="law-not-pointwise")


# ---------------------------------------------------------------------------
# oracle


def _weight_grid(n: int, den: int):
    for parts in itertools.product(range(den + 1), repeat=n):
        if sum(parts) == den:
            yield tuple(Fraction(p, den) for p in parts)


def _spaces(m: int, metric_values=(0, 1, 2), pair_values=(0, 1)):
    """Topology-only spaces, single pseudometrics and pairs of pseudometrics on ``m`` points."""
    for opens in all_topologies(m):
        yield "topology", opens, None
    singles = pseudometric_tables(m, tuple(metric_values))
    for t in singles:
        yield "gauge", gauge_topology((t,), m), (t,)
    pairs = pseudometric_tables(m, tuple(pair_values))
    for t1, t2 in itertools.combinations(pairs, 2):
        yield "gauge", gauge_topology((t1, t2), m), (t1, t2)


def _measurable_maps(n: int, m: int, atoms, borel_atoms) -> list[tuple]:
    """Every map constant on F-atoms up to Borel atoms of E."""
    per_atom = []
    for a in atoms:
        pts = _members(a, n)
        options = []
        for b in borel_atoms:
            options.extend(itertools.product(_members(b, m), repeat=len(pts)))
        per_atom.append([(pts, o) for o in options])
    out = []
    for combo in itertools.product(*per_atom):
        v = [0] * n
        for pts, o in combo:
            for i, e in zip(pts, o):
                v[i] = e
        out.append(tuple(v))
    return sorted(set(out))


def exhaustive_family(max_omega: int = 3, max_e: int = 3, den: int = 4, max_prefix: int = 2):
    """Structures ``(weights, atoms, m, opens, metrics, kind)`` with their measurable maps.

    Yields ``(structure, maps, n_prefixes)`` where ``n_prefixes`` counts the
    prefixes of length up to ``max_prefix`` built from measurable maps.
    """
    for n in range(1, max_omega + 1):
        for weights in _weight_grid(n, den):
            for part in _partitions(list(range(n))):
                atoms = tuple(sorted(_mask(p) for p in part))
                for m in range(1, max_e + 1):
                    for kind, opens, metrics in _spaces(m):
                        maps = _measurable_maps(n, m, atoms, _atoms_of(opens, m))
                        n_prefixes = sum(len(maps) ** k for k in range(max_prefix + 1))
                        yield (weights, atoms, m, opens, metrics, kind), maps, n_prefixes


def random_family(budget: int, seed: int, max_omega: int = 4, max_e: int = 3, den: int = 12,
                  max_prefix: int = 3):
    """``budget`` random instances with weights on the ``1/den`` grid."""
    rng = np.random.default_rng(seed)
    space_cache = {m: list(_spaces(m, metric_values=(0, 1, 2, 3))) for m in range(1, max_e + 1)}
    for _ in range(budget):
        n = int(rng.integers(1, max_omega + 1))
        m = int(rng.integers(1, max_e + 1))
        cuts = np.sort(rng.integers(0, den + 1, size=n - 1))
        units = np.diff(np.concatenate([[0], cuts, [den]]))
        weights = tuple(Fraction(int(u), den) for u in units)
        labels = rng.integers(0, n, size=n)
        atoms = tuple(sorted({_mask(np.flatnonzero(labels == k)) for k in set(labels.tolist())}))
        kind, opens, metrics = space_cache[m][int(rng.integers(len(space_cache[m])))]
        borel = _atoms_of(opens, m)

        def draw():
            v = [0] * n
            for a in atoms:
                cell = _members(borel[int(rng.integers(len(borel)))], m)
                for i in _members(a, n):
                    v[i] = cell[int(rng.integers(len(cell)))]
            return tuple(v)

        X, tail = draw(), draw()
        prefix = tuple(draw() for _ in range(int(rng.integers(0, max_prefix + 1))))
        yield FiniteInstance(weights, atoms, m, X, tail, prefix,
                             metrics=metrics, opens=None if metrics else opens)


def _batch_verdicts(weights, atoms, m, opens, metrics, maps):
    """Vectorised conditions for every pair ``(X, tail)`` drawn from ``maps``.

    Returns boolean ``(K, K)`` arrays ``c1a, c1b, c2, c1a_open`` indexed by
    ``[X, tail]`` and a length-``K`` array of outer regularity flags for ``X``.
    Weights become integers over a common denominator, so every comparison is exact.
    """
    den = lcm(*(w.denominator for w in weights))
    u = np.array([int(w * den) for w in weights], dtype=np.int64)
    M = np.asarray(maps, dtype=np.int64)  # (K, n)
    n = len(weights)
    borel = np.array(_unions(_atoms_of(opens, m)), dtype=np.int64)
    op = np.array(opens, dtype=np.int64)
    mo = (op[None, :, None] >> M[:, None, :]) & 1  # (K, S_o, n)
    mb = (borel[None, :, None] >> M[:, None, :]) & 1
    Po = mo @ u  # (K, S_o)
    Pb = mb @ u
    c1b = np.all(Po[:, None, :] == Po[None, :, :], axis=2)
    c1a_open = ~np.any(np.einsum("isw,jsw->ijs", mo * u, 1 - mo) > 0, axis=2)
    c2 = ~np.any(np.einsum("isw,jsw->ijs", mb * u, 1 - mb) > 0, axis=2)
    contain = (borel[:, None] & ~op[None, :]) == 0  # A subset O
    big = np.iinfo(np.int64).max
    best = np.where(contain[None], Po[:, None, :], big).min(axis=2)
    outer_regular = np.all(best == Pb, axis=1)
    if metrics is None:
        c1a = c1a_open
    else:
        atom_w = np.array([int(sum(u[i] for i in _members(a, n))) for a in atoms])
        atom_of = np.array([[a >> i & 1 for a in atoms] for i in range(n)], dtype=bool)  # (n, atoms)
        c1a = np.ones_like(c1b)
        for t in metrics:
            D = np.array([[float(v) for v in row] for row in t])[M[:, None, :], M[None, :, :]] > 0
            hit = np.einsum("ijw,wa->ija", D.astype(np.int64), atom_of.astype(np.int64)) > 0
            c1a &= ~np.any(hit & (atom_w > 0), axis=2)
    return c1a, c1b, c2, c1a_open, outer_regular


@dataclass
class OracleReport:
    """Aggregated oracle outcome.

    Instances whose limit law is not outer regular are outside the
    hypotheses for topology-only (open-form) instances; they are counted in
    ``skipped_not_outer_regular`` and not checked. On gauge instances
    ``metric_open_mismatches`` counts disagreements between the metric and
    open-set forms of condition 1a, which should never occur.
    """

    mode: str
    instances: int = 0
    checked: int = 0
    skipped_not_outer_regular: int = 0
    violations: list = field(default_factory=list)
    metric_open_mismatches: int = 0
    triple_counts: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    covered_with_prefixes: int = 0
    skipped_failures: int = 0  # skipped instances where the equivalence does fail

    def _count(self, triple, k: int = 1):
        self.triple_counts[triple] = self.triple_counts.get(triple, 0) + k

    def record(self, digest: str, v: ModeVerdict) -> None:
        self.instances += 1
        if not v.outer_regular and v.form_1a == "open":
            self.skipped_not_outer_regular += 1
            self.skipped_failures += not v.equivalence_holds
            self.rows.append((digest, v.form_1a, *map(int, v.triple), "skipped", ""))
            return
        self.checked += 1
        self._count(v.triple)
        if v.form_1a == "metric" and v.cond_1a != v.cond_1a_open:
            self.metric_open_mismatches += 1
        status = "ok" if v.equivalence_holds else "violation"
        if status == "violation":
            self.violations.append((digest, v))
        wit = v.witness_2 or v.witness_1a or v.witness_1b or ""
        self.rows.append((digest, v.form_1a, *map(int, v.triple), status, str(wit)))

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "instances": self.instances,
            "checked": self.checked,
            "skipped_not_outer_regular": self.skipped_not_outer_regular,
            "violations": len(self.violations),
            "metric_open_mismatches": self.metric_open_mismatches,
            "covered_with_prefixes": self.covered_with_prefixes,
            "skipped_failures": self.skipped_failures,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.mode == "exhaustive":
            w.writerow(["structure", "form_1a", "pairs", "skipped", "n_TTT", "n_TFF", "n_FTF", "n_FFF",
                        "n_other", "violations"])
        else:
            w.writerow(["instance", "form_1a", "cond_1a", "cond_1b", "cond_2", "status", "witness"])
        for row in self.rows:
            w.writerow(row)
        return buf.getvalue()


def _exhaustive(kw) -> OracleReport:
    rep = OracleReport("exhaustive")
    keys = [(True, True, True), (True, False, False), (False, True, False), (False, False, False)]
    for (weights, atoms, m, opens, metrics, kind), maps, n_prefixes in exhaustive_family(**kw):
        c1a, c1b, c2, c1a_open, oreg = _batch_verdicts(weights, atoms, m, opens, metrics, maps)
        K = len(maps)
        form = "metric" if metrics is not None else "open"
        valid = np.ones((K, K), dtype=bool) if metrics is not None else np.repeat(oreg[:, None], K, axis=1)
        rep.instances += K * K
        rep.covered_with_prefixes += K * K * n_prefixes
        n_skip = int((~valid).sum())
        rep.skipped_not_outer_regular += n_skip
        rep.skipped_failures += int((~valid & ((c1a & c1b) != c2)).sum())
        rep.checked += K * K - n_skip
        counts = []
        for key in keys:
            sel = valid & (c1a == key[0]) & (c1b == key[1]) & (c2 == key[2])
            counts.append(int(sel.sum()))
            rep._count(key, counts[-1])
        other = valid & ~np.any(np.stack([(c1a == k[0]) & (c1b == k[1]) & (c2 == k[2]) for k in keys]), axis=0)
        for key in {(bool(a), bool(b), bool(c)) for a, b, c in zip(c1a[other], c1b[other], c2[other])}:
            sel = other & (c1a == key[0]) & (c1b == key[1]) & (c2 == key[2])
            rep._count(key, int(sel.sum()))
        if metrics is not None:
            rep.metric_open_mismatches += int((c1a != c1a_open).sum())
        bad = valid & ((c1a & c1b) != c2)
        for i, j in zip(*np.nonzero(bad)):
            inst = FiniteInstance(weights, atoms, m, maps[i], maps[j], metrics=metrics,
                                  opens=None if metrics else opens)
            rep.violations.append((inst.digest(), check_modes(inst)))
        digest = hashlib.sha1(repr((weights, atoms, m, opens, metrics)).encode()).hexdigest()[:12]
        rep.rows.append((digest, form, K * K, n_skip, *counts, int(other.sum()), int(bad.sum())))
    return rep


def equivalence_oracle(family: str | Iterable[FiniteInstance] = "random", budget: int = 100_000,
                       seed: int = 0, **kw) -> OracleReport:
    """Check ``(1a and 1b) <=> 2`` over a family of instances.

    ``family`` is ``"random"``, ``"exhaustive"`` or an iterable of instances.
    The exhaustive mode evaluates every ``(X, tail)`` pair of each structure
    in one vectorised pass. Prefixes of an eventually constant sequence do
    not enter any limit, so ``covered_with_prefixes`` counts the prefixed
    instances that share each verdict. ``budget`` caps the other modes.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if family == "exhaustive":
        return _exhaustive(kw)
    rep = OracleReport("random" if family == "random" else "custom")
    source = random_family(budget, seed, **kw) if family == "random" else itertools.islice(family, budget)
    for inst in source:
        rep.record(inst.digest(), check_modes(inst))
    return rep
