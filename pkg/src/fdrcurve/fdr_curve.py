"""Target FDR curves and the transformed curve they actually control.

A target curve is a non-increasing, right-continuous step function built
from constraints ``(theta_j, q_j)``: it equals 1 left of the first jump and
``min{q_j : theta_j <= theta}`` elsewhere.

For a target curve ``q`` and families ``F_1..F_m`` the transformed curve is

    q*(theta) = inf_{theta'} max_i sup_{a_i <= x - theta' <= b_i}
                q(theta') F_i(x - theta) / F_i(x - theta'),

with ``a_i = F_i^{-1}(q(theta')/m)`` and ``b_i = F_i^{-1}(q(theta'))``.
For a step curve the infimum over ``theta'`` is attained at a jump point:
on each constant piece the inner supremum is non-decreasing in ``theta'``,
and the level-1 region contributes at least 1.  With the monotone ratio
property the inner supremum is attained at ``x - theta' = a_i`` or ``b_i``,
which gives the closed form used throughout this module:

    value_j(theta) = max_i max(m F_i(theta_j + a_i - theta), F_i(theta_j + b_i - theta)).
"""

from __future__ import annotations

import csv
import enum
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .distributions import DomainError, FamilyBatch, LocationFamily, sup_ratio

#: Absolute slack on levels when deciding whether q* reaches or exceeds q.
TOUCH_TOL = 1e-9

Families = Union[LocationFamily, Sequence[LocationFamily], FamilyBatch]


class UnsupportedFamilyError(DomainError):
    """The operation needs the monotone ratio property."""


class DegenerateCurveError(DomainError):
    """The curve has no constraint with level below 1."""


@dataclass(frozen=True, order=True)
class Constraint:
    theta: float
    q: float

    def __post_init__(self):
        theta, q = float(self.theta), float(self.q)
        if not math.isfinite(theta):
            raise DomainError(f"constraint location must be finite, got {self.theta!r}")
        if not (0 < q <= 1):
            raise DomainError(f"constraint level must lie in (0, 1], got {self.q!r}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "q", q)


def _as_constraint(c) -> Constraint:
    if isinstance(c, Constraint):
        return c
    if isinstance(c, dict):
        return Constraint(c["theta"], c["q"])
    theta, q = c
    return Constraint(theta, q)


class TargetCurve:
    """Normalized step curve; build it with :func:`curve_from_constraints`."""

    def __init__(self, constraints: Sequence[Constraint]):
        self.constraints = tuple(constraints)
        self.thetas = np.array([c.theta for c in self.constraints], dtype=float)
        self.levels = np.array([c.q for c in self.constraints], dtype=float)

    @classmethod
    def bh(cls, q: float, theta: float = 0.0) -> "TargetCurve":
        """The one-jump curve ``q`` on ``[theta, inf)`` and 1 below it."""
        return curve_from_constraints([Constraint(theta, q)])

    def __len__(self):
        return len(self.constraints)

    def __eq__(self, other):
        return isinstance(other, TargetCurve) and self.constraints == other.constraints

    def __hash__(self):
        return hash(self.constraints)

    def __repr__(self):
        inner = ", ".join(f"({c.theta:g}, {c.q:g})" for c in self.constraints)
        return f"TargetCurve([{inner}])"

    @property
    def is_degenerate(self) -> bool:
        return not self.constraints

    @property
    def lower_edge(self) -> float:
        """First jump; the curve equals 1 strictly left of it."""
        return float(self.thetas[0]) if self.constraints else math.inf

    def evaluate(self, theta):
        theta = np.asarray(theta, dtype=float)
        idx = np.searchsorted(self.thetas, theta, side="right")
        padded = np.concatenate([[1.0], self.levels])
        out = padded[idx]
        return out[()] if out.ndim == 0 else out

    __call__ = evaluate

    def to_dict(self) -> dict:
        return {"constraints": [{"theta": c.theta, "q": c.q} for c in self.constraints]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TargetCurve":
        data = json.loads(text)
        try:
            items = data["constraints"]
        except (KeyError, TypeError):
            raise DomainError("curve JSON must be an object with a 'constraints' list") from None
        return curve_from_constraints([_as_constraint(c) for c in items])

    def default_grid(self, n: int = 41, margin: float = 1.5) -> np.ndarray:
        if self.is_degenerate:
            return np.linspace(-margin, margin, n)
        return np.linspace(self.thetas[0] - margin, self.thetas[-1] + margin, n)


def curve_from_constraints(constraints: Iterable) -> TargetCurve:
    """Normalize constraints into a step curve.

    Constraints are sorted by location; at a repeated location the smallest
    level wins; a constraint whose level does not fall below the curve already
    in force to its left (including the implied level 1) is dropped.
    """
    items = [_as_constraint(c) for c in constraints]
    if not items:
        raise DomainError("at least one constraint is required")
    kept: list[Constraint] = []
    current = 1.0
    for c in sorted(items):
        # sorted() puts the smallest level first at a repeated location
        if c.q < current:
            kept.append(c)
            current = c.q
    return TargetCurve(kept)


# -- q* evaluation -----------------------------------------------------------


def _batch(families: Families, m: int) -> FamilyBatch:
    if isinstance(families, FamilyBatch):
        return families
    return FamilyBatch(families, None if isinstance(families, LocationFamily) else m)


def _single_values(t, level, batch: FamilyBatch, m, theta):
    """Uncapped per-constraint value at each entry of the 1-d array ``theta``."""
    if level >= 1:
        return np.full(theta.shape, np.inf)
    if batch.has_monotone_ratio:
        if batch.is_shared:
            fam = batch.shared
            a, b = fam.quantile(level / m), fam.quantile(level)
            return np.maximum(m * fam.cdf(t + a - theta), fam.cdf(t + b - theta))
        a = batch.quantile(np.full(batch.m, level / m))
        b = batch.quantile(np.full(batch.m, level))
        out = np.empty(theta.shape)
        step = max(1, 2_000_000 // batch.m)
        for s in range(0, theta.size, step):
            th = theta[s:s + step, None]
            va = batch.cdf(t + a - th)
            vb = batch.cdf(t + b - th)
            out[s:s + step] = np.maximum(m * va.max(axis=1), vb.max(axis=1))
        return out
    out = np.zeros(theta.shape)
    for fam in batch.distinct():
        a, b = float(fam.quantile(level / m)), float(fam.quantile(level))
        vals = np.array([level * sup_ratio(fam, th, t, a, b) for th in theta])
        out = np.maximum(out, vals)
    return out


def constraint_values(curve, families: Families, m: int, theta) -> np.ndarray:
    """Per-constraint values, capped at 1, shape ``(len(curve),) + shape(theta)``."""
    curve = curve if isinstance(curve, TargetCurve) else curve_from_constraints(curve)
    theta = np.asarray(theta, dtype=float)
    flat = theta.ravel()
    batch = _batch(families, m)
    rows = [np.minimum(1.0, _single_values(c.theta, c.q, batch, m, flat)) for c in curve.constraints]
    if not rows:
        return np.empty((0,) + theta.shape)
    return np.stack(rows).reshape((len(rows),) + theta.shape)


def q_star_single(t: float, level: float, family: Families, m: int, theta):
    """Transformed curve of the one-jump curve at ``t`` with the given level."""
    if not (0 < level <= 1):
        raise DomainError(f"level must lie in (0, 1], got {level!r}")
    if m < 1:
        raise DomainError(f"m must be a positive integer, got {m!r}")
    theta = np.asarray(theta, dtype=float)
    if level >= 1:
        out = np.ones(theta.shape)
    else:
        vals = _single_values(float(t), float(level), _batch(family, m), m, theta.ravel())
        out = np.minimum(1.0, vals).reshape(theta.shape)
    return out[()] if out.ndim == 0 else out


def _subset_indices(curve: TargetCurve, subset) -> list[int]:
    if subset is None:
        return list(range(len(curve)))
    index = {c.theta: k for k, c in enumerate(curve.constraints)}
    out = []
    for s in subset:
        loc = s.theta if isinstance(s, Constraint) else float(s)
        if loc not in index:
            raise DomainError(f"subset location {loc!r} is not a jump point of the curve")
        out.append(index[loc])
    return sorted(set(out))


def q_star(curve, families: Families, m: int, theta, subset=None):
    """Evaluate the transformed curve, optionally restricting the infimum to ``subset``.

    ``subset`` holds jump locations (or :class:`Constraint` objects) of
    ``curve``; by default every jump point is used.
    """
    curve = curve if isinstance(curve, TargetCurve) else curve_from_constraints(curve)
    if m < 1:
        raise DomainError(f"m must be a positive integer, got {m!r}")
    idx = _subset_indices(curve, subset)
    theta = np.asarray(theta, dtype=float)
    if not idx:
        out = np.ones(theta.shape)
    else:
        sub = TargetCurve([curve.constraints[k] for k in idx])
        out = constraint_values(sub, families, m, theta).min(axis=0)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class QStarCurve:
    source: TargetCurve
    families: object
    m: int
    active_subset: Optional[tuple] = None

    def evaluate(self, theta):
        return q_star(self.source, self.families, self.m, theta, self.active_subset)

    __call__ = evaluate

    def as_step_curve(self) -> TargetCurve:
        """q* sampled at the jump points of the source curve, as a new step curve."""
        levels = np.atleast_1d(self.evaluate(self.source.thetas))
        return curve_from_constraints(
            Constraint(t, min(1.0, float(v))) for t, v in zip(self.source.thetas, levels)
        )


@dataclass(frozen=True)
class CurveSamples:
    """Curve values on a grid of locations; optional columns may be ``None``."""

    theta: np.ndarray
    q: np.ndarray
    q_star: np.ndarray
    fdp: Optional[np.ndarray] = None
    fdr: Optional[np.ndarray] = None

    def to_csv(self, path) -> None:
        write_csv(path, ["theta", "q", "q_star"], [self.theta, self.q, self.q_star])


def sample_curve(curve, families: Families, m: int, grid, subset=None) -> CurveSamples:
    grid = np.asarray(grid, dtype=float)
    return CurveSamples(grid, np.asarray(curve.evaluate(grid)), np.asarray(q_star(curve, families, m, grid, subset)))


def fmt(v) -> str:
    """12 significant digits, the fixed numeric format of every export."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return format(v, ".12g")


def write_csv(path, header: Sequence[str], columns: Sequence) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [list(c) for c in columns]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


# -- dominance, touching point, constraint selection -------------------------


class Dominance(str, enum.Enum):
    STRICT = "strictly-dominated"
    WEAK = "weakly-dominated"
    NONE = "not-dominated"

    @property
    def weak(self) -> bool:
        """True when the first constraint is implied by the second (strictly or not)."""
        return self is not Dominance.NONE


def _require_monotone(family):
    if not isinstance(family, LocationFamily):
        raise UnsupportedFamilyError("a single shared LocationFamily is required")
    if not family.has_monotone_ratio:
        raise UnsupportedFamilyError(f"{family.describe()} lacks the monotone ratio property")


def dominates(c1, c2, family: LocationFamily, m: int) -> Dominance:
    """Whether ``c1`` is implied by ``c2``, i.e. the one-jump transform at ``c2`` controls ``c1``.

    Uses the shift characterization: ``c1`` is weakly dominated iff
    ``F^-1(q1) + theta1 >= F^-1(q2) + theta2`` and the same holds with
    ``q/m`` in place of ``q``; strictly if either inequality is strict.
    """
    _require_monotone(family)
    c1, c2 = _as_constraint(c1), _as_constraint(c2)
    for c in (c1, c2):
        if not c.q < 1:
            raise DomainError("dominance needs levels strictly below 1")
    hi1 = float(family.quantile(c1.q)) + c1.theta
    hi2 = float(family.quantile(c2.q)) + c2.theta
    lo1 = float(family.quantile(c1.q / m)) + c1.theta
    lo2 = float(family.quantile(c2.q / m)) + c2.theta
    if hi1 >= hi2 and lo1 >= lo2:
        return Dominance.STRICT if (hi1 > hi2 or lo1 > lo2) else Dominance.WEAK
    return Dominance.NONE


def touching_point(curve, family: LocationFamily, m: int) -> float:
    """Jump point minimizing ``2 theta + F^-1(q(theta)/m) + F^-1(q(theta))``.

    The transformed curve equals the target there.  Ties go to the smallest
    location.
    """
    curve = curve if isinstance(curve, TargetCurve) else curve_from_constraints(curve)
    _require_monotone(family)
    if curve.is_degenerate:
        raise DegenerateCurveError("every level is 1; there is nothing to touch")
    score = 2 * curve.thetas + family.quantile(curve.levels / m) + family.quantile(curve.levels)
    return float(curve.thetas[int(np.argmin(score))])


def _values_at_jumps(curve: TargetCurve, families, m) -> np.ndarray:
    # V[k, j]: value of constraint k at the location of constraint j
    return constraint_values(curve, families, m, curve.thetas)


def select_constraints_greedy(constraints, families: Families, m: int) -> list[Constraint]:
    """Subset of constraints whose transform keeps every constraint satisfied.

    Constraints are visited in increasing location; one is added only when the
    transform of the subset built so far exceeds its level.
    """
    curve = constraints if isinstance(constraints, TargetCurve) else curve_from_constraints(constraints)
    if curve.is_degenerate:
        return []
    V = _values_at_jumps(curve, families, m)
    active = [0]
    for j in range(1, len(curve)):
        if V[active, j].min() > curve.levels[j] + TOUCH_TOL:
            active.append(j)
    return [curve.constraints[k] for k in active]


MAX_EXHAUSTIVE = 20


def select_constraints_minimal(constraints, families: Families, m: int) -> list[Constraint]:
    """Smallest subset whose transform satisfies every constraint.

    Exhaustive over subsets in order of size, then lexicographically by
    location, so at most :data:`MAX_EXHAUSTIVE` constraints are accepted.
    """
    curve = constraints if isinstance(constraints, TargetCurve) else curve_from_constraints(constraints)
    K = len(curve)
    if K > MAX_EXHAUSTIVE:
        raise DomainError(
            f"{K} constraints exceed the exhaustive limit of {MAX_EXHAUSTIVE}; "
            "use select_constraints_greedy instead"
        )
    if K == 0:
        return []
    V = _values_at_jumps(curve, families, m)
    ok = V <= curve.levels[None, :] + TOUCH_TOL
    # bitmask of constraints that control location j
    controls = [sum(1 << k for k in range(K) if ok[k, j]) for j in range(K)]
    for size in range(1, K + 1):
        for combo in itertools.combinations(range(K), size):
            mask = sum(1 << k for k in combo)
            if all(c & mask for c in controls):
                return [curve.constraints[k] for k in combo]
    raise AssertionError("the full constraint set always controls itself")
