"""Location families: CDFs, quantiles and interval suprema of CDF ratios.

A location family is described by a base distribution function ``F``; the
member with location ``theta`` has distribution function ``F(x - theta)``.
Four kinds are supported: the standard Gaussian, a Gaussian with a fixed
scale, the logistic distribution and a tabulated distribution read from a
``x,probability`` table.

All functions accept scalars or numpy arrays and return the same shape.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import special

from ._golden import golden_section_max

ArrayLike = Union[float, np.ndarray]


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class FamilyKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    SCALED_GAUSSIAN = "scaled-gaussian"
    LOGISTIC = "logistic"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class LocationFamily:
    """Base distribution ``F`` of a location family.

    Use the constructors :meth:`gaussian`, :meth:`scaled_gaussian`,
    :meth:`logistic`, :meth:`tabulated` or :meth:`from_csv` rather than
    building instances directly.  Instances are immutable and hashable, so
    per-hypothesis family lists can be deduplicated cheaply.
    """

    kind: FamilyKind
    scale: float = 1.0
    knots_x: tuple[float, ...] = ()
    knots_p: tuple[float, ...] = ()
    declared_monotone_ratio: bool = False

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise DomainError(f"scale must be positive and finite, got {self.scale!r}")
        if self.kind is FamilyKind.TABULATED:
            _check_knots(self.knots_x, self.knots_p)

    # -- constructors -------------------------------------------------------

    @classmethod
    def gaussian(cls) -> "LocationFamily":
        return cls(FamilyKind.GAUSSIAN)

    @classmethod
    def scaled_gaussian(cls, scale: float) -> "LocationFamily":
        return cls(FamilyKind.SCALED_GAUSSIAN, scale=float(scale))

    @classmethod
    def logistic(cls, scale: float = 1.0) -> "LocationFamily":
        return cls(FamilyKind.LOGISTIC, scale=float(scale))

    @classmethod
    def tabulated(
        cls,
        x: Sequence[float],
        p: Sequence[float],
        monotone_ratio: bool = False,
    ) -> "LocationFamily":
        """Tabulated CDF through the knots ``(x[k], p[k])``.

        Between knots the CDF is linear.  Outside the knot range it continues
        with exponential tails whose density matches the adjacent segment,
        so the CDF stays continuous and strictly increasing on the real line.
        ``monotone_ratio`` declares that the ratio property holds; it is not
        checked.
        """
        return cls(
            FamilyKind.TABULATED,
            knots_x=tuple(float(v) for v in x),
            knots_p=tuple(float(v) for v in p),
            declared_monotone_ratio=bool(monotone_ratio),
        )

    @classmethod
    def from_csv(cls, path, monotone_ratio: bool = False) -> "LocationFamily":
        """Read a tabulated family from a two-column ``x,probability`` CSV."""
        path = Path(path)
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise DomainError(f"{path}: empty table")
        header = [h.strip().lower() for h in rows[0]]
        if header[:2] != ["x", "probability"]:
            raise DomainError(f"{path}: header must be 'x,probability', got {rows[0]!r}")
        xs, ps = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                xs.append(float(row[0]))
                ps.append(float(row[1]))
            except (ValueError, IndexError):
                raise DomainError(f"{path}:{lineno}: malformed row {row!r}") from None
        return cls.tabulated(xs, ps, monotone_ratio=monotone_ratio)

    # -- evaluation ---------------------------------------------------------

    @property
    def has_monotone_ratio(self) -> bool:
        if self.kind is FamilyKind.TABULATED:
            return self.declared_monotone_ratio
        return True

    def cdf(self, x: ArrayLike) -> ArrayLike:
        x = np.asarray(x, dtype=float)
        if self.kind is FamilyKind.TABULATED:
            out = _tab_cdf(self, x)
        elif self.kind is FamilyKind.LOGISTIC:
            out = special.expit(x / self.scale)
        else:
            out = special.ndtr(x / self.scale)
        return out[()] if out.ndim == 0 else out

    def logcdf(self, x: ArrayLike) -> ArrayLike:
        x = np.asarray(x, dtype=float)
        if self.kind is FamilyKind.TABULATED:
            out = _tab_logcdf(self, x)
        elif self.kind is FamilyKind.LOGISTIC:
            out = -np.logaddexp(0.0, -x / self.scale)
        else:
            out = special.log_ndtr(x / self.scale)
        return out[()] if out.ndim == 0 else out

    def quantile(self, p: ArrayLike) -> ArrayLike:
        p = np.asarray(p, dtype=float)
        if np.any(np.isnan(p)) or np.any(p < 0) or np.any(p > 1):
            raise DomainError("quantile requires probabilities in [0, 1]")
        if self.kind is FamilyKind.TABULATED:
            out = _tab_quantile(self, p)
        elif self.kind is FamilyKind.LOGISTIC:
            with np.errstate(divide="ignore"):
                out = self.scale * special.logit(p)
        else:
            out = self.scale * special.ndtri(p)
        return out[()] if out.ndim == 0 else out

    def left_tail_ratio(self, shift: float) -> float:
        """Limit of ``F(y + shift) / F(y)`` as ``y -> -inf``."""
        if shift == 0:
            return 1.0
        if self.kind is FamilyKind.LOGISTIC:
            return math.exp(shift / self.scale)
        if self.kind is FamilyKind.TABULATED:
            lam = _tab_tail_rates(self)[0]
            if lam is None:
                # F vanishes below the first knot
                return math.inf if shift > 0 else 0.0
            return math.exp(lam * shift)
        # Gaussian tails decay faster than any exponential
        return math.inf if shift > 0 else 0.0

    def describe(self) -> str:
        if self.kind is FamilyKind.GAUSSIAN:
            return "gaussian"
        if self.kind is FamilyKind.TABULATED:
            return f"tabulated[{len(self.knots_x)} knots]"
        return f"{self.kind.value}:{self.scale:.12g}"


# -- tabulated helpers -------------------------------------------------------


def _check_knots(xs, ps):
    if len(xs) != len(ps) or len(xs) < 2:
        raise DomainError("a tabulated family needs at least two (x, p) knots")
    xa, pa = np.asarray(xs), np.asarray(ps)
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(pa))):
        raise DomainError("tabulated knots must be finite")
    if np.any(np.diff(xa) <= 0) or np.any(np.diff(pa) <= 0):
        raise DomainError("tabulated knots must be strictly increasing in x and p")
    if pa[0] < 0 or pa[-1] > 1:
        raise DomainError("tabulated probabilities must lie in [0, 1]")


def _tab_tail_rates(fam: LocationFamily):
    xs, ps = fam.knots_x, fam.knots_p
    left = right = None
    if ps[0] > 0:
        left = (ps[1] - ps[0]) / (xs[1] - xs[0]) / ps[0]
    if ps[-1] < 1:
        right = (ps[-1] - ps[-2]) / (xs[-1] - xs[-2]) / (1 - ps[-1])
    return left, right


def _tab_cdf(fam, x):
    xs, ps = np.asarray(fam.knots_x), np.asarray(fam.knots_p)
    lam_l, lam_r = _tab_tail_rates(fam)
    out = np.interp(x, xs, ps)
    lo, hi = x < xs[0], x > xs[-1]
    with np.errstate(over="ignore", under="ignore"):
        out = np.where(lo, 0.0 if lam_l is None else ps[0] * np.exp(lam_l * (x - xs[0])), out)
        out = np.where(hi, 1.0 if lam_r is None else 1 - (1 - ps[-1]) * np.exp(-lam_r * (x - xs[-1])), out)
    return np.asarray(out, dtype=float)


def _tab_logcdf(fam, x):
    xs, ps = np.asarray(fam.knots_x), np.asarray(fam.knots_p)
    lam_l, _ = _tab_tail_rates(fam)
    with np.errstate(divide="ignore"):
        out = np.log(_tab_cdf(fam, x))
        if lam_l is not None:
            out = np.where(x < xs[0], math.log(ps[0]) + lam_l * (x - xs[0]), out)
    return np.asarray(out, dtype=float)


def _tab_quantile(fam, p):
    xs, ps = np.asarray(fam.knots_x), np.asarray(fam.knots_p)
    lam_l, lam_r = _tab_tail_rates(fam)
    out = np.interp(p, ps, xs)
    with np.errstate(divide="ignore", invalid="ignore"):
        if lam_l is not None:
            out = np.where(p < ps[0], xs[0] + np.log(p / ps[0]) / lam_l, out)
        else:
            out = np.where(p <= 0, -np.inf, out)
        if lam_r is not None:
            out = np.where(p > ps[-1], xs[-1] - np.log((1 - p) / (1 - ps[-1])) / lam_r, out)
        else:
            out = np.where(p >= 1, np.inf, out)
    out = np.where(p <= 0, -np.inf, np.where(p >= 1, np.inf, out))
    return np.asarray(out, dtype=float)


# -- module-level operations -------------------------------------------------


def cdf(family: LocationFamily, x: ArrayLike) -> ArrayLike:
    return family.cdf(x)


def quantile(family: LocationFamily, p: ArrayLike) -> ArrayLike:
    return family.quantile(p)


def has_monotone_ratio(family: LocationFamily) -> bool:
    return family.has_monotone_ratio


def _ratio(family: LocationFamily, y, shift):
    # F(y + shift) / F(y), through log-CDFs so deep tails do not underflow
    with np.errstate(invalid="ignore", over="ignore"):
        return np.exp(family.logcdf(np.asarray(y) + shift) - family.logcdf(y))


def _endpoint_ratio(family, y, shift):
    if y == math.inf:
        return 1.0
    if y == -math.inf:
        return family.left_tail_ratio(shift)
    return float(_ratio(family, y, shift))


def sup_ratio(
    family: LocationFamily,
    theta: float,
    theta_ref: float,
    a: float,
    b: float,
    method: str = "auto",
) -> float:
    """Supremum of ``F(x - theta) / F(x - theta_ref)`` over ``a <= x - theta_ref <= b``.

    With the monotone ratio property the supremum sits at an endpoint, so
    ``method="auto"`` evaluates the two endpoints (infinite endpoints as
    limits).  Otherwise, or with ``method="scan"``, a dense scan of the
    interval is refined by golden-section search.
    """
    if math.isnan(a) or math.isnan(b) or a > b:
        raise DomainError(f"need a <= b, got a={a!r}, b={b!r}")
    if method not in ("auto", "endpoint", "scan"):
        raise ValueError(f"unknown method {method!r}")
    shift = theta_ref - theta
    if shift == 0:
        return 1.0
    if method == "endpoint" or (method == "auto" and family.has_monotone_ratio):
        return max(_endpoint_ratio(family, a, shift), _endpoint_ratio(family, b, shift))
    return _scan_sup_ratio(family, shift, a, b)


def _scan_sup_ratio(family, shift, a, b, n=512):
    best = max(_endpoint_ratio(family, a, shift), _endpoint_ratio(family, b, shift))
    # finite stand-ins for infinite endpoints, far into the tails
    lo = a if math.isfinite(a) else float(family.quantile(1e-300)) - abs(shift)
    hi = b if math.isfinite(b) else float(family.quantile(1 - 1e-16)) + abs(shift)
    if not lo < hi:
        return best
    half = n // 2
    # log-spaced towards both ends, uniform through the middle
    width = hi - lo
    offs = np.geomspace(width * 1e-9, width / 2, half)
    grid = np.unique(np.concatenate([[lo, hi], lo + offs, hi - offs, np.linspace(lo, hi, n)]))
    vals = _ratio(family, grid, shift)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    k = int(np.argmax(vals))
    best = max(best, float(vals[k]))
    left, right = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if right > left:
        _, fmax = golden_section_max(lambda y: float(_ratio(family, y, shift)), left, right, rtol=1e-9)
        best = max(best, fmax)
    return best


class FamilyBatch:
    """Shared or per-hypothesis families, evaluated along the last axis.

    ``cdf(x)`` with ``x`` of shape ``(..., m)`` applies ``F_i`` to
    ``x[..., i]``.  Gaussian and logistic members are grouped and evaluated
    with one vectorized call per kind.
    """

    def __init__(self, families, m: int | None = None):
        if isinstance(families, LocationFamily):
            self.shared = families
            self.members = None
            self.m = m
        else:
            members = tuple(families)
            if not members or not all(isinstance(f, LocationFamily) for f in members):
                raise DomainError("families must be a LocationFamily or a nonempty sequence of them")
            if m is not None and len(members) != m:
                raise DomainError(f"expected {m} per-hypothesis families, got {len(members)}")
            if len(set(members)) == 1:
                self.shared, self.members = members[0], None
            else:
                self.shared, self.members = None, members
            self.m = len(members)
        self._groups = None if self.members is None else _group_members(self.members)

    @property
    def is_shared(self) -> bool:
        return self.shared is not None

    @property
    def has_monotone_ratio(self) -> bool:
        if self.shared is not None:
            return self.shared.has_monotone_ratio
        return all(f.has_monotone_ratio for f in set(self.members))

    def distinct(self) -> list[LocationFamily]:
        if self.shared is not None:
            return [self.shared]
        return list(dict.fromkeys(self.members))

    def _apply(self, name, arr):
        if self.shared is not None:
            return np.asarray(getattr(self.shared, name)(arr), dtype=float)
        arr = np.broadcast_to(arr, np.broadcast_shapes(np.shape(arr), (self.m,)))
        out = np.empty(arr.shape, dtype=float)
        for kind, idx, payload in self._groups:
            sub = arr[..., idx]
            if kind == "tabulated":
                out[..., idx] = getattr(payload, name)(sub)
            elif name == "quantile":
                fn = special.logit if kind == "logistic" else special.ndtri
                with np.errstate(divide="ignore"):
                    out[..., idx] = payload * fn(sub)
            elif kind == "logistic":
                out[..., idx] = special.expit(sub / payload)
            else:
                out[..., idx] = special.ndtr(sub / payload)
        return out

    def cdf(self, x) -> np.ndarray:
        return self._apply("cdf", np.asarray(x, dtype=float))

    def quantile(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if np.any(np.isnan(p)) or np.any(p < 0) or np.any(p > 1):
            raise DomainError("quantile requires probabilities in [0, 1]")
        return self._apply("quantile", p)


def _group_members(members):
    groups = []
    by_kind: dict[str, list[int]] = {"gaussian": [], "logistic": []}
    tabulated: dict[LocationFamily, list[int]] = {}
    for i, fam in enumerate(members):
        if fam.kind is FamilyKind.TABULATED:
            tabulated.setdefault(fam, []).append(i)
        elif fam.kind is FamilyKind.LOGISTIC:
            by_kind["logistic"].append(i)
        else:
            by_kind["gaussian"].append(i)
    for kind, idx in by_kind.items():
        if idx:
            idx = np.asarray(idx)
            scales = np.asarray([members[i].scale for i in idx])
            groups.append((kind, idx, scales))
    for fam, idx in tabulated.items():
        groups.append(("tabulated", np.asarray(idx), fam))
    return groups
