"""Loading expression matrices and turning them into hypothesis sets.

A matrix file has a header row of sample ids (the first header cell names
the gene-id column) and one row per gene.  Group labels come from one of
three places: an explicit list, a two-column ``sample,label`` file, or an
inline row directly under the header whose first cell is ``group``.

With exactly two distinct labels the first one to appear is group A, unless
the labels are literally ``A`` and ``B``.  Other label sets need the two
groups named explicitly; samples with any other label are ignored.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .distributions import DomainError, LocationFamily
from .fdr_curve import write_csv
from .testing import HypothesisSet


class DataError(ValueError):
    """Input data that cannot be used as given."""


class DataWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExpressionMatrix:
    values: np.ndarray  # genes x samples
    gene_ids: tuple
    group_labels: tuple  # "A" or "B" per sample
    sample_ids: tuple = ()
    dropped_rows: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("expression values must be a genes x samples matrix")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "gene_ids", tuple(self.gene_ids))
        object.__setattr__(self, "group_labels", tuple(self.group_labels))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        if len(self.gene_ids) != values.shape[0] or len(self.group_labels) != values.shape[1]:
            raise DataError(f"dimensions disagree: {values.shape} vs {len(self.gene_ids)} ids, {len(self.group_labels)} labels")
        if set(self.group_labels) - {"A", "B"}:
            raise DataError("group labels must be A or B")
        for g in "AB":
            n = self.group_labels.count(g)
            if n < 2:
                raise DataError(f"group {g} has {n} sample(s); at least 2 are needed")
        if not np.all(np.isfinite(values)):
            raise DataError("expression values must be finite")

    @property
    def mask_a(self) -> np.ndarray:
        return np.array([g == "A" for g in self.group_labels])


@dataclass(frozen=True)
class GeneSummary:
    gene_ids: tuple
    x: np.ndarray
    sigma_hat: np.ndarray
    dropped_genes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "sigma_hat", np.asarray(self.sigma_hat, dtype=float))
        if not (len(self.gene_ids) == self.x.size == self.sigma_hat.size):
            raise DataError("gene_ids, x and sigma_hat must have equal length")
        if np.any(~(self.sigma_hat > 0)):
            raise DataError("sigma_hat must be positive for every retained gene")

    @property
    def m(self) -> int:
        return int(self.x.size)

    def to_csv(self, path) -> None:
        write_csv(path, ["gene_id", "x", "sigma_hat"], [list(self.gene_ids), self.x, self.sigma_hat])

    @classmethod
    def from_csv(cls, path) -> "GeneSummary":
        rows = read_rows(path)
        if not rows or [c.strip() for c in rows[0][:3]] != ["gene_id", "x", "sigma_hat"]:
            raise DataError(f"{path}: expected header gene_id,x,sigma_hat")
        try:
            ids = tuple(r[0] for r in rows[1:])
            x = [float(r[1]) for r in rows[1:]]
            s = [float(r[2]) for r in rows[1:]]
        except (IndexError, ValueError) as exc:
            raise DataError(f"{path}: {exc}") from None
        return cls(ids, x, s)


def _sniff_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def read_rows(path) -> list[list[str]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        first = fh.readline()
        fh.seek(0)
        rows = list(csv.reader(fh, delimiter=_sniff_delimiter(first)))
    return [r for r in rows if r and any(c.strip() for c in r)]


def _read_labels_file(path) -> dict:
    rows = read_rows(path)
    out = {}
    for r in rows:
        if len(r) < 2:
            raise DataError(f"{path}: each line needs a sample id and a label")
        out[r[0].strip()] = r[1].strip()
    # tolerate a header line such as "sample,label"
    out.pop("sample", None)
    out.pop("sample_id", None)
    return out


def _assign_groups(labels: Sequence[str], group_a: Optional[str], group_b: Optional[str]) -> list[Optional[str]]:
    distinct = list(dict.fromkeys(labels))
    if group_a is None and group_b is None:
        if set(distinct) == {"A", "B"}:
            group_a, group_b = "A", "B"
        elif len(distinct) == 2:
            group_a, group_b = distinct
        else:
            raise DataError(f"expected two group labels, found {len(distinct)}: {distinct}; name the two groups explicitly")
    elif group_a is None or group_b is None:
        raise DataError("name both groups or neither")
    return [("A" if g == group_a else "B" if g == group_b else None) for g in labels]


def load_matrix(
    path,
    groups: Optional[Sequence[str]] = None,
    labels_path=None,
    group_a: Optional[str] = None,
    group_b: Optional[str] = None,
) -> ExpressionMatrix:
    """Read a delimited genes x samples file.

    Rows with a non-numeric or missing cell are dropped; the count is kept
    on the result and reported with a ``DataWarning``.
    """
    rows = read_rows(path)
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = [c.strip() for c in rows[0]]
    samples = header[1:]
    if len(samples) < 2 or any(not s for s in samples) or len(set(samples)) != len(samples):
        raise DataError(f"{path}: malformed header; need a gene-id column then unique, non-empty sample ids")
    body = rows[1:]

    inline = None
    if body and body[0][0].strip().lower() == "group":
        inline = [c.strip() for c in body[0][1:]]
        body = body[1:]

    sources = sum(v is not None for v in (groups, labels_path, inline))
    if sources != 1:
        raise DataError("give group labels exactly once: a list, a labels file, or an inline group row")
    if labels_path is not None:
        mapping = _read_labels_file(labels_path)
        missing = [s for s in samples if s not in mapping]
        if missing:
            raise DataError(f"labels file has no entry for sample(s) {missing[:5]}")
        labels = [mapping[s] for s in samples]
    else:
        labels = [str(g).strip() for g in (groups if groups is not None else inline)]
    if len(labels) != len(samples):
        raise DataError(f"{len(labels)} group labels for {len(samples)} samples")

    assigned = _assign_groups(labels, group_a, group_b)
    keep_cols = [j for j, g in enumerate(assigned) if g is not None]

    ids, values, dropped = [], [], 0
    for r in body:
        cells = [c.strip() for c in r[1:]]
        if len(cells) != len(samples):
            dropped += 1
            continue
        try:
            vals = [float(cells[j]) for j in keep_cols]
        except ValueError:
            dropped += 1
            continue
        if not all(math.isfinite(v) for v in vals):
            dropped += 1
            continue
        ids.append(r[0].strip())
        values.append(vals)
    if dropped:
        warnings.warn(f"dropped {dropped} row(s) with missing or non-numeric entries", DataWarning, stacklevel=2)
    if not values:
        raise DataError(f"{path}: no usable gene rows")
    return ExpressionMatrix(
        values=np.array(values),
        gene_ids=ids,
        group_labels=[assigned[j] for j in keep_cols],
        sample_ids=[samples[j] for j in keep_cols],
        dropped_rows=dropped,
    )


def group_summary(matrix: ExpressionMatrix) -> GeneSummary:
    """Per gene: ``x = mean(B) - mean(A)`` and ``sqrt(s2_A/n_A + s2_B/n_B)``."""
    a = matrix.values[:, matrix.mask_a]
    b = matrix.values[:, ~matrix.mask_a]
    x = b.mean(axis=1) - a.mean(axis=1)
    var = a.var(axis=1, ddof=1) / a.shape[1] + b.var(axis=1, ddof=1) / b.shape[1]
    keep = var > 0
    dropped = tuple(g for g, k in zip(matrix.gene_ids, keep) if not k)
    if dropped:
        warnings.warn(f"dropped {len(dropped)} gene(s) with zero variance in both groups", DataWarning, stacklevel=2)
    if not keep.any():
        raise DataError("every gene has zero variance")
    ids = tuple(g for g, k in zip(matrix.gene_ids, keep) if k)
    return GeneSummary(ids, x[keep], np.sqrt(var[keep]), dropped)


def build_hypotheses(summary: GeneSummary, mode: str = "effect-size", negate: bool = False) -> HypothesisSet:
    """Effect-size mode tests ``x`` with per-gene Gaussian scale ``sigma_hat``;
    SNR mode tests ``x / sigma_hat`` against the standard Gaussian.

    ``negate`` flips the sign of every statistic, so large positive
    differences land on the rejection side.
    """
    x = -summary.x if negate else summary.x
    if mode == "effect-size":
        fams = [LocationFamily.scaled_gaussian(float(s)) for s in summary.sigma_hat]
        return HypothesisSet(x, fams, ids=summary.gene_ids)
    if mode == "snr":
        return HypothesisSet(x / summary.sigma_hat, LocationFamily.gaussian(), ids=summary.gene_ids)
    raise DomainError(f"unknown mode {mode!r}; expected 'effect-size' or 'snr'")
