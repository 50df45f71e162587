"""Respondent records, list designs, validation and per-cell summaries.

Cells are indexed by ``(z, y)``: treatment-list indicator ``z`` and direct
answer ``y``. Every count-based statistic is derived from exact integer
sufficient statistics (count, sum, sum of squares), so summaries do not
depend on record order and two summaries built from the same integers agree
bit for bit.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AllRecordsExcluded, DesignInvalid

# exclusion reasons
ATTENTION = "failed attention check"
MISSING = "missing field"
INVALID = "invalid value"
OUT_OF_RANGE = "count exceeds list length"
DUPLICATE = "duplicate id"

CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True, slots=True)
class Respondent:
    id: str
    y_direct: int
    z_treat: int
    v_count: int
    study: str | None = None


@dataclass(frozen=True, slots=True)
class RawRecord:
    """One parsed CSV row; ``None`` marks a blank or NA cell."""

    respondent_id: str | None
    y_direct: int | None
    z_treat: int | None
    v_count: int | None
    question_id: str = "q1"
    study: str | None = None
    attention_failed: bool = False
    row: int | None = None


@dataclass(frozen=True, slots=True)
class ListDesign:
    j_items: int
    alpha: float = 0.05

    def __post_init__(self):
        if isinstance(self.j_items, bool) or int(self.j_items) != self.j_items or self.j_items < 1:
            raise DesignInvalid(f"list length must be a positive integer, got {self.j_items!r}")
        if not (0.0 < self.alpha < 1.0):
            raise DesignInvalid(f"alpha must lie in (0, 1), got {self.alpha!r}")


@dataclass(frozen=True)
class Dataset:
    records: tuple[Respondent, ...]
    design: ListDesign
    question_id: str = "q1"
    exclusions: Mapping[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_excluded(self) -> int:
        return sum(self.exclusions.values())


def validate(
    records: Iterable[RawRecord | Respondent],
    design: ListDesign,
    question_id: str | None = None,
) -> Dataset:
    """Listwise deletion against ``design`` with per-reason accounting.

    Records are kept only if complete, binary where required, and within
    ``0 <= v_count <= j_items + z_treat``. Impossible counts are excluded,
    never clamped. A repeated respondent id is excluded after its first
    retained occurrence.
    """
    if not isinstance(design, ListDesign):
        raise DesignInvalid("design must be a ListDesign")
    kept: list[Respondent] = []
    reasons: Counter[str] = Counter()
    seen: set[str] = set()
    qid = question_id
    for i, rec in enumerate(records):
        if isinstance(rec, Respondent):
            rec = RawRecord(rec.id, rec.y_direct, rec.z_treat, rec.v_count, study=rec.study)
        if qid is None:
            qid = rec.question_id
        if rec.attention_failed:
            reasons[ATTENTION] += 1
            continue
        y, z, v = rec.y_direct, rec.z_treat, rec.v_count
        if y is None or z is None or v is None:
            reasons[MISSING] += 1
            continue
        if y not in (0, 1) or z not in (0, 1) or v < 0 or int(v) != v:
            reasons[INVALID] += 1
            continue
        if v > design.j_items + z:
            reasons[OUT_OF_RANGE] += 1
            continue
        rid = rec.respondent_id if rec.respondent_id is not None else f"row{rec.row if rec.row is not None else i}"
        if rid in seen:
            reasons[DUPLICATE] += 1
            continue
        seen.add(rid)
        kept.append(Respondent(rid, int(y), int(z), int(v), rec.study))
    if not kept:
        raise AllRecordsExcluded(f"no usable records (excluded: {dict(reasons) or 'input was empty'})")
    return Dataset(tuple(kept), design, qid or "q1", dict(reasons))


@dataclass(frozen=True, slots=True)
class Cell:
    """Integer sufficient statistics of the item count within one cell."""

    count: int = 0
    total: int = 0
    total_sq: int = 0

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else math.nan

    @property
    def variance(self) -> float:
        """Sample variance with n - 1 denominator; NaN below two records."""
        n = self.count
        if n < 2:
            return math.nan
        # exact integer numerator, one rounding
        return (n * self.total_sq - self.total * self.total) / (n * (n - 1))

    def __add__(self, other: "Cell") -> "Cell":
        return Cell(self.count + other.count, self.total + other.total, self.total_sq + other.total_sq)


@dataclass(frozen=True)
class CellSummary:
    cells: Mapping[tuple[int, int], Cell]

    def cell(self, z: int, y: int) -> Cell:
        return self.cells[(z, y)]

    def arm(self, z: int) -> Cell:
        """Item-count statistics for treatment arm ``z`` pooled over the direct answer."""
        return self.cells[(z, 0)] + self.cells[(z, 1)]

    @property
    def n(self) -> int:
        return sum(c.count for c in self.cells.values())

    @property
    def m(self) -> int:
        return self.arm(1).count

    @property
    def n_yes(self) -> int:
        return self.cells[(0, 1)].count + self.cells[(1, 1)].count

    @property
    def y_bar(self) -> float:
        return self.n_yes / self.n

    @property
    def gamma_hat(self) -> float:
        return self.m / self.n

    def y_arm_mean(self, z: int) -> float:
        arm = self.arm(z).count
        return self.cells[(z, 1)].count / arm if arm else math.nan

    def y_arm_variance(self, z: int) -> float:
        """Sample variance of the binary direct answer within arm ``z``."""
        k = self.cells[(z, 1)].count
        n = self.arm(z).count
        if n < 2:
            return math.nan
        return k * (n - k) / (n * (n - 1))

    @property
    def empty_cells(self) -> tuple[tuple[int, int], ...]:
        return tuple(k for k in CELLS if self.cells[k].count == 0)

    @property
    def variance_undefined_cells(self) -> tuple[tuple[int, int], ...]:
        return tuple(k for k in CELLS if self.cells[k].count < 2)

    @classmethod
    def from_cells(cls, cells: Mapping[tuple[int, int], Cell]) -> "CellSummary":
        return cls({k: cells.get(k, Cell()) for k in CELLS})


def summarize_cells(dataset: Dataset | Sequence[Respondent]) -> CellSummary:
    records = dataset.records if isinstance(dataset, Dataset) else dataset
    acc = {k: [0, 0, 0] for k in CELLS}
    for r in records:
        a = acc[(r.z_treat, r.y_direct)]
        a[0] += 1
        a[1] += r.v_count
        a[2] += r.v_count * r.v_count
    return CellSummary({k: Cell(*v) for k, v in acc.items()})


def summarize_arrays(y: np.ndarray, z: np.ndarray, v: np.ndarray) -> CellSummary:
    """Vectorised :func:`summarize_cells` for integer arrays of equal length."""
    y = np.asarray(y, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    idx = 2 * z + y
    counts = np.bincount(idx, minlength=4)
    totals = np.bincount(idx, weights=v, minlength=4)
    squares = np.bincount(idx, weights=v * v, minlength=4)
    cells = {}
    for (zz, yy) in CELLS:
        k = 2 * zz + yy
        cells[(zz, yy)] = Cell(int(counts[k]), int(totals[k]), int(squares[k]))
    return CellSummary(cells)
