"""Aggregates over per-sample decompositions: category tables, angle densities, histograms."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, EmptyInputError, ValidationError
from .geometry import CATEGORIES, INDETERMINATE_CODE, Category, DecompositionArrays
from .netforce import V_EPS, signed_accel_arrays


@dataclass
class CategoryAccumulator:
    """Mergeable partial aggregate behind :class:`CategoryStatsTable`.

    Feed chunks through :meth:`update` (possibly in different workers) and
    combine with :meth:`merge`; counts merge exactly.
    """

    counts: np.ndarray = field(default_factory=lambda: np.zeros(5, dtype=np.int64))
    sum_abs: np.ndarray = field(default_factory=lambda: np.zeros(5))
    sum_signed: np.ndarray = field(default_factory=lambda: np.zeros(5))
    indeterminate: int = 0

    def update(self, codes, abs_accel, signed_accel) -> "CategoryAccumulator":
        codes = np.asarray(codes)
        abs_accel = np.asarray(abs_accel, dtype=float)
        signed_accel = np.asarray(signed_accel, dtype=float)
        if not (len(codes) == len(abs_accel) == len(signed_accel)):
            raise AlignmentError("category codes and kinematics differ in length")
        self.indeterminate += int(np.count_nonzero(codes == INDETERMINATE_CODE))
        for c in range(5):
            sel = codes == c
            n = int(np.count_nonzero(sel))
            if n:
                self.counts[c] += n
                self.sum_abs[c] = math.fsum((self.sum_abs[c], math.fsum(abs_accel[sel])))
                self.sum_signed[c] = math.fsum((self.sum_signed[c], math.fsum(signed_accel[sel])))
        return self

    def merge(self, other: "CategoryAccumulator") -> "CategoryAccumulator":
        out = CategoryAccumulator()
        out.counts = self.counts + other.counts
        out.sum_abs = self.sum_abs + other.sum_abs
        out.sum_signed = self.sum_signed + other.sum_signed
        out.indeterminate = self.indeterminate + other.indeterminate
        return out

    def table(self) -> "CategoryStatsTable":
        total = int(self.counts.sum())
        rows = {}
        for c, cat in enumerate(CATEGORIES):
            n = int(self.counts[c])
            rows[cat] = CategoryRow(
                sample_count=n,
                percent_time=100.0 * n / total if total else math.nan,
                mean_abs_accel=self.sum_abs[c] / n if n else math.nan,
                mean_signed_accel=self.sum_signed[c] / n if n else math.nan,
            )
        return CategoryStatsTable(rows=rows, indeterminate_count=self.indeterminate)


@dataclass(frozen=True)
class CategoryRow:
    sample_count: int
    percent_time: float
    mean_abs_accel: float
    mean_signed_accel: float


@dataclass
class CategoryStatsTable:
    """Time share and mean acceleration per angular category.

    Indeterminate samples are left out of every row and of the percentage
    denominator; their number is kept in ``indeterminate_count``.
    """

    rows: dict[Category, CategoryRow]
    indeterminate_count: int

    @property
    def total(self) -> int:
        return sum(r.sample_count for r in self.rows.values())

    def __getitem__(self, cat: Category | str) -> CategoryRow:
        return self.rows[Category(cat)]

    def union_percent(self, cats) -> float:
        """Percent of time in a union of bands, e.g. aligned+acute."""
        return sum(self.rows[Category(c)].percent_time for c in cats)

    def csv_header(self) -> list[str]:
        return ["category", "sample_count", "percent_time", "mean_abs_accel", "mean_signed_accel"]

    def csv_rows(self):
        for cat in CATEGORIES:
            r = self.rows[cat]
            yield [cat.value, r.sample_count, r.percent_time, r.mean_abs_accel, r.mean_signed_accel]

    def as_dict(self) -> dict:
        return {
            "indeterminate_count": self.indeterminate_count,
            "total_determinate": self.total,
            "categories": {
                cat.value: {
                    "sample_count": r.sample_count,
                    "percent_time": r.percent_time,
                    "mean_abs_accel": r.mean_abs_accel,
                    "mean_signed_accel": r.mean_signed_accel,
                }
                for cat, r in self.rows.items()
            },
        }


def _codes_of(decomp) -> np.ndarray:
    if isinstance(decomp, DecompositionArrays):
        return decomp.category
    if isinstance(decomp, np.ndarray):
        return decomp
    return np.array([s.category.code for s in decomp], dtype=np.int8)


def category_stats(
    decomp,
    accel,
    velocity,
    v_eps: float = V_EPS,
    decomp_t=None,
    kin_t=None,
) -> CategoryStatsTable:
    """Build the category table from decompositions and matching object kinematics.

    Args:
        decomp: :class:`DecompositionArrays`, an array of category codes, or a
            sequence of ``DecompositionSample``.
        accel, velocity: ``(N, 3)`` object acceleration and velocity.
        decomp_t, kin_t: optional timestamps; when both are given they must match.
    """
    codes = _codes_of(decomp)
    a = np.asarray(accel, dtype=float).reshape(-1, 3)
    v = np.asarray(velocity, dtype=float).reshape(-1, 3)
    if not (len(codes) == len(a) == len(v)):
        raise AlignmentError(f"stream lengths differ: decomposition {len(codes)}, accel {len(a)}, velocity {len(v)}")
    if decomp_t is not None and kin_t is not None:
        dt_, kt_ = np.asarray(decomp_t), np.asarray(kin_t)
        if dt_.shape != kt_.shape or not np.array_equal(dt_, kt_):
            raise AlignmentError("decomposition and kinematic timestamps differ")
    abs_a = np.sqrt(np.einsum("ij,ij->i", a, a))
    signed = signed_accel_arrays(a, v, v_eps) if len(a) else np.zeros(0)
    return CategoryAccumulator().update(codes, abs_a, signed).table()


@dataclass
class CircularDensity:
    bin_deg: float
    density: np.ndarray
    count: int

    @property
    def edges(self) -> np.ndarray:
        return np.arange(len(self.density) + 1) * self.bin_deg

    def csv_header(self) -> list[str]:
        return ["bin_lo_deg", "bin_hi_deg", "density"]

    def csv_rows(self):
        e = self.edges
        for k, d in enumerate(self.density):
            yield [float(e[k]), float(e[k + 1]), float(d)]

    def as_dict(self) -> dict:
        return {"bin_deg": self.bin_deg, "count": self.count, "density": self.density.tolist()}


def circular_density(theta_deg, bin_deg: float = 5.0) -> CircularDensity:
    """Relative frequency of angles over ``[0, 180]``.

    Bin ``k`` covers ``[k*bin, (k+1)*bin)``; the last bin also holds 180.
    """
    theta = np.asarray(theta_deg, dtype=float).reshape(-1)
    if theta.size == 0:
        raise EmptyInputError("no angles to bin")
    if not (bin_deg > 0):
        raise ValidationError(f"bin width must be positive, got {bin_deg}")
    n_bins = 180.0 / bin_deg
    if abs(n_bins - round(n_bins)) > 1e-9:
        raise ValidationError(f"bin width {bin_deg} does not divide 180")
    n_bins = int(round(n_bins))
    if np.any(~np.isfinite(theta)) or np.any((theta < 0) | (theta > 180)):
        raise ValidationError("angles must be finite and lie in [0, 180]")
    idx = np.minimum((theta / bin_deg).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return CircularDensity(bin_deg=bin_deg, density=counts / theta.size, count=int(theta.size))


class OverflowPolicy(str, enum.Enum):
    # Outliers fold into the end bins and are also counted.
    CLIP_REPORT = "clip-report"
    # Outliers are left out of the bins and counted.
    DROP_REPORT = "drop-report"


@dataclass(frozen=True)
class HistogramSpec:
    bin_width: float
    lo: float
    hi: float
    overflow: OverflowPolicy = OverflowPolicy.DROP_REPORT

    def __post_init__(self):
        object.__setattr__(self, "overflow", OverflowPolicy(self.overflow))
        if not (math.isfinite(self.bin_width) and self.bin_width > 0):
            raise ValidationError(f"bin_width must be positive, got {self.bin_width}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.hi > self.lo):
            raise ValidationError(f"histogram range needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def n_bins(self) -> int:
        return max(1, int(math.ceil((self.hi - self.lo) / self.bin_width - 1e-9)))

    def edges(self) -> np.ndarray:
        e = self.lo + self.bin_width * np.arange(self.n_bins + 1)
        e[-1] = max(e[-1], self.hi)
        return e

    def as_dict(self) -> dict:
        return {"bin_width": self.bin_width, "lo": self.lo, "hi": self.hi, "overflow": self.overflow.value}


# Default ranges for report histograms (newtons, 1 N bins).
F_PARALLEL_SPEC = HistogramSpec(1.0, -60.0, 60.0)
F_PERP_SPEC = HistogramSpec(1.0, 0.0, 60.0)
TENSION_SPEC = HistogramSpec(1.0, -40.0, 40.0)


@dataclass
class Histogram:
    spec: HistogramSpec
    counts: np.ndarray
    below: int
    above: int

    @property
    def outliers(self) -> int:
        return self.below + self.above

    @property
    def n_values(self) -> int:
        if self.spec.overflow is OverflowPolicy.CLIP_REPORT:
            return int(self.counts.sum())
        return int(self.counts.sum()) + self.outliers

    def csv_header(self) -> list[str]:
        return ["bin_lo", "bin_hi", "count"]

    def csv_rows(self):
        if self.n_values == 0:
            return
        e = self.spec.edges()
        for k, c in enumerate(self.counts):
            yield [float(e[k]), float(e[k + 1]), int(c)]

    def as_dict(self) -> dict:
        return {
            "spec": self.spec.as_dict(),
            "counts": self.counts.tolist(),
            "outliers_below": self.below,
            "outliers_above": self.above,
        }


def magnitude_histogram(values, spec: HistogramSpec) -> Histogram:
    """Count values per bin; out-of-range values are tallied as outliers.

    Bins are half-open except the last, which is closed.
    """
    x = np.asarray(values, dtype=float).reshape(-1)
    if np.any(~np.isfinite(x)):
        raise ValidationError("histogram values must be finite")
    edges = spec.edges()
    n = spec.n_bins
    below_mask = x < edges[0]
    above_mask = x > edges[-1]
    inside = x[~(below_mask | above_mask)]
    idx = np.floor((inside - spec.lo) / spec.bin_width).astype(np.int64)
    idx = np.clip(idx, 0, n - 1)
    counts = np.bincount(idx, minlength=n).astype(np.int64)
    below, above = int(below_mask.sum()), int(above_mask.sum())
    if spec.overflow is OverflowPolicy.CLIP_REPORT:
        counts[0] += below
        counts[-1] += above
    return Histogram(spec=spec, counts=counts, below=below, above=above)
