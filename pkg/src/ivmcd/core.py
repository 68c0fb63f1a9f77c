"""Interval datasets and the estimators everything else consumes.

An observation is a (center vector, range vector) pair plus per-variable
latent specs; a dataset stacks the centers and ranges into n x p matrices.
This module provides the squared Mallows distance between observations,
the weighted barycenter, and the weighted symbolic covariance matrix in
its two algebraically-equivalent assemblies (kept as genuinely separate
code paths so they can cross-check each other):

* ``symbolic_cov``: the embed/quantile-covariance two-term form built from
  raw weighted second moments of the stacked macrodata, and
* ``symbolic_cov_from_blocks``: the block form built from centered
  covariance blocks of centers and ranges.

Weighted moments divide by the weight total m, never m - 1: the estimator
compares log-determinants across subsets and needs this exact convention.
Fractional weights are accepted (with an optionally overridden total) so
the objective's gradient can be validated by finite differences on the
relaxed cube.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .latent import LatentMoments, LatentSpec


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-d array")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def _as_vector(a, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(a, dtype=float).ravel())
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class IntervalObservation:
    """A single interval-valued observation: centers and non-negative ranges."""

    center: np.ndarray
    ranges: np.ndarray

    def __post_init__(self):
        c = _as_vector(self.center, "center")
        r = _as_vector(self.ranges, "ranges")
        if c.shape != r.shape:
            raise ValidationError("center and ranges must have equal length")
        if np.any(r < 0):
            raise ValidationError("ranges must be non-negative")
        c.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "ranges", r)

    @property
    def p(self) -> int:
        return self.center.shape[0]


@dataclass(frozen=True, eq=False)
class IntervalDataset:
    """n interval-valued observations: centers (n x p), ranges (n x p), latent specs.

    ``labels`` is an optional 0/1 ground-truth vector used only by the
    simulation benchmarks.
    """

    centers: np.ndarray
    ranges: np.ndarray
    specs: tuple[LatentSpec, ...]
    labels: np.ndarray | None = None

    def __post_init__(self):
        c = _as_matrix(self.centers, "centers")
        r = _as_matrix(self.ranges, "ranges")
        if c.shape != r.shape:
            raise ValidationError("centers and ranges must have the same shape")
        if c.shape[0] < 1 or c.shape[1] < 1:
            raise ValidationError("dataset needs at least one observation and one variable")
        if np.any(r < 0):
            raise ValidationError("ranges must be non-negative")
        specs = tuple(self.specs)
        if len(specs) != c.shape[1]:
            raise ValidationError("one latent spec per variable is required")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).ravel()
            if labels.shape[0] != c.shape[0]:
                raise ValidationError("labels must have one entry per observation")
            if not np.all((labels == 0) | (labels == 1)):
                raise ValidationError("labels must be 0/1")
            labels.flags.writeable = False
        c.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "ranges", r)
        object.__setattr__(self, "specs", specs)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def p(self) -> int:
        return self.centers.shape[1]

    @property
    def macrodata(self) -> np.ndarray:
        """The stacked n x 2p matrix [centers, ranges]."""
        return np.hstack([self.centers, self.ranges])

    def obs(self, i: int) -> IntervalObservation:
        return IntervalObservation(self.centers[i], self.ranges[i])

    def take(self, rows) -> "IntervalDataset":
        rows = np.asarray(rows)
        labels = None if self.labels is None else self.labels[rows]
        return IntervalDataset(self.centers[rows], self.ranges[rows], self.specs, labels)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Observation weights in [0, 1] plus the divisor used by weighted moments.

    ``total`` defaults to the weight sum.  Estimation always uses binary
    weights; fractional weights (and an explicitly fixed total) exist so the
    objective can be differentiated and finite-difference checked on the
    relaxed cube, where the divisor must stay constant.
    """

    weights: np.ndarray
    total: float = None  # type: ignore[assignment]

    def __post_init__(self):
        w = _as_vector(self.weights, "weights")
        if np.any(w < 0) or np.any(w > 1):
            raise ValidationError("weights must lie in [0, 1]")
        total = float(w.sum()) if self.total is None else float(self.total)
        if total <= 0:
            raise ValidationError("weight total must be positive")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total", total)

    @classmethod
    def from_indicator(cls, z) -> "WeightVector":
        return cls(np.asarray(z, dtype=float))

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.weights == 0.0) | (self.weights == 1.0)))


@dataclass(frozen=True, eq=False)
class Barycenter:
    """Frechet mean under the Mallows distance: mean centers and mean ranges."""

    center: np.ndarray
    ranges: np.ndarray

    def __post_init__(self):
        c = _as_vector(self.center, "center")
        r = _as_vector(self.ranges, "ranges")
        if c.shape != r.shape:
            raise ValidationError("center and ranges must have equal length")
        c.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "ranges", r)


@dataclass(frozen=True, eq=False)
class SymbolicCov:
    """p x p symbolic covariance matrix; symmetrized on construction."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.matrix, "matrix")
        if m.shape[0] != m.shape[1]:
            raise ValidationError("covariance matrix must be square")
        if np.max(np.abs(m - m.T)) > 1e-8 * max(1.0, np.max(np.abs(m))):
            raise ValidationError("covariance matrix is not symmetric")
        m = np.ascontiguousarray((m + m.T) / 2.0)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


def mallows_distance_sq(x1: IntervalObservation, x2: IntervalObservation,
                        mom: LatentMoments) -> float:
    """Squared Mallows (L2-Wasserstein) distance between two interval observations.

    Center gaps enter with unit weight, range gaps through the quarter second
    moments, and the center-range cross term through the latent means.  The
    per-coordinate quadratic form is positive semidefinite because
    E(U)^2 <= E(U^2), so the result is always non-negative.
    """
    if x1.p != x2.p or x1.p != mom.p:
        raise ValidationError("dimension mismatch between observations and moments")
    dc = x1.center - x2.center
    dr = x1.ranges - x2.ranges
    val = dc @ dc + (dr * dr) @ mom.range_weight + (dc * dr) @ mom.mean
    return max(float(val), 0.0)


def mallows_distances_sq(ds: IntervalDataset, center: Barycenter,
                         mom: LatentMoments) -> np.ndarray:
    """Squared Mallows distance from every observation to a barycenter."""
    if ds.p != mom.p or center.center.shape[0] != ds.p:
        raise ValidationError("dimension mismatch")
    dc = ds.centers - center.center
    dr = ds.ranges - center.ranges
    val = (dc * dc).sum(axis=1) + (dr * dr) @ mom.range_weight + (dc * dr) @ mom.mean
    return np.maximum(val, 0.0)


def _check_weights(ds: IntervalDataset, w: WeightVector, min_binary_total: float = 1.0):
    if w.n != ds.n:
        raise ValidationError("weight vector length must match the dataset")
    if w.is_binary and w.total < min_binary_total:
        raise ValidationError(
            f"at least {int(min_binary_total)} active observations are required")


def barycenter(ds: IntervalDataset, w: WeightVector) -> Barycenter:
    """Weighted sample barycenter: (C'w / total, R'w / total)."""
    _check_weights(ds, w)
    return Barycenter(ds.centers.T @ w.weights / w.total,
                      ds.ranges.T @ w.weights / w.total)


def macrodata_cov_2p(ds: IntervalDataset, w: WeightVector) -> np.ndarray:
    """Weighted covariance (divisor = weight total) of the stacked macrodata.

    Uses the raw-moment form sum(w_i x_i x_i') / total - xbar xbar', which is
    the form the estimator's gradient is derived from.
    """
    _check_weights(ds, w, min_binary_total=2.0)
    x = ds.macrodata
    xbar = x.T @ w.weights / w.total
    s2p = (x * w.weights[:, None]).T @ x / w.total - np.outer(xbar, xbar)
    return (s2p + s2p.T) / 2.0


def symbolic_cov(ds: IntervalDataset, w: WeightVector, mom: LatentMoments) -> SymbolicCov:
    """Weighted symbolic covariance: embed the 2p macrodata covariance and add
    the Schur-weighted range block.

    S = E S2p E' + (1/4) Qcov o S_RR, with E the [I | diag(mean)/2] embedding
    and Qcov the quantile-function covariance.  This is the primary assembly;
    ``symbolic_cov_from_blocks`` builds the same matrix along an independent
    route for cross-checking.
    """
    if ds.p != mom.p:
        raise ValidationError("moments dimension must match the dataset")
    p = ds.p
    s2p = macrodata_cov_2p(ds, w)
    emb = mom.embed
    sb = emb @ s2p @ emb.T + 0.25 * mom.qcov * s2p[p:, p:]
    return SymbolicCov((sb + sb.T) / 2.0)


def assemble_symbolic_cov_blocks(s_cc: np.ndarray, s_cr: np.ndarray,
                                 s_rr: np.ndarray, mom: LatentMoments) -> np.ndarray:
    """Block assembly of the symbolic covariance from center/range covariances:

        S_CC + (1/4) Cross o S_RR + (1/2) S_CR diag(mean) + (1/2) diag(mean) S_RC
    """
    a = s_cr * mom.mean[None, :]
    sb = s_cc + 0.25 * mom.cross * s_rr + 0.5 * (a + a.T)
    return (sb + sb.T) / 2.0


def symbolic_cov_from_blocks(ds: IntervalDataset, w: WeightVector,
                             mom: LatentMoments) -> SymbolicCov:
    """Alternative symbolic covariance route via centered weighted blocks.

    Identical to ``symbolic_cov`` when the weight total equals the weight sum;
    kept as a separate code path (centered accumulation, block formula) so the
    two assemblies can be compared to tight tolerance in tests.
    """
    if ds.p != mom.p:
        raise ValidationError("moments dimension must match the dataset")
    _check_weights(ds, w, min_binary_total=2.0)
    wv = w.weights
    cbar = ds.centers.T @ wv / w.total
    rbar = ds.ranges.T @ wv / w.total
    dc = ds.centers - cbar
    dr = ds.ranges - rbar
    s_cc = (dc * wv[:, None]).T @ dc / w.total
    s_cr = (dc * wv[:, None]).T @ dr / w.total
    s_rr = (dr * wv[:, None]).T @ dr / w.total
    return SymbolicCov(assemble_symbolic_cov_blocks(s_cc, s_cr, s_rr, mom))


# ---------------------------------------------------------------------------
# CSV interface
# ---------------------------------------------------------------------------

_LABEL_COLUMN = "label"


def _parse_header(header: list[str]):
    """Classify a header as bounds (_lo/_hi) or center-range (_c/_r) layout.

    Returns (layout, variable names, column pairs, label column index or None).
    """
    cols = [h.strip() for h in header]
    label_idx = None
    data_cols = []
    for i, name in enumerate(cols):
        if name.lower() == _LABEL_COLUMN:
            if label_idx is not None:
                raise ValidationError("duplicate label column")
            label_idx = i
        else:
            data_cols.append((i, name))
    if not data_cols:
        raise ValidationError("no data columns found")

    def split(suffix_a, suffix_b):
        names, pairs = [], []
        pending = {}
        for i, name in data_cols:
            low = name.lower()
            if low.endswith(suffix_a):
                pending.setdefault(name[: -len(suffix_a)], [None, None])[0] = i
            elif low.endswith(suffix_b):
                pending.setdefault(name[: -len(suffix_b)], [None, None])[1] = i
            else:
                return None
        for var, (a, b) in pending.items():
            if a is None or b is None:
                raise ValidationError(f"variable {var!r} is missing one of its two columns")
            names.append(var)
            pairs.append((a, b))
        return names, pairs

    bounds = split("_lo", "_hi")
    if bounds is not None:
        return "bounds", bounds[0], bounds[1], label_idx
    cr = split("_c", "_r")
    if cr is not None:
        return "center-range", cr[0], cr[1], label_idx
    raise ValidationError(
        "header must use either the var_lo/var_hi or the var_c/var_r convention")


def load_interval_csv(path, specs=None) -> IntervalDataset:
    """Load an interval dataset from CSV.

    Two layouts are supported, chosen by header convention: bounds columns
    ``var_lo,var_hi`` (converted via center=(lo+hi)/2, range=hi-lo; rows with
    hi < lo are rejected by row number) or direct ``var_c,var_r`` columns
    (negative ranges rejected).  An optional 0/1 ``label`` column carries
    benchmark ground truth.  When ``specs`` is omitted every variable gets the
    uniform latent, the standard assumption when no microdata are available.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file")
        layout, names, pairs, label_idx = _parse_header(header)
        centers, ranges, labels = [], [], []
        for ln, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}: line {ln}: expected {len(header)} fields")
            try:
                vals = {i: float(row[i].strip()) for i in range(len(row)) if i != label_idx}
            except ValueError as exc:
                raise ValidationError(f"{path}: line {ln}: {exc}")
            c_row, r_row = [], []
            for var, (a, b) in zip(names, pairs):
                if layout == "bounds":
                    lo, hi = vals[a], vals[b]
                    if hi < lo:
                        raise ValidationError(
                            f"{path}: line {ln}: variable {var!r} has upper bound below lower")
                    c_row.append((lo + hi) / 2.0)
                    r_row.append(hi - lo)
                else:
                    c, r = vals[a], vals[b]
                    if r < 0:
                        raise ValidationError(
                            f"{path}: line {ln}: variable {var!r} has negative range")
                    c_row.append(c)
                    r_row.append(r)
            centers.append(c_row)
            ranges.append(r_row)
            if label_idx is not None:
                cell = row[label_idx].strip()
                if cell not in ("0", "1"):
                    raise ValidationError(f"{path}: line {ln}: label must be 0 or 1")
                labels.append(int(cell))
    if not centers:
        raise ValidationError(f"{path}: no data rows")
    p = len(names)
    if specs is None:
        specs = tuple(LatentSpec.uniform() for _ in range(p))
    specs = tuple(specs)
    if len(specs) != p:
        raise ValidationError(
            f"{path}: {p} variables but {len(specs)} latent specs were supplied")
    return IntervalDataset(np.asarray(centers), np.asarray(ranges), specs,
                           np.asarray(labels) if label_idx is not None else None)


def write_interval_csv(path, ds: IntervalDataset, names=None) -> None:
    """Write a dataset in the center-range layout (plus label column if present)."""
    names = list(names) if names is not None else [f"v{j + 1}" for j in range(ds.p)]
    header = []
    for name in names:
        header += [f"{name}_c", f"{name}_r"]
    if ds.labels is not None:
        header.append(_LABEL_COLUMN)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = []
            for j in range(ds.p):
                row += [repr(float(ds.centers[i, j])), repr(float(ds.ranges[i, j]))]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            writer.writerow(row)
