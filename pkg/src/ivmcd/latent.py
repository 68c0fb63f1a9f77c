"""Latent microdata distributions on [-1, 1] and their moment matrices.

An interval observation carries, besides its center and range, a latent
variable U on [-1, 1] describing where the microdata sit inside the
interval.  Every distance and covariance formula in this package weights
range contributions by moments of U, so this module is the foundation:
it defines the supported latent families (uniform, triangular, empirical,
degenerate), their quantile functions, and the moment matrices derived
from them.

Moments of a single variable have closed forms wherever possible; the
paired moments E[Q_j(T) Q_l(T)] for distinct variables are computed by
composite midpoint quadrature of the product of quantile functions.  The
midpoint rule is used deliberately: quantile functions may have unbounded
derivative at 0 and 1, and the midpoint rule never evaluates there.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

DEFAULT_QUAD_POINTS = 4096

UNIFORM = "uniform"
TRIANGULAR = "triangular"
EMPIRICAL = "empirical"
DEGENERATE = "degenerate"

_KINDS = (UNIFORM, TRIANGULAR, EMPIRICAL, DEGENERATE)


@dataclass(frozen=True, eq=False)
class LatentSpec:
    """One latent distribution on [-1, 1], accessed through its quantile function.

    ``degenerate`` is the point mass at 0 and models conventional point data
    (range identically zero).  ``empirical`` interpolates a sorted sample with
    the usual type-7 rule, the simplest monotone quantile estimator.
    """

    kind: str
    mode: float | None = None
    sample: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown latent kind {self.kind!r}")
        if self.kind == TRIANGULAR:
            if self.mode is None or not np.isfinite(self.mode):
                raise ValidationError("triangular latent needs a finite mode")
            if not -1.0 < self.mode < 1.0:
                # boundary modes would break absolute continuity
                raise ValidationError("triangular mode must lie in the open interval (-1, 1)")
        elif self.mode is not None:
            raise ValidationError(f"mode is only meaningful for {TRIANGULAR!r}")
        if self.kind == EMPIRICAL:
            if self.sample is None:
                raise ValidationError("empirical latent needs a sample")
            arr = np.ascontiguousarray(np.asarray(self.sample, dtype=float).ravel())
            if arr.size == 0:
                raise ValidationError("empirical sample is empty")
            if not np.all(np.isfinite(arr)):
                raise ValidationError("empirical sample contains non-finite values")
            if np.any(arr < -1.0) or np.any(arr > 1.0):
                raise ValidationError("empirical sample values must lie in [-1, 1]")
            if np.any(np.diff(arr) < 0):
                arr = np.sort(arr)
            arr.flags.writeable = False
            object.__setattr__(self, "sample", arr)
        elif self.sample is not None:
            raise ValidationError(f"sample is only meaningful for {EMPIRICAL!r}")

    @classmethod
    def uniform(cls) -> "LatentSpec":
        return cls(UNIFORM)

    @classmethod
    def triangular(cls, mode: float) -> "LatentSpec":
        return cls(TRIANGULAR, mode=float(mode))

    @classmethod
    def empirical(cls, sample) -> "LatentSpec":
        return cls(EMPIRICAL, sample=np.asarray(sample, dtype=float))

    @classmethod
    def degenerate(cls) -> "LatentSpec":
        return cls(DEGENERATE)

    def quantile(self, t):
        """Quantile function evaluated at ``t`` in (0, 1); vectorized."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0.0) or np.any(t >= 1.0):
            raise ValidationError("quantile arguments must lie in the open interval (0, 1)")
        if self.kind == UNIFORM:
            return 2.0 * t - 1.0
        if self.kind == DEGENERATE:
            return np.zeros_like(t)
        if self.kind == TRIANGULAR:
            split = (self.mode + 1.0) / 2.0
            lo = -1.0 + np.sqrt(2.0 * t * (self.mode + 1.0))
            hi = 1.0 - np.sqrt(2.0 * (1.0 - t) * (1.0 - self.mode))
            return np.where(t <= split, lo, hi)
        # empirical, type-7 interpolation of the order statistics
        x = self.sample
        k = x.size
        if k == 1:
            return np.full_like(t, x[0])
        h = t * (k - 1)
        lo = np.minimum(h.astype(np.int64), k - 2)
        frac = h - lo
        return x[lo] + frac * (x[lo + 1] - x[lo])


def _quad_nodes(quad_points: int) -> np.ndarray:
    return (np.arange(quad_points, dtype=float) + 0.5) / quad_points


def latent_mean(spec: LatentSpec) -> float:
    """E(U): the integral of the quantile function over (0, 1).

    Uniform and degenerate are 0 by symmetry/point mass, the triangular
    family has the closed form mode/3, and an empirical spec returns its
    sample mean.
    """
    if spec.kind in (UNIFORM, DEGENERATE):
        return 0.0
    if spec.kind == TRIANGULAR:
        return spec.mode / 3.0
    return float(spec.sample.mean())


def latent_second_moment(spec: LatentSpec) -> float:
    """E(U^2) in [0, 1]: 1/3 for uniform, (1 + mode^2)/6 for triangular."""
    if spec.kind == UNIFORM:
        return 1.0 / 3.0
    if spec.kind == DEGENERATE:
        return 0.0
    if spec.kind == TRIANGULAR:
        return (1.0 + spec.mode * spec.mode) / 6.0
    return float(np.mean(spec.sample * spec.sample))


def cross_expectation(spec_j: LatentSpec, spec_l: LatentSpec,
                      quad_points: int = DEFAULT_QUAD_POINTS) -> float:
    """Integral of Q_j(t) * Q_l(t) over (0, 1) by composite midpoint quadrature.

    This is the comonotonic pairing of the two latent variables through a
    shared uniform draw; for identical specs it reduces to the second moment
    up to quadrature error.
    """
    if quad_points < 2:
        raise ValidationError("quad_points must be at least 2")
    if spec_j.kind == DEGENERATE or spec_l.kind == DEGENERATE:
        return 0.0
    t = _quad_nodes(int(quad_points))
    return float(np.mean(spec_j.quantile(t) * spec_l.quantile(t)))


@dataclass(frozen=True, eq=False)
class LatentMoments:
    """Moment matrices of a latent vector, shared by every estimator.

    mean[j]            E(U_j)
    second_moment[j]   E(U_j^2); the per-variable range weight is a quarter of it
    cross[j, l]        E(Q_j(T) Q_l(T)) with cross[j, j] = second_moment[j]
    qcov[j, l]         covariance of the quantile functions under a shared
                       uniform draw; diagonal is Var(U_j)
    """

    mean: np.ndarray
    second_moment: np.ndarray
    cross: np.ndarray
    qcov: np.ndarray

    @property
    def p(self) -> int:
        return self.mean.shape[0]

    @property
    def range_weight(self) -> np.ndarray:
        """Quarter second moments, each in [0, 1/4]; weight squared range gaps."""
        return self.second_moment / 4.0

    @property
    def embed(self) -> np.ndarray:
        """p x 2p block [I | diag(mean)/2] mapping macrodata to center space."""
        p = self.p
        out = np.zeros((p, 2 * p))
        out[:, :p] = np.eye(p)
        out[:, p:] = np.diag(self.mean / 2.0)
        return out


def build_moments(specs, quad_points: int = DEFAULT_QUAD_POINTS) -> LatentMoments:
    """Assemble the moment matrices for a list of latent specs.

    Diagonals use closed forms; off-diagonals of the paired-moment matrix come
    from midpoint quadrature of the quantile products.
    """
    specs = tuple(specs)
    p = len(specs)
    if p < 1:
        raise ValidationError("at least one latent spec is required")
    mean = np.array([latent_mean(s) for s in specs])
    second = np.array([latent_second_moment(s) for s in specs])
    cross = np.diag(second)
    for j in range(p):
        for l in range(j + 1, p):
            cross[j, l] = cross[l, j] = cross_expectation(specs[j], specs[l], quad_points)
    qcov = cross - np.outer(mean, mean)
    for arr in (mean, second, cross, qcov):
        arr.flags.writeable = False
    return LatentMoments(mean=mean, second_moment=second, cross=cross, qcov=qcov)


def load_empirical_sample(path) -> np.ndarray:
    """Read a single-column CSV of latent values in [-1, 1]."""
    values = []
    with open(path, newline="") as fh:
        for ln, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 1:
                raise ValidationError(f"{path}: line {ln}: expected a single column")
            cell = row[0].strip()
            try:
                values.append(float(cell))
            except ValueError:
                if ln == 1:
                    continue  # header line
                raise ValidationError(f"{path}: line {ln}: not a number: {cell!r}")
    if not values:
        raise ValidationError(f"{path}: no values")
    return np.sort(np.asarray(values, dtype=float))


def specs_from_config(config: dict, base_dir=None) -> tuple[LatentSpec, ...]:
    """Parse the latent JSON configuration.

    Expected shape: ``{"latent": [{"kind": "uniform"},
    {"kind": "triangular", "mode": -0.3}, {"kind": "empirical", "file": "u.csv"},
    {"kind": "degenerate"}]}``.  Empirical sample files resolve relative to
    ``base_dir`` (typically the config file's directory).
    """
    if not isinstance(config, dict) or "latent" not in config:
        raise ValidationError('latent config must be an object with a "latent" list')
    entries = config["latent"]
    if not isinstance(entries, list) or not entries:
        raise ValidationError('"latent" must be a non-empty list')
    base = Path(base_dir) if base_dir is not None else Path(".")
    specs = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ValidationError(f'latent entry {i}: expected an object with a "kind"')
        kind = str(entry["kind"]).lower()
        if kind == UNIFORM:
            specs.append(LatentSpec.uniform())
        elif kind == DEGENERATE:
            specs.append(LatentSpec.degenerate())
        elif kind == TRIANGULAR:
            if "mode" not in entry:
                raise ValidationError(f'latent entry {i}: triangular needs a "mode"')
            specs.append(LatentSpec.triangular(float(entry["mode"])))
        elif kind == EMPIRICAL:
            if "file" not in entry:
                raise ValidationError(f'latent entry {i}: empirical needs a "file"')
            specs.append(LatentSpec.empirical(load_empirical_sample(base / entry["file"])))
        else:
            raise ValidationError(f"latent entry {i}: unknown kind {entry['kind']!r}")
    return tuple(specs)
