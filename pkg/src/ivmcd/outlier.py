"""Interval-Mahalanobis distances, cutoffs, and outlier reports.

The squared Interval-Mahalanobis distance weights center deviations by the
inverse symbolic covariance, range deviations by its Schur product with the
paired latent second moments, and cross terms through the latent means.
The same value can be written as a single quadratic form in the stacked
(center, range) deviation; both routes are implemented and cross-checked.
With estimates from the subset search the distance is robust and drives
outlier flagging under adjusted-boxplot or farness cutoffs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .core import (Barycenter, IntervalDataset, IntervalObservation,
                   SymbolicCov, mallows_distances_sq)
from .errors import ValidationError
from .estimator import _spd_inverse
from .latent import LatentMoments
from .univariate import (AdjBox, Farness, FarnessModel, adjusted_fences,
                         farness_scores)


@dataclass(frozen=True)
class MallowsAdjBox:
    """Baseline detector: adjusted-boxplot fence on squared Mallows distances
    to the barycenter (no covariance weighting)."""

    k: float = 1.5

    def describe(self) -> str:
        return f"mallows-adjbox(k={self.k:g})"


def _imah_terms(dc, dr, sinv, mom):
    """The four-term expansion, vectorized over rows of dc/dr."""
    t1 = np.einsum("ij,jk,ik->i", dc, sinv, dc)
    t2 = 0.25 * np.einsum("ij,jk,ik->i", dr, mom.cross * sinv, dr)
    sp = sinv * mom.mean[None, :]  # sinv @ diag(mean)
    t3 = 0.5 * np.einsum("ij,jk,ik->i", dc, sp, dr)
    t4 = 0.5 * np.einsum("ij,jk,ik->i", dr, sp.T, dc)
    return t1 + t2 + t3 + t4


def interval_mahalanobis_sq(x: IntervalObservation, center: Barycenter,
                            cov: SymbolicCov, mom: LatentMoments) -> float:
    """Squared Interval-Mahalanobis distance of one observation from a
    barycenter under a symbolic covariance (four-term expansion)."""
    if x.p != mom.p or cov.p != mom.p or center.center.shape[0] != mom.p:
        raise ValidationError("dimension mismatch")
    sinv = _spd_inverse(cov.matrix)
    dc = (x.center - center.center)[None, :]
    dr = (x.ranges - center.ranges)[None, :]
    return max(float(_imah_terms(dc, dr, sinv, mom)[0]), 0.0)


def imah_quadratic_matrix(cov: SymbolicCov, mom: LatentMoments) -> np.ndarray:
    """The 2p x 2p matrix H of the quadratic-form route: the distance equals
    (y - eta)' H (y - eta) on stacked (center, range) deviations."""
    sinv = _spd_inverse(cov.matrix)
    psi = np.diag(mom.mean)
    p = mom.p
    h = np.empty((2 * p, 2 * p))
    h[:p, :p] = sinv
    h[:p, p:] = 0.5 * sinv @ psi
    h[p:, :p] = 0.5 * psi @ sinv
    h[p:, p:] = 0.25 * mom.cross * sinv
    return h


def interval_mahalanobis_sq_quadform(x: IntervalObservation, center: Barycenter,
                                     cov: SymbolicCov, mom: LatentMoments) -> float:
    """Same distance through the stacked quadratic form; independent route used
    to cross-check the four-term expansion."""
    h = imah_quadratic_matrix(cov, mom)
    y = np.concatenate([x.center - center.center, x.ranges - center.ranges])
    return float(y @ h @ y)


def interval_mahalanobis_all(ds: IntervalDataset, center: Barycenter,
                             cov: SymbolicCov, mom: LatentMoments) -> np.ndarray:
    """Vectorized squared Interval-Mahalanobis distances for a whole dataset."""
    if ds.p != mom.p or cov.p != mom.p:
        raise ValidationError("dimension mismatch")
    sinv = _spd_inverse(cov.matrix)
    dc = ds.centers - center.center
    dr = ds.ranges - center.ranges
    return np.maximum(_imah_terms(dc, dr, sinv, mom), 0.0)


@dataclass(frozen=True, eq=False)
class OutlierReport:
    """Per-observation distances, optional farness scores, cutoff, and flags."""

    distances: np.ndarray
    scores: np.ndarray | None
    cutoff: float
    method: str
    flags: np.ndarray
    estimator: str
    mild_threshold: float | None = None
    mild_cutoff: float | None = None
    mild_flags: np.ndarray | None = None
    farness_model: FarnessModel | None = None

    @property
    def n_flagged(self) -> int:
        return int(self.flags.sum())

    def flagged_ids(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.flags)]

    def to_dict(self) -> dict:
        out = {
            "schema_version": 1,
            "method": self.method,
            "estimator": self.estimator,
            "cutoff": float(self.cutoff),
            "distances": [float(v) for v in self.distances],
            "scores": None if self.scores is None else [float(v) for v in self.scores],
            "flags": [int(v) for v in self.flags],
        }
        if self.mild_threshold is not None:
            out["mild_threshold"] = float(self.mild_threshold)
            out["mild_cutoff"] = float(self.mild_cutoff)
            out["mild_flags"] = [int(v) for v in self.mild_flags]
        if self.farness_model is not None:
            out["farness_model"] = self.farness_model.to_dict()
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["id", "dsq", "score", "flag"]
            if self.mild_flags is not None:
                header.append("mild_flag")
            writer.writerow(header)
            for i in range(self.distances.shape[0]):
                row = [i, repr(float(self.distances[i])),
                       "" if self.scores is None else repr(float(self.scores[i])),
                       int(self.flags[i])]
                if self.mild_flags is not None:
                    row.append(int(self.mild_flags[i]))
                writer.writerow(row)


def detect_outliers(ds: IntervalDataset, center: Barycenter, cov: SymbolicCov,
                    mom: LatentMoments, method, estimator: str = "classical",
                    mild: float | None = None) -> OutlierReport:
    """Flag observations whose distance statistic exceeds the method's cutoff.

    ``AdjBox`` fences the squared Interval-Mahalanobis distances,
    ``Farness`` thresholds their farness scores (an optional ``mild``
    threshold adds a second, laxer tier in the same report), and
    ``MallowsAdjBox`` is the covariance-free baseline fencing squared
    Mallows distances.
    """
    if isinstance(method, MallowsAdjBox):
        dsq = mallows_distances_sq(ds, center, mom)
        fence = adjusted_fences(dsq, method.k)
        flags = (dsq > fence.upper).astype(np.uint8)
        return OutlierReport(distances=dsq, scores=None, cutoff=float(fence.upper),
                             method=method.describe(), flags=flags,
                             estimator=estimator)
    dsq = interval_mahalanobis_all(ds, center, cov, mom)
    if isinstance(method, AdjBox):
        fence = adjusted_fences(dsq, method.k)
        flags = (dsq > fence.upper).astype(np.uint8)
        return OutlierReport(distances=dsq, scores=None, cutoff=float(fence.upper),
                             method=method.describe(), flags=flags,
                             estimator=estimator)
    if isinstance(method, Farness):
        scores, model = farness_scores(dsq)
        flags = (scores > method.threshold).astype(np.uint8)
        mild_threshold = mild_cutoff = mild_flags = None
        if mild is not None:
            if not 0.0 < mild < 1.0:
                raise ValidationError("mild threshold must lie in (0, 1)")
            mild_threshold = float(mild)
            mild_cutoff = model.inverse(mild)
            mild_flags = (scores > mild).astype(np.uint8)
        return OutlierReport(distances=dsq, scores=scores,
                             cutoff=model.inverse(method.threshold),
                             method=method.describe(), flags=flags,
                             estimator=estimator, mild_threshold=mild_threshold,
                             mild_cutoff=mild_cutoff, mild_flags=mild_flags,
                             farness_model=model)
    raise ValidationError(f"unknown detection method {method!r}")


@dataclass(frozen=True, eq=False)
class DistanceTable:
    """Classical-vs-robust distance pairs behind a distance-distance plot."""

    d2_classical: np.ndarray
    d2_robust: np.ndarray
    flag_classical: np.ndarray
    flag_robust: np.ndarray
    cutoff_classical: float
    cutoff_robust: float

    @property
    def n(self) -> int:
        return self.d2_classical.shape[0]

    def rows(self):
        for i in range(self.n):
            yield (i, float(self.d2_classical[i]), float(self.d2_robust[i]),
                   int(self.flag_classical[i]), int(self.flag_robust[i]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "d2_classical", "d2_robust",
                             "flag_classical", "flag_robust"])
            for i, dc, dr, fc, fr in self.rows():
                writer.writerow([i, repr(dc), repr(dr), fc, fr])


def distance_distance_table(ds: IntervalDataset,
                            classical: tuple[Barycenter, SymbolicCov],
                            robust: tuple[Barycenter, SymbolicCov],
                            mom: LatentMoments,
                            classical_method=None,
                            robust_method=None) -> DistanceTable:
    """Pair classical and robust squared distances per observation, with the
    cutoff lines a distance-distance plot would draw."""
    classical_method = classical_method if classical_method is not None else AdjBox()
    robust_method = robust_method if robust_method is not None else Farness(0.95)
    rep_c = detect_outliers(ds, classical[0], classical[1], mom, classical_method,
                            estimator="classical")
    rep_r = detect_outliers(ds, robust[0], robust[1], mom, robust_method,
                            estimator="imcd")
    return DistanceTable(d2_classical=rep_c.distances, d2_robust=rep_r.distances,
                         flag_classical=rep_c.flags, flag_robust=rep_r.flags,
                         cutoff_classical=rep_c.cutoff, cutoff_robust=rep_r.cutoff)
