"""Minimum-covariance-determinant estimation for interval datasets.

The estimator searches for the size-m subset whose symbolic covariance has
the smallest log-determinant.  The objective is concave on the relaxed
cube, so a first-order majorization step reduces to the classical
concentration step: recompute the barycenter/covariance of the active
subset and keep the m observations nearest in the subset's squared
distance.  The search follows the standard multi-start scheme: many random
(p+1)-seeds, two warm concentration steps each, full iteration for the
best few, plus a partitioned path for large n.  A one-step reweighting
(adjusted-boxplot or farness cutoff on the raw distances) recovers
efficiency afterwards.

Randomness flows from a counter-based generator keyed by (seed, stream):
every restart owns a substream, so results are bit-identical for a fixed
seed at any worker-thread count, with ties across restarts broken by the
restart index.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from . import _kernels
from .core import (Barycenter, IntervalDataset, SymbolicCov, WeightVector,
                   barycenter, mallows_distances_sq, symbolic_cov)
from .errors import (DegenerateDataError, SingularCovarianceError,
                     ValidationError)
from .latent import LatentMoments
from .univariate import AdjBox, Farness

_LOGDET_FLOOR = math.log(1e-300)
_SEED_DET_RTOL = 1e-12
_SUBSAMPLE_STREAM = 1 << 48  # stream id reserved for the large-n subsample draw


@dataclass(frozen=True)
class ImcdConfig:
    """Search parameters; defaults follow the usual multi-start recipe.

    ``m`` of None means floor(0.75 n), resolved at fit time.  ``reweight``
    is the cutoff rule applied to the raw squared distances.
    """

    m: int | None = None
    n_starts: int = 500
    n_keep: int = 10
    warm_csteps: int = 2
    max_iter: int = 100
    tol: float = 1e-10
    large_n_threshold: int = 600
    merge_cap: int = 1500
    reweight: AdjBox | Farness = field(default_factory=Farness)
    seed: int = 0

    def __post_init__(self):
        if self.n_keep > self.n_starts:
            raise ValidationError("n_keep cannot exceed n_starts")
        for name in ("n_starts", "n_keep", "warm_csteps", "max_iter",
                     "large_n_threshold", "merge_cap"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.tol <= 0:
            raise ValidationError("tol must be positive")

    def resolve_m(self, n: int) -> int:
        return int(0.75 * n) if self.m is None else int(self.m)

    def to_dict(self) -> dict:
        rw = self.reweight
        return {
            "m": self.m, "n_starts": self.n_starts, "n_keep": self.n_keep,
            "warm_csteps": self.warm_csteps, "max_iter": self.max_iter,
            "tol": self.tol, "large_n_threshold": self.large_n_threshold,
            "merge_cap": self.merge_cap, "seed": self.seed,
            "reweight": rw.describe(),
        }


@dataclass(frozen=True, eq=False)
class ImcdFit:
    """Everything the search produced.

    ``subset`` is the final 0/1 indicator, ``raw_*`` the estimates on it,
    ``distances`` the squared distances of all observations from the raw
    estimates, ``keep`` the reweighting indicator with the reweighted
    ``center``/``cov``, and ``traces`` the per-restart descent history as
    (restart id, segments of log-determinants).
    """

    subset: np.ndarray
    raw_center: Barycenter
    raw_cov: SymbolicCov
    raw_objective: float
    distances: np.ndarray
    keep: np.ndarray
    center: Barycenter
    cov: SymbolicCov
    cutoff: float
    traces: tuple
    config: ImcdConfig

    @property
    def n_kept(self) -> int:
        return int(self.keep.sum())

    def to_dict(self) -> dict:
        trace_summary = []
        for restart, segments in self.traces:
            total = sum(len(s) for s in segments)
            trace_summary.append({
                "restart": int(restart),
                "steps": int(total),
                "start": float(segments[0][0]),
                "end": float(segments[-1][-1]),
            })
        return {
            "schema_version": 1,
            "config": self.config.to_dict(),
            "subset": [int(v) for v in self.subset],
            "raw_center": [float(v) for v in self.raw_center.center],
            "raw_ranges": [float(v) for v in self.raw_center.ranges],
            "raw_cov": [float(v) for v in self.raw_cov.matrix.ravel()],
            "raw_objective": float(self.raw_objective),
            "distances": [float(v) for v in self.distances],
            "weights": [int(v) for v in self.keep],
            "center": [float(v) for v in self.center.center],
            "ranges": [float(v) for v in self.center.ranges],
            "cov": [float(v) for v in self.cov.matrix.ravel()],
            "cutoff": float(self.cutoff),
            "p": int(self.cov.p),
            "trace_summary": trace_summary,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _stream(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream id)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _spd_inverse(matrix: np.ndarray) -> np.ndarray:
    try:
        low = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("covariance matrix is not positive definite")
    return cho_solve((low, True), np.eye(matrix.shape[0]))


def objective_logdet(ds: IntervalDataset, mom: LatentMoments, w: WeightVector) -> float:
    """log det of the weighted symbolic covariance; the search objective."""
    cov = symbolic_cov(ds, w, mom)
    sign, logabs = np.linalg.slogdet(cov.matrix)
    if sign <= 0 or not np.isfinite(logabs) or logabs < _LOGDET_FLOOR:
        raise SingularCovarianceError("weighted symbolic covariance is singular")
    return float(logabs)


def _distance_parts(ds, mom, w):
    """Per-observation quadratic forms plus the two barycenter constants.

    The squared distance of observation i is parts[i]; the gradient of the
    objective is (parts[i] - const) / total.
    """
    cov = symbolic_cov(ds, w, mom)
    sinv = _spd_inverse(cov.matrix)
    b = barycenter(ds, w)
    dc = ds.centers - b.center
    dr = ds.ranges - b.ranges
    a = dc + 0.5 * dr * mom.mean
    t1 = np.einsum("ij,jk,ik->i", a, sinv, a)
    wmat = mom.qcov * sinv
    t2 = 0.25 * np.einsum("ij,jk,ik->i", dr, wmat, dr)
    abar = b.center + 0.5 * mom.mean * b.ranges
    const = float(abar @ sinv @ abar) + 0.25 * float(b.ranges @ wmat @ b.ranges)
    return t1 + t2, const


def gradient(ds: IntervalDataset, mom: LatentMoments, w: WeightVector) -> np.ndarray:
    """Analytic gradient of the log-det objective on the relaxed cube,
    with the weight total held fixed."""
    parts, const = _distance_parts(ds, mom, w)
    return (parts - const) / w.total


def cstep_distances(ds: IntervalDataset, mom: LatentMoments, w: WeightVector) -> np.ndarray:
    """Squared distances of every observation from the weighted estimates;
    the statistic the concentration step sorts on."""
    parts, _ = _distance_parts(ds, mom, w)
    return np.maximum(parts, 0.0)


def minorization_step(ds: IntervalDataset, mom: LatentMoments, z, m: int) -> np.ndarray:
    """One concentration step: keep the m observations nearest the current
    subset's estimates (ties broken by lowest index).  Never increases the
    objective."""
    z = np.asarray(z)
    if not np.all((z == 0) | (z == 1)):
        raise ValidationError("z must be a 0/1 indicator")
    if int(z.sum()) != int(m):
        raise ValidationError("z must have exactly m active entries")
    d = cstep_distances(ds, mom, WeightVector.from_indicator(z))
    order = np.argsort(d, kind="stable")
    out = np.zeros(ds.n, dtype=np.int64)
    out[order[:m]] = 1
    return out


def reweight(ds: IntervalDataset, mom: LatentMoments, dsq,
             method: AdjBox | Farness):
    """One-step reweighting: keep observations whose raw squared distance is
    at most the method's data-driven cutoff, and re-estimate.

    Returns ``(keep, center, cov, cutoff)``.
    """
    dsq = np.asarray(dsq, dtype=float)
    cutoff = float(method.cutoff(dsq))
    keep = dsq <= cutoff
    kept = int(keep.sum())
    if kept == 0:
        raise DegenerateDataError("reweighting removed every observation")
    if kept < 2:
        raise DegenerateDataError("reweighting kept fewer than two observations")
    w = WeightVector(keep.astype(float))
    return (keep.astype(np.uint8), barycenter(ds, w),
            symbolic_cov(ds, w, mom), cutoff)


# ---------------------------------------------------------------------------
# Multi-start search
# ---------------------------------------------------------------------------


def _map_ordered(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _subset_nonsingular(ds, mom, idx) -> bool:
    """Seed-subset acceptance rule: det above 1e-12 x (mean diagonal)^p."""
    z = np.zeros(ds.n)
    z[idx] = 1.0
    sb = symbolic_cov(ds, WeightVector(z), mom).matrix
    sign, logabs = np.linalg.slogdet(sb)
    if sign <= 0 or not np.isfinite(logabs):
        return False
    mean_diag = float(np.trace(sb)) / sb.shape[0]
    if mean_diag <= 0 or not np.isfinite(mean_diag):
        return False
    return logabs > math.log(_SEED_DET_RTOL) + sb.shape[0] * math.log(mean_diag)


def _repair_seed(ds, mom, idx) -> np.ndarray:
    """Expand a singular seed one observation at a time, nearest first.

    Nearness is the squared Mallows distance to the current subset's
    barycenter; expansion is deterministic so restarts stay reproducible.
    """
    idx = np.asarray(idx, dtype=np.int64)
    while not _subset_nonsingular(ds, mom, idx):
        if idx.shape[0] == ds.n:
            raise SingularCovarianceError("seed subset could not be repaired")
        center = Barycenter(ds.centers[idx].mean(axis=0), ds.ranges[idx].mean(axis=0))
        d = mallows_distances_sq(ds, center, mom)
        d[idx] = np.inf
        idx = np.sort(np.append(idx, np.argmin(d))).astype(np.int64)
    return idx


def _warm_start(ds, mom, C, R, psi, exx, rng, m, warm_csteps, n_rows):
    """Draw a (p+1)-seed, repair, expand to m, run the warm concentration steps.

    Returns ``(logdet, subset_idx, warm_trace)`` or raises on singularity.
    """
    p = ds.p
    seed_idx = np.sort(rng.choice(n_rows, size=p + 1, replace=False)).astype(np.int64)
    seed_idx = _repair_seed(ds, mom, seed_idx)
    _, idx_m = _kernels.cstep_pass(C, R, psi, exx, seed_idx, m)
    idx_w, trace = _kernels.cstep_iterate(C, R, psi, exx, idx_m, m, warm_csteps, -1.0)
    return float(trace[-1]), idx_w, tuple(float(v) for v in trace)


def _search_small(ds, mom, cfg, m, threads):
    C, R = ds.centers, ds.ranges
    psi, exx = mom.mean, mom.cross

    def run_start(t):
        rng = _stream(cfg.seed, t)
        try:
            ld, idx, trace = _warm_start(ds, mom, C, R, psi, exx, rng, m,
                                         cfg.warm_csteps, ds.n)
        except SingularCovarianceError:
            return None
        return (ld, t, idx, trace)

    results = _map_ordered(run_start, range(cfg.n_starts), threads)
    good = [r for r in results if r is not None]
    if not good:
        raise DegenerateDataError("every starting subset was singular after repair")
    good.sort(key=lambda r: (r[0], r[1]))
    kept = good[: cfg.n_keep]

    def finish(entry):
        _, t, idx, warm_trace = entry
        idx_f, trace = _kernels.cstep_iterate(C, R, psi, exx, idx, m,
                                              cfg.max_iter, cfg.tol)
        return (float(trace[-1]), t, idx_f,
                (warm_trace, tuple(float(v) for v in trace)))

    finished = _map_ordered(finish, kept, threads)
    best = min(finished, key=lambda r: (r[0], r[1]))
    traces = tuple((t, segments) for _, t, _, segments in
                   sorted(finished, key=lambda r: r[1]))
    return best[2], traces


def _chunk_sizes(total: int, k: int) -> list[int]:
    base, rem = divmod(total, k)
    return [base + (1 if j < rem else 0) for j in range(k)]


def _search_large(ds, mom, cfg, m, threads):
    """Partitioned search: warm starts inside disjoint chunks of a capped
    subsample, a merge stage on the whole subsample, finish on the full data."""
    n, p = ds.n, ds.p
    C, R = ds.centers, ds.ranges
    psi, exx = mom.mean, mom.cross

    rng0 = _stream(cfg.seed, _SUBSAMPLE_STREAM)
    n_merge = min(n, cfg.merge_cap)
    pool = (np.sort(rng0.choice(n, size=n_merge, replace=False))
            if n_merge < n else np.arange(n))
    perm = rng0.permutation(pool).astype(np.int64)
    k = min(5, math.ceil(n / 300))
    sizes = _chunk_sizes(n_merge, k)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    starts_per = max(1, cfg.n_starts // k)
    m_merge = max(p + 1, (n_merge * m) // n)

    merged_starts = []  # (logdet, restart id, merged-position idx, warm trace)
    for j in range(k):
        lo, hi = int(offsets[j]), int(offsets[j + 1])
        rows = perm[lo:hi]
        part = ds.take(rows)
        Cp = part.centers
        Rp = part.ranges
        m_sub = max(p + 1, (rows.shape[0] * m) // n)

        def run_start(t, _part=part, _Cp=Cp, _Rp=Rp, _m_sub=m_sub, _lo=lo, _j=j):
            gid = _j * starts_per + t
            rng = _stream(cfg.seed, gid)
            try:
                ld, idx, trace = _warm_start(_part, mom, _Cp, _Rp, psi, exx, rng,
                                             _m_sub, cfg.warm_csteps, _part.n)
            except SingularCovarianceError:
                return None
            return (ld, gid, (_lo + idx).astype(np.int64), trace)

        results = [r for r in _map_ordered(run_start, range(starts_per), threads)
                   if r is not None]
        results.sort(key=lambda r: (r[0], r[1]))
        merged_starts.extend(results[: cfg.n_keep])
    if not merged_starts:
        raise DegenerateDataError("every starting subset was singular after repair")

    C_m = np.ascontiguousarray(C[perm])
    R_m = np.ascontiguousarray(R[perm])

    def run_merge(entry):
        _, gid, idx, warm_trace = entry
        try:
            # the size-normalizing pass counts as the first warm step here
            _, idx0 = _kernels.cstep_pass(C_m, R_m, psi, exx, idx, m_merge)
            idx1, trace = _kernels.cstep_iterate(C_m, R_m, psi, exx, idx0, m_merge,
                                                 max(1, cfg.warm_csteps - 1), -1.0)
        except SingularCovarianceError:
            return None
        return (float(trace[-1]), gid, idx1,
                (warm_trace, tuple(float(v) for v in trace)))

    merged = [r for r in _map_ordered(run_merge, merged_starts, threads)
              if r is not None]
    if not merged:
        raise DegenerateDataError("merge stage lost every candidate")
    merged.sort(key=lambda r: (r[0], r[1]))
    merged = merged[: cfg.n_keep]

    def finish(entry):
        _, gid, idx, segments = entry
        gidx = np.sort(perm[idx]).astype(np.int64)
        try:
            _, idx0 = _kernels.cstep_pass(C, R, psi, exx, gidx, m)
            idx_f, trace = _kernels.cstep_iterate(C, R, psi, exx, idx0, m,
                                                  cfg.max_iter, cfg.tol)
        except SingularCovarianceError:
            return None
        return (float(trace[-1]), gid, idx_f,
                segments + (tuple(float(v) for v in trace),))

    finished = [r for r in _map_ordered(finish, merged, threads) if r is not None]
    if not finished:
        raise DegenerateDataError("no candidate survived the full-data stage")
    best = min(finished, key=lambda r: (r[0], r[1]))
    traces = tuple((gid, segments) for _, gid, _, segments in
                   sorted(finished, key=lambda r: r[1]))
    return best[2], traces


def imcd_fit(ds: IntervalDataset, mom: LatentMoments, cfg: ImcdConfig | None = None,
             threads: int = 1) -> ImcdFit:
    """Run the full multi-start search plus one-step reweighting.

    ``threads`` caps worker concurrency for the independent restarts; the
    result is identical at any thread count for a fixed config seed.
    """
    cfg = cfg if cfg is not None else ImcdConfig()
    if mom.p != ds.p:
        raise ValidationError("moments dimension must match the dataset")
    n, p = ds.n, ds.p
    m = cfg.resolve_m(n)
    if m < p + 1 or m > n:
        raise ValidationError(f"subset size m={m} must satisfy p+1 <= m <= n")

    if m == n:
        subset_idx = np.arange(n, dtype=np.int64)
        traces = ()
    elif n <= cfg.large_n_threshold:
        subset_idx, traces = _search_small(ds, mom, cfg, m, threads)
    else:
        subset_idx, traces = _search_large(ds, mom, cfg, m, threads)

    subset = np.zeros(n, dtype=np.uint8)
    subset[subset_idx] = 1
    w_raw = WeightVector(subset.astype(float))
    raw_center = barycenter(ds, w_raw)
    raw_cov = symbolic_cov(ds, w_raw, mom)
    raw_objective = objective_logdet(ds, mom, w_raw)
    dsq = cstep_distances(ds, mom, w_raw)
    keep, center, cov, cutoff = reweight(ds, mom, dsq, cfg.reweight)
    return ImcdFit(subset=subset, raw_center=raw_center, raw_cov=raw_cov,
                   raw_objective=raw_objective, distances=dsq, keep=keep,
                   center=center, cov=cov, cutoff=cutoff, traces=traces,
                   config=cfg)
