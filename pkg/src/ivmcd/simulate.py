"""Simulation scenarios, evaluation metrics, and the estimator/detector grid.

Scenarios draw (centers, ranges) jointly Gaussian with per-variable scales
growing linearly in the variable index, a mean-shift contamination applied
to the first variable's centers and/or ranges, and either uniform or
asymmetric-triangular latent variables.  Ground-truth symbolic covariance
comes from the population parameters, so estimators can be scored with the
relative Frobenius error, Gaussian KL divergence, and eigenvalue-angle
error; detectors are scored with the usual confusion-matrix family.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import (Barycenter, IntervalDataset, SymbolicCov, WeightVector,
                   assemble_symbolic_cov_blocks, barycenter, symbolic_cov)
from .errors import (DegenerateDataError, DegenerateSpreadError,
                     SingularCovarianceError, UnreliableFitError,
                     ValidationError)
from .estimator import ImcdConfig, imcd_fit, reweight
from .latent import LatentSpec, build_moments
from .outlier import MallowsAdjBox, detect_outliers
from .univariate import AdjBox, Farness

CENTER_SHIFT = 2.0
RANGE_SHIFT = 5.0
RANGE_MEAN = 3.0

SCHEMES = ("center", "range", "both")
LATENTS = ("uniform", "triangular")

COV_ESTIMATORS = ("raw.Classic", "raw.IMCD", "adjbox.IMCD", "farness.IMCD")
DETECTORS = ("adjbox.Classic", "adjbox.Classic_Mallows", "adjbox.IMCD", "farness.IMCD")
COV_METRICS = ("frobenius_rel", "kl", "angle")
DET_METRICS = ("pr1", "re1", "pr0", "re0", "acc", "f1", "gmean")


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation cell.

    ``scheme`` picks which first-variable means are shifted for contaminated
    rows; ``latent`` picks uniform or asymmetric-triangular microdata (the
    triangular modes are drawn once per variable from Unif(-0.5, -0.2)).
    ``corr_block`` switches on the correlated first-pair variant.
    """

    p: int
    n: int
    epsilon: float
    scheme: str = "center"
    latent: str = "uniform"
    corr_block: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.p < 1 or self.n < 1:
            raise ValidationError("p and n must be positive")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValidationError("epsilon must lie in [0, 1)")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}")
        if self.latent not in LATENTS:
            raise ValidationError(f"latent must be one of {LATENTS}")

    @property
    def scenario_id(self) -> int:
        """The 1..6 scenario numbering: uniform latents are 1-3, triangular 4-6,
        ordered center/range/both within each group."""
        return SCHEMES.index(self.scheme) + 1 + (3 if self.latent == "triangular" else 0)


def _population_cov_2p(cfg: ScenarioConfig) -> np.ndarray:
    p = cfg.p
    sd = np.array([3.0 * (j + 1) / (4.0 * p) for j in range(p)])
    sd2p = np.concatenate([sd, sd])
    corr = np.eye(2 * p)
    for j in range(p):
        rho = 0.1 if (j + 1) % 2 == 1 else -0.1
        corr[j, p + j] = corr[p + j, j] = rho
    if cfg.corr_block:
        if p < 2:
            raise ValidationError("corr_block needs at least two variables")
        corr[0, 1] = corr[1, 0] = 0.8
        corr[p, p + 1] = corr[p + 1, p] = 0.8
        corr[0, p + 1] = corr[p + 1, 0] = 0.1
        corr[1, p] = corr[p, 1] = 0.1
    return corr * np.outer(sd2p, sd2p)


def _shift_vector(cfg: ScenarioConfig) -> np.ndarray:
    shift = np.zeros(2 * cfg.p)
    if cfg.scheme in ("center", "both"):
        shift[0] = CENTER_SHIFT
    if cfg.scheme in ("range", "both"):
        shift[cfg.p] = RANGE_SHIFT
    return shift


def generate_scenario(cfg: ScenarioConfig):
    """Draw one labelled dataset plus its ground-truth barycenter/covariance.

    Contaminated rows are base draws plus a constant mean shift (identical
    covariance).  Rows with a negative range are redrawn so the dataset stays
    valid; the shift never targets positions, so outliers are scattered by a
    final permutation.
    """
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=(cfg.seed & 0xFFFFFFFFFFFFFFFF, 0x5C3)))
    p, n = cfg.p, cfg.n
    if cfg.latent == "uniform":
        specs = tuple(LatentSpec.uniform() for _ in range(p))
    else:
        modes = rng.uniform(-0.5, -0.2, size=p)
        specs = tuple(LatentSpec.triangular(mo) for mo in modes)
    mom = build_moments(specs)

    cov2p = _population_cov_2p(cfg)
    chol = np.linalg.cholesky(cov2p)
    mean = np.concatenate([np.zeros(p), np.full(p, RANGE_MEAN)])
    shift = _shift_vector(cfg)

    n_out = int(cfg.epsilon * n)
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_out] = 1

    x = mean + rng.standard_normal((n, 2 * p)) @ chol.T
    x[:n_out] += shift
    for _ in range(10_000):
        bad = np.flatnonzero((x[:, p:] < 0).any(axis=1))
        if bad.size == 0:
            break
        redraw = mean + rng.standard_normal((bad.size, 2 * p)) @ chol.T
        redraw[labels[bad] == 1] += shift
        x[bad] = redraw
    else:
        raise DegenerateDataError("could not draw non-negative ranges")

    order = rng.permutation(n)
    x = x[order]
    labels = labels[order]

    ds = IntervalDataset(x[:, :p], x[:, p:], specs, labels)
    truth_cov = SymbolicCov(assemble_symbolic_cov_blocks(
        cov2p[:p, :p], cov2p[:p, p:], cov2p[p:, p:], mom))
    truth_center = Barycenter(np.zeros(p), np.full(p, RANGE_MEAN))
    return ds, truth_cov, truth_center


def frobenius_rel_error(est, truth) -> float:
    """Frobenius norm of the error relative to the truth's norm."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValidationError("matrices must have the same shape")
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        raise ValidationError("ground-truth matrix has zero norm")
    return float(np.linalg.norm(est - truth)) / denom


def kl_divergence_gauss(est, truth) -> float:
    """KL divergence between equal-mean Gaussians with the two covariances:
    (tr(truth^-1 est) + log det truth - log det est - p) / 2."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    p = est.shape[0]
    sign_e, logdet_e = np.linalg.slogdet(est)
    sign_t, logdet_t = np.linalg.slogdet(truth)
    if sign_e <= 0 or sign_t <= 0:
        raise SingularCovarianceError("KL divergence needs positive definite inputs")
    tr = float(np.trace(np.linalg.solve(truth, est)))
    return 0.5 * (tr + logdet_t - logdet_e - p)


def angle_error(est, truth) -> float:
    """One minus the cosine between the sorted eigenvalue vectors."""
    a_est = np.linalg.eigvalsh(np.asarray(est, dtype=float))
    a_tru = np.linalg.eigvalsh(np.asarray(truth, dtype=float))
    na, nt = float(np.linalg.norm(a_est)), float(np.linalg.norm(a_tru))
    if na == 0.0 or nt == 0.0:
        raise ValidationError("eigenvalue vector has zero norm")
    return 1.0 - float(a_est @ a_tru) / (na * nt)


def classification_metrics(flags, labels) -> dict[str, float]:
    """Confusion-matrix metrics for the outlier (1) and regular (0) classes.

    Empty-denominator conventions: a precision with no predictions of that
    class is 0 when the class exists, 1 when it does not (vacuous); a recall
    with no members of that class is 1 (vacuous); F1 is 0 when Pr + Re = 0.
    These keep Acc = (TP+TN)/n and Gmean^2 = Re0*Re1 exact and avoid NaNs.
    """
    flags = np.asarray(flags).astype(np.int64).ravel()
    labels = np.asarray(labels).astype(np.int64).ravel()
    if flags.shape != labels.shape:
        raise ValidationError("flags and labels must have equal length")
    tp = int(np.sum((flags == 1) & (labels == 1)))
    tn = int(np.sum((flags == 0) & (labels == 0)))
    fp = int(np.sum((flags == 1) & (labels == 0)))
    fn = int(np.sum((flags == 0) & (labels == 1)))
    n = tp + tn + fp + fn

    def ratio(num, den, vacuous):
        return num / den if den > 0 else vacuous

    pr1 = ratio(tp, tp + fp, 0.0 if (tp + fn) > 0 else 1.0)
    re1 = ratio(tp, tp + fn, 1.0)
    pr0 = ratio(tn, tn + fn, 0.0 if (tn + fp) > 0 else 1.0)
    re0 = ratio(tn, tn + fp, 1.0)
    f1 = 0.0 if pr1 + re1 == 0.0 else 2.0 * pr1 * re1 / (pr1 + re1)
    return {"pr1": pr1, "re1": re1, "pr0": pr0, "re0": re0,
            "acc": (tp + tn) / n, "f1": f1, "gmean": math.sqrt(re0 * re1)}


# ---------------------------------------------------------------------------
# Grid runner
# ---------------------------------------------------------------------------


def paper_grid() -> list[ScenarioConfig]:
    """The full factorial: P in {5, 20} x N in {500, 1000} x eps in
    {0, 0.05, 0.1, 0.2} x 3 schemes x 2 latent families (96 cells)."""
    cells = []
    for latent in LATENTS:
        for scheme in SCHEMES:
            for p in (5, 20):
                for n in (500, 1000):
                    for eps in (0.0, 0.05, 0.1, 0.2):
                        cells.append(ScenarioConfig(p=p, n=n, epsilon=eps,
                                                    scheme=scheme, latent=latent))
    return cells


def _rep_seeds(seed: int, cell_index: int, rep: int) -> tuple[int, int]:
    ss = np.random.SeedSequence(entropy=(seed & 0xFFFFFFFFFFFFFFFF,
                                         cell_index, rep))
    state = ss.generate_state(2)
    return int(state[0]), int(state[1])


def _run_rep(cfg: ScenarioConfig, cell_index: int, rep: int, seed: int,
             imcd_defaults: ImcdConfig) -> list[tuple[str, str, float]]:
    """All (method, metric, value) rows for one replicate of one cell."""
    data_seed, fit_seed = _rep_seeds(seed, cell_index, rep)
    ds, truth_cov, _ = generate_scenario(
        ScenarioConfig(p=cfg.p, n=cfg.n, epsilon=cfg.epsilon, scheme=cfg.scheme,
                       latent=cfg.latent, corr_block=cfg.corr_block,
                       seed=data_seed))
    mom = build_moments(ds.specs)
    labels = ds.labels
    rows: list[tuple[str, str, float]] = []

    w_all = WeightVector(np.ones(ds.n))
    classic_center = barycenter(ds, w_all)
    classic_cov = symbolic_cov(ds, w_all, mom)

    def cov_rows(method, matrix):
        rows.append((method, "frobenius_rel",
                     frobenius_rel_error(matrix, truth_cov.matrix)))
        rows.append((method, "kl", kl_divergence_gauss(matrix, truth_cov.matrix)))
        rows.append((method, "angle", angle_error(matrix, truth_cov.matrix)))

    def det_rows(method, flags):
        for metric, value in classification_metrics(flags, labels).items():
            rows.append((method, metric, value))

    def error_row(method):
        rows.append((method, "error", 1.0))

    numeric_errors = (SingularCovarianceError, DegenerateDataError,
                      DegenerateSpreadError, UnreliableFitError)

    cov_rows("raw.Classic", classic_cov.matrix)

    fit = None
    try:
        fit = imcd_fit(ds, mom, replace(imcd_defaults, seed=fit_seed))
    except numeric_errors:
        for method in ("raw.IMCD", "adjbox.IMCD", "farness.IMCD"):
            error_row(method)

    adj_est = far_est = None
    if fit is not None:
        cov_rows("raw.IMCD", fit.raw_cov.matrix)
        try:
            _, adj_center, adj_cov, _ = reweight(ds, mom, fit.distances, AdjBox(1.5))
            adj_est = (adj_center, adj_cov)
            cov_rows("adjbox.IMCD", adj_cov.matrix)
        except numeric_errors:
            error_row("adjbox.IMCD")
        try:
            _, far_center, far_cov, _ = reweight(ds, mom, fit.distances,
                                                 Farness(0.975))
            far_est = (far_center, far_cov)
            cov_rows("farness.IMCD", far_cov.matrix)
        except numeric_errors:
            error_row("farness.IMCD")

    detector_plans = [
        ("adjbox.Classic", (classic_center, classic_cov), AdjBox(1.5)),
        ("adjbox.Classic_Mallows", (classic_center, classic_cov), MallowsAdjBox(1.5)),
        ("adjbox.IMCD", adj_est, AdjBox(1.5)),
        ("farness.IMCD", far_est, Farness(0.95)),
    ]
    for method, est, rule in detector_plans:
        if est is None:
            error_row(method)
            continue
        try:
            report = detect_outliers(ds, est[0], est[1], mom, rule,
                                     estimator="classical" if "Classic" in method
                                     else "imcd")
            det_rows(method, report.flags)
        except numeric_errors:
            error_row(method)
    return rows


def run_grid(cells, reps: int, seed: int = 0, threads: int = 1,
             imcd_config: ImcdConfig | None = None) -> list[dict]:
    """Run every (cell, rep), returning tidy rows in deterministic order.

    Cells/reps are independent; ``threads`` parallelizes replicates while the
    output order and values stay identical at any thread count.
    """
    cells = list(cells)
    if reps < 1:
        raise ValidationError("reps must be positive")
    defaults = imcd_config if imcd_config is not None else ImcdConfig()
    jobs = [(ci, rep) for ci in range(len(cells)) for rep in range(reps)]

    def work(job):
        ci, rep = job
        return _run_rep(cells[ci], ci, rep, seed, defaults)

    if threads <= 1:
        results = [work(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))

    table = []
    for (ci, rep), rows in zip(jobs, results):
        cfg = cells[ci]
        for method, metric, value in rows:
            table.append({
                "scenario": cfg.scenario_id, "p": cfg.p, "n": cfg.n,
                "epsilon": cfg.epsilon, "scheme": cfg.scheme,
                "latent": cfg.latent, "method": method, "rep": rep,
                "metric": metric, "value": float(value),
            })
    return table


RESULT_COLUMNS = ("scenario", "p", "n", "epsilon", "scheme", "latent",
                  "method", "rep", "metric", "value")


def write_results_csv(path, table) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in table:
            writer.writerow([row["scenario"], row["p"], row["n"],
                             repr(float(row["epsilon"])), row["scheme"],
                             row["latent"], row["method"], row["rep"],
                             row["metric"], repr(float(row["value"]))])


def results_csv_bytes(table) -> bytes:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(RESULT_COLUMNS)
    for row in table:
        writer.writerow([row["scenario"], row["p"], row["n"],
                         repr(float(row["epsilon"])), row["scheme"],
                         row["latent"], row["method"], row["rep"],
                         row["metric"], repr(float(row["value"]))])
    return buf.getvalue().encode()


def cells_from_config(config: dict) -> list[ScenarioConfig]:
    """Parse a grid JSON: {"cells": [{"p":5,"n":500,"epsilon":0.1,...}]}.

    Unknown keys are rejected by name so typos cannot silently change a study.
    """
    if not isinstance(config, dict) or "cells" not in config:
        raise ValidationError('grid config must be an object with a "cells" list')
    allowed = {"p", "n", "epsilon", "scheme", "latent", "corr_block"}
    cells = []
    for i, entry in enumerate(config["cells"]):
        if not isinstance(entry, dict):
            raise ValidationError(f"cell {i} must be an object")
        for key in entry:
            if key not in allowed:
                raise ValidationError(f"cell {i}: unknown key {key!r}")
        if "p" not in entry or "n" not in entry or "epsilon" not in entry:
            raise ValidationError(f"cell {i}: p, n, and epsilon are required")
        cells.append(ScenarioConfig(
            p=int(entry["p"]), n=int(entry["n"]), epsilon=float(entry["epsilon"]),
            scheme=str(entry.get("scheme", "center")),
            latent=str(entry.get("latent", "uniform")),
            corr_block=bool(entry.get("corr_block", False))))
    if not cells:
        raise ValidationError("grid config has no cells")
    return cells
