"""Univariate robust building blocks.

Median/MAD standardization, the medcouple skewness statistic, adjusted
boxplot fences, the Yeo-Johnson transform with a two-stage reweighted
maximum-likelihood parameter fit, and the farness score pipeline that turns
squared distances into probabilities in [0, 1].

The medcouple uses the O(n^2) kernel definition on purpose: every caller in
this package works at a few thousand observations, and the quadratic form
doubles as its own specification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DegenerateSpreadError, UnreliableFitError, ValidationError

MAD_CONSISTENCY = 1.4826

# two-sided standardized-score cutoff used by the reweighted ML fit
_YJ_WEIGHT_CUTOFF = float(ndtri(0.995))
_YJ_LAMBDA_RANGE = (-4.0, 6.0)
_MIN_FIT_OBS = 10


def _clean_vector(xs, name: str, min_n: int) -> np.ndarray:
    arr = np.asarray(xs, dtype=float).ravel()
    if arr.size < min_n:
        raise ValidationError(f"{name} needs at least {min_n} observations")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def median_mad_standardize(xs):
    """Standardize by the median and the consistency-scaled MAD.

    Returns ``(standardized, median, mad)`` where mad already includes the
    1.4826 factor that makes it unit-scale at the normal distribution.  A
    zero MAD (more than half the sample tied) is a degenerate-spread error.
    """
    x = _clean_vector(xs, "sample", 2)
    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med))) * MAD_CONSISTENCY
    if mad <= 0.0:
        raise DegenerateSpreadError("zero median absolute deviation")
    return (x - med) / mad, med, mad


def medcouple(xs) -> float:
    """Robust skewness in [-1, 1]: the median of the couple kernel
    h(x_i, x_j) = ((x_j - med) - (med - x_i)) / (x_j - x_i) over pairs with
    x_i <= med <= x_j, with the -1/0/+1 tie kernel when both sides equal the
    median."""
    x = np.sort(_clean_vector(xs, "sample", 3))
    med = float(np.median(x))
    z = x - med
    lower = z[z <= 0.0]
    upper = z[z >= 0.0]
    num = upper[:, None] + lower[None, :]
    den = upper[:, None] - lower[None, :]
    both_zero = (upper[:, None] == 0.0) & (lower[None, :] == 0.0)
    den[both_zero] = np.inf
    h = num / den
    t = int(np.sum(z == 0.0))
    if t:
        # tie kernel: -1 above the anti-diagonal, 0 on it, +1 below, laid over
        # the block pairing the t zero entries of each half
        block = np.ones((t, t)) - np.eye(t)
        block -= 2 * np.triu(block)
        h[:t, -t:] = np.fliplr(block)
    return float(np.median(h))


@dataclass(frozen=True)
class AdjustedFences:
    """Skewness-adjusted boxplot whiskers for one sample."""

    lower: float
    upper: float
    mc: float
    q1: float
    q3: float
    k: float


def fences_from_quartiles(q1: float, q3: float, mc: float, k: float) -> tuple[float, float]:
    """The two-case exponential whisker rule given quartiles and medcouple."""
    iqr = q3 - q1
    if mc >= 0:
        return q1 - k * math.exp(-4.0 * mc) * iqr, q3 + k * math.exp(3.0 * mc) * iqr
    return q1 - k * math.exp(-3.0 * mc) * iqr, q3 + k * math.exp(4.0 * mc) * iqr


def adjusted_fences(xs, k: float = 1.5) -> AdjustedFences:
    """Adjusted boxplot fences with type-7 quartiles; reduces to the classical
    Tukey fences when the medcouple is zero."""
    x = _clean_vector(xs, "sample", 4)
    if k <= 0:
        raise ValidationError("whisker coefficient k must be positive")
    q1 = float(np.quantile(x, 0.25))  # numpy default is type-7 interpolation
    q3 = float(np.quantile(x, 0.75))
    mc = medcouple(x)
    lower, upper = fences_from_quartiles(q1, q3, mc, k)
    return AdjustedFences(lower=lower, upper=upper, mc=mc, q1=q1, q3=q3, k=float(k))


def yeo_johnson(x, lam: float):
    """The four-branch Yeo-Johnson transform; monotone increasing in x for every
    lambda, identity at lambda = 1."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    if abs(lam) < 1e-300:
        out[pos] = np.log1p(x[pos])
    else:
        out[pos] = (np.power(x[pos] + 1.0, lam) - 1.0) / lam
    neg = ~pos
    if abs(lam - 2.0) < 1e-300:
        out[neg] = -np.log1p(-x[neg])
    else:
        out[neg] = -(np.power(1.0 - x[neg], 2.0 - lam) - 1.0) / (2.0 - lam)
    return out if out.ndim else float(out)


def yeo_johnson_inverse(y, lam: float):
    """Inverse of ``yeo_johnson`` in x for fixed lambda."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    pos = y >= 0
    if abs(lam) < 1e-300:
        out[pos] = np.expm1(y[pos])
    else:
        out[pos] = np.power(lam * y[pos] + 1.0, 1.0 / lam) - 1.0
    neg = ~pos
    if abs(lam - 2.0) < 1e-300:
        out[neg] = -np.expm1(-y[neg])
    else:
        out[neg] = 1.0 - np.power(1.0 - (2.0 - lam) * y[neg], 1.0 / (2.0 - lam))
    return out if out.ndim else float(out)


def _yj_profile_loglik(x: np.ndarray, lam: float) -> float:
    """Gaussian profile log-likelihood of the transformed sample (mean and
    variance profiled out), including the transform's log-Jacobian."""
    y = yeo_johnson(x, lam)
    var = float(np.var(y))
    if not np.isfinite(var) or var <= 0.0:
        return -np.inf
    jac = (lam - 1.0) * float(np.sum(np.sign(x) * np.log1p(np.abs(x))))
    return -0.5 * x.size * math.log(var) + jac


def _golden_max(f, lo: float, hi: float, tol: float = 1e-7) -> float:
    """Deterministic golden-section maximization on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def robust_yj_fit(xs) -> float:
    """Two-stage reweighted maximum-likelihood estimate of the Yeo-Johnson
    parameter for an already standardized sample.

    Stage 1 keeps observations whose standardized magnitude is within the
    0.995 normal quantile and maximizes the profile likelihood over
    lambda in [-4, 6] by golden-section search.  Stage 2 re-derives the
    weights from the stage-1 transformed-and-standardized values with the
    same cutoff and re-maximizes.  Fewer than 10 retained observations at
    either stage makes the fit unreliable and raises.
    """
    x = _clean_vector(xs, "sample", _MIN_FIT_OBS)
    lo, hi = _YJ_LAMBDA_RANGE
    keep = np.abs(x) <= _YJ_WEIGHT_CUTOFF
    if int(keep.sum()) < _MIN_FIT_OBS:
        raise UnreliableFitError("fewer than 10 observations retain weight")
    x1 = x[keep]
    lam1 = _golden_max(lambda l: _yj_profile_loglik(x1, l), lo, hi)
    t, _, _ = median_mad_standardize(yeo_johnson(x, lam1))
    keep2 = np.abs(t) <= _YJ_WEIGHT_CUTOFF
    if int(keep2.sum()) < _MIN_FIT_OBS:
        raise UnreliableFitError("fewer than 10 observations retain weight")
    x2 = x[keep2]
    return float(_golden_max(lambda l: _yj_profile_loglik(x2, l), lo, hi))


@dataclass(frozen=True)
class FarnessModel:
    """Frozen parameters of a fitted farness pipeline, enough to score new
    squared distances and to invert a score threshold back to distance units."""

    med1: float
    mad1: float
    yj_lambda: float
    med2: float
    mad2: float

    def score(self, dsq) -> np.ndarray:
        d = np.asarray(dsq, dtype=float)
        s = (d - self.med1) / self.mad1
        t = (yeo_johnson(s, self.yj_lambda) - self.med2) / self.mad2
        return ndtr(t)

    def inverse(self, prob: float) -> float:
        """The squared-distance value whose score equals ``prob``."""
        if not 0.0 < prob < 1.0:
            raise ValidationError("probability must lie in (0, 1)")
        t = self.med2 + self.mad2 * float(ndtri(prob))
        s = yeo_johnson_inverse(t, self.yj_lambda)
        return float(self.med1 + self.mad1 * s)

    def to_dict(self) -> dict:
        return {"med1": self.med1, "mad1": self.mad1, "yj_lambda": self.yj_lambda,
                "med2": self.med2, "mad2": self.mad2}

    @classmethod
    def from_dict(cls, d: dict) -> "FarnessModel":
        return cls(med1=float(d["med1"]), mad1=float(d["mad1"]),
                   yj_lambda=float(d["yj_lambda"]), med2=float(d["med2"]),
                   mad2=float(d["mad2"]))


def farness_scores(dsq):
    """Farness pipeline on a sample of squared distances.

    (1) median/MAD standardize, (2) robust Yeo-Johnson fit and transform,
    (3) median/MAD standardize again, (4) standard normal CDF.  Every stage is
    monotone, so scores are a non-decreasing function of the input distances.
    Returns ``(scores, model)`` with the fitted model usable out of sample.
    """
    d = _clean_vector(dsq, "squared distances", _MIN_FIT_OBS)
    if np.any(d < 0):
        raise ValidationError("squared distances must be non-negative")
    s1, med1, mad1 = median_mad_standardize(d)
    lam = robust_yj_fit(s1)
    s2, med2, mad2 = median_mad_standardize(yeo_johnson(s1, lam))
    model = FarnessModel(med1=med1, mad1=mad1, yj_lambda=lam, med2=med2, mad2=mad2)
    return np.asarray(ndtr(s2)), model


@dataclass(frozen=True)
class AdjBox:
    """Cutoff rule: upper adjusted-boxplot fence of the squared distances."""

    k: float = 1.5

    def cutoff(self, dsq) -> float:
        return adjusted_fences(dsq, self.k).upper

    def describe(self) -> str:
        return f"adjbox(k={self.k:g})"


@dataclass(frozen=True)
class Farness:
    """Cutoff rule: the squared distance at which the farness score crosses
    the threshold."""

    threshold: float = 0.975

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValidationError("farness threshold must lie in (0, 1)")

    def cutoff(self, dsq) -> float:
        _, model = farness_scores(dsq)
        return model.inverse(self.threshold)

    def describe(self) -> str:
        return f"farness({self.threshold:g})"
