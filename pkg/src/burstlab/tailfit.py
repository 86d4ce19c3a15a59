"""Burst-tail statistics: CCDF, cutoff selection, slope fit, bootstrap,
theoretical index, and the worst-case truncation bound.

The CCDF slope is fitted by ordinary least squares on log-log axes above a
cutoff chosen by an upper-quantile rule plus a stability descent. Points
with fewer than 3 exceedances (and the terminal zero-probability point)
are excluded; logs of near-zero probabilities destabilize the fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GrowthChannelInactive, ParameterError, TruncationUnavailable
from .estimators import nearest_rank_quantile
from .seeding import bootstrap_stream

MIN_EXCEEDANCES = 3
MIN_TAIL_POINTS = 10
BMIN_DESCENT_STRIDE = 5


def empirical_ccdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Distinct sample values b with P(B > b) = (#samples strictly above b)/N."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ParameterError("empty burst sample")
    values, counts = np.unique(x, return_counts=True)
    above = x.size - np.cumsum(counts)
    return values, above / x.size


class _TailRegression:
    """O(1)-per-cutoff suffix OLS over the valid log-log CCDF points."""

    def __init__(self, samples):
        x = np.asarray(samples, dtype=float)
        self.n = x.size
        values, ccdf = empirical_ccdf(x)
        exceed = np.round(ccdf * self.n).astype(int)
        valid = (exceed >= MIN_EXCEEDANCES) & (values > 0.0)
        self.values = values[valid]
        self.ccdf = ccdf[valid]
        lb = np.log(self.values)
        lp = np.log(self.ccdf)
        # suffix sums so that any tail b >= b_min fits in O(1)
        self.s1 = np.cumsum(np.ones_like(lb)[::-1])[::-1]
        self.sx = np.cumsum(lb[::-1])[::-1]
        self.sy = np.cumsum(lp[::-1])[::-1]
        self.sxx = np.cumsum((lb * lb)[::-1])[::-1]
        self.sxy = np.cumsum((lb * lp)[::-1])[::-1]

    def points_from(self, b_min: float) -> int:
        i = int(np.searchsorted(self.values, b_min, side="left"))
        return self.values.size - i

    def fit_from(self, b_min: float) -> tuple[float, float]:
        """(alpha_hat, intercept) of log P = intercept - alpha log b over b >= b_min."""
        i = int(np.searchsorted(self.values, b_min, side="left"))
        m = self.values.size - i
        if m < 2:
            raise ParameterError(f"fewer than 2 usable tail points above {b_min}")
        s1, sx, sy = self.s1[i], self.sx[i], self.sy[i]
        sxx, sxy = self.sxx[i], self.sxy[i]
        denom = s1 * sxx - sx * sx
        if denom <= 0.0:
            raise ParameterError("degenerate tail abscissas")
        slope = (s1 * sxy - sx * sy) / denom
        intercept = (sy - slope * sx) / s1
        return -slope, intercept


def fit_slope(samples, b_min: float) -> tuple[float, float]:
    """OLS slope of the empirical log-log CCDF over b >= b_min.

    Returns (alpha_hat, intercept); alpha_hat is the positive tail index.
    """
    return _TailRegression(samples).fit_from(b_min)


def select_bmin(
    samples,
    q_b: float = 0.9,
    stability: float = 0.05,
) -> tuple[float, bool]:
    """Tail cutoff: upper-quantile rule refined by a slope-stability descent.

    Starting from the nearest-rank q_b quantile, the cutoff walks down the
    sample order statistics (5 at a time) while the refitted slope stays
    within ``stability`` relative of the quantile-rule slope; the smallest
    stable cutoff wins. Returns (b_min, reliable) where ``reliable`` is
    False when fewer than 10 usable tail points sit above the quantile rule.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ParameterError("empty burst sample")
    reg = _TailRegression(x)
    b_q = nearest_rank_quantile(x, q_b)
    reliable = reg.points_from(b_q) >= MIN_TAIL_POINTS
    if reg.points_from(b_q) < 2:
        return b_q, False
    slope_q, _ = reg.fit_from(b_q)
    rank_q = int(np.ceil(q_b * x.size)) - 1
    best = b_q
    for rank in range(rank_q - BMIN_DESCENT_STRIDE, -1, -BMIN_DESCENT_STRIDE):
        cand = x[rank]
        if cand >= best:
            continue
        slope_c, _ = reg.fit_from(cand)
        if abs(slope_c - slope_q) <= abs(slope_q) * stability:
            best = cand
        else:
            break
    return float(best), reliable


@dataclass(frozen=True)
class BootstrapCI:
    level: float
    lo: float
    hi: float
    replicates: int
    skipped: int


def bootstrap_ci(
    samples,
    *,
    resamples: int = 1000,
    level: float = 0.95,
    q_b: float = 0.9,
    stability: float = 0.05,
    master_seed: int = 0,
) -> BootstrapCI:
    """Percentile bootstrap of the tail index over trajectory resamples.

    Each replicate redraws bursts with replacement and refits both the
    cutoff and the slope. Degenerate replicates (all values equal, or a
    tail too thin to fit) are skipped and counted.
    """
    x = np.asarray(samples, dtype=float)
    if resamples < 200:
        raise ParameterError("need at least 200 bootstrap resamples")
    alphas = []
    skipped = 0
    for r in range(resamples):
        rng = bootstrap_stream(master_seed, r)
        idx = rng.integers(0, x.size, x.size)
        xs = x[idx]
        if np.min(xs) == np.max(xs):
            skipped += 1
            continue
        try:
            b_min, _ = select_bmin(xs, q_b=q_b, stability=stability)
            alpha, _ = fit_slope(xs, b_min)
        except ParameterError:
            skipped += 1
            continue
        alphas.append(alpha)
    if not alphas:
        raise ParameterError("all bootstrap replicates degenerate")
    arr = np.array(alphas)
    lo = nearest_rank_quantile(arr, (1.0 - level) / 2.0)
    hi = nearest_rank_quantile(arr, (1.0 + level) / 2.0)
    return BootstrapCI(level=level, lo=float(lo), hi=float(hi),
                       replicates=len(alphas), skipped=skipped)


def theoretical_index(rate_unfavorable: float, gamma: float) -> float:
    """Predicted tail index: unfavorable exit rate over effective growth rate."""
    if gamma <= 0.0:
        raise GrowthChannelInactive(
            "no growth channel; heavy-tail mechanism inactive"
        )
    return rate_unfavorable / gamma


@dataclass(frozen=True)
class TailFit:
    """Fitted burst-tail summary for one scenario ensemble."""

    b_min: float
    alpha: float
    intercept: float
    ci: BootstrapCI
    points_used: int
    reliable: bool
    alpha_theory: float | None
    gamma_source: str
    sample_count: int

    def __post_init__(self):
        if self.ci is not None and not (self.ci.lo <= self.alpha <= self.ci.hi):
            # percentile CIs can miss the point estimate on skewed small
            # samples; record rather than fail
            object.__setattr__(self, "reliable", False)


def fit_tail(
    samples,
    *,
    q_b: float = 0.9,
    stability: float = 0.05,
    resamples: int = 1000,
    level: float = 0.95,
    master_seed: int = 0,
    alpha_theory: float | None = None,
    gamma_source: str = "hybrid",
) -> TailFit:
    b_min, reliable = select_bmin(samples, q_b=q_b, stability=stability)
    alpha, intercept = fit_slope(samples, b_min)
    ci = bootstrap_ci(
        samples, resamples=resamples, level=level, q_b=q_b,
        stability=stability, master_seed=master_seed,
    )
    reg = _TailRegression(samples)
    return TailFit(
        b_min=b_min, alpha=alpha, intercept=intercept, ci=ci,
        points_used=reg.points_from(b_min), reliable=reliable,
        alpha_theory=alpha_theory, gamma_source=gamma_source,
        sample_count=int(np.asarray(samples).size),
    )


def truncation_bound(
    a_star: float,
    rho: float,
    kappa: float,
    m_c: float,
    horizon: float,
    min_dwell: float,
    x0_norm: float,
    f_sup: float,
) -> float:
    """Worst-case burst bound under the mitigation contraction assumption.

    Composes ceil(T / min_dwell) rounds of the affine growth map
    u -> e^(A* T) u + T e^(A* T) f_sup followed by the contraction
    u -> rho u + (M_c / kappa) f_sup, tracking the pre-contraction peak of
    every round; the bound is the largest peak (or the initial norm).
    Computed in log space; may overflow to inf for large A* T, which is
    still a valid (vacuous) bound.
    """
    if not rho < 1.0:
        raise TruncationUnavailable(
            f"contraction factor rho={rho} >= 1; only exponent improvement applies"
        )
    if min_dwell <= 0.0 or horizon <= 0.0:
        raise ParameterError("horizon and min_dwell must be positive")
    if kappa <= 0.0:
        raise ParameterError("contraction rate kappa must be positive")
    rounds = math.ceil(horizon / min_dwell)
    growth = a_star * horizon  # log of the per-round growth factor

    def logadd(a, b):
        if a == -math.inf:
            return b
        if b == -math.inf:
            return a
        hi, lo = max(a, b), min(a, b)
        return hi + math.log1p(math.exp(lo - hi))

    log_f = math.log(f_sup) if f_sup > 0.0 else -math.inf
    log_drive = (math.log(horizon) + growth + log_f) if f_sup > 0.0 else -math.inf
    log_inject = (math.log(m_c / kappa) + log_f) if f_sup > 0.0 else -math.inf
    log_rho = math.log(rho)

    log_u = math.log(x0_norm) if x0_norm > 0.0 else -math.inf
    log_peak_best = log_u
    for _ in range(rounds):
        log_peak = logadd(growth + log_u, log_drive)
        log_peak_best = max(log_peak_best, log_peak)
        log_u = logadd(log_rho + log_peak, log_inject)
    if log_peak_best == -math.inf:
        return 0.0
    return float(math.exp(log_peak_best)) if log_peak_best < 709.0 else math.inf
