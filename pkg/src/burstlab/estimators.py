"""Estimators for the unfavorable growth rate and alignment diagnostics.

Three complementary estimates of the growth rate active during
uncontrolled unfavorable dwells: the operator susceptibility (instantaneous
upper envelope), dwell-level log-growth of the state norm, and a
cone-restricted window rate conditioned on alignment with the top
symmetric direction. High quantiles summarize the dwell and cone samples
because bursts are driven by the most amplifying episodes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .integrator import Trajectory
from .model import Forcing, LiftedOperator, MODE_NORMAL


@dataclass(frozen=True)
class DwellInterval:
    """Maximal uncontrolled stay in one regime along one trajectory."""

    trajectory: int
    t_start: float
    t_end: float
    regime: str
    mode: int
    norm_start: float
    norm_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


def nearest_rank_quantile(samples, q: float) -> float:
    """Ceiling nearest-rank quantile of a 1-D sample."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ParameterError("quantile of empty sample")
    if not 0.0 < q <= 1.0:
        raise ParameterError(f"quantile level must be in (0,1], got {q}")
    rank = int(np.ceil(q * x.size))
    return float(x[max(rank, 1) - 1])


def detect_uncontrolled_dwells(
    traj: Trajectory, regime: str, min_len: float, trajectory_index: int = 0
) -> list[DwellInterval]:
    """Maximal intervals with the given regime active and mode normal.

    Works on the event timeline (regime jumps, mode changes, horizon ends),
    between which both labels are constant. State norms at the interval
    endpoints come from the event records.
    """
    labels = traj.path.labels
    want = labels.index(regime)
    ts = traj.event_t
    zs = traj.event_regime_idx
    ms = traj.event_mode
    xn = traj.event_state_norm
    out = []
    start = None
    start_norm = 0.0
    for i in range(ts.size):
        active = zs[i] == want and ms[i] == MODE_NORMAL
        if active and start is None:
            start = ts[i]
            start_norm = xn[i]
        elif not active and start is not None:
            if ts[i] - start >= min_len:
                out.append(DwellInterval(
                    trajectory=trajectory_index, t_start=float(start), t_end=float(ts[i]),
                    regime=regime, mode=MODE_NORMAL,
                    norm_start=float(start_norm), norm_end=float(xn[i]),
                ))
            start = None
    if start is not None and ts.size:
        t_end = float(ts[-1])
        if t_end - start >= min_len and t_end > start:
            out.append(DwellInterval(
                trajectory=trajectory_index, t_start=float(start), t_end=t_end,
                regime=regime, mode=MODE_NORMAL,
                norm_start=float(start_norm), norm_end=float(xn[-1]),
            ))
    return out


def gamma_dwell(intervals, q: float = 0.9):
    """Per-dwell growth exponents and their nearest-rank q-quantile.

    gamma_hat = log(||X(t1)|| / ||X(t0)||) / (t1 - t0); intervals starting
    from a zero-norm state are skipped with a warning.
    """
    if not intervals:
        raise ParameterError("no dwell intervals supplied")
    samples = []
    skipped = 0
    for iv in intervals:
        if iv.norm_start <= 0.0 or iv.norm_end <= 0.0:
            skipped += 1
            continue
        samples.append(np.log(iv.norm_end / iv.norm_start) / iv.duration)
    if skipped:
        warnings.warn(f"skipped {skipped} dwell(s) with zero endpoint norm", stacklevel=2)
    samples = np.array(samples, dtype=float)
    if samples.size == 0:
        return samples, None
    return samples, nearest_rank_quantile(samples, q)


def gamma_operator(op: LiftedOperator) -> float:
    """Susceptibility of the uncontrolled unfavorable operator."""
    if op.mode != MODE_NORMAL:
        raise ParameterError("operator estimator expects the normal-mode operator")
    return op.susceptibility


def alignment_ratio(x, v) -> float:
    """Cosine of the angle between a lifted state and a unit direction."""
    x = np.asarray(x, dtype=float)
    nx = np.linalg.norm(x)
    if nx == 0.0:
        return float("nan")
    return float(np.dot(v, x) / nx)


def gamma_cone(
    trajectories,
    regime: str,
    alpha: float,
    window_steps: int,
    q: float = 0.9,
):
    """Cone-restricted window growth rate over an ensemble.

    Pools rates log(||X(t+D)|| / ||X(t)||) / D over all grid times t with
    the regime unfavorable, mode normal, and alignment >= alpha at the
    window start. Returns (pooled samples, q-quantile or None).
    """
    if window_steps < 2:
        raise ParameterError("cone window must span at least 2 grid steps")
    pooled = []
    for traj in trajectories:
        pooled.append(cone_window_rates(traj, regime, alpha, window_steps))
    samples = np.concatenate(pooled) if pooled else np.array([])
    if samples.size == 0:
        return samples, None
    return samples, nearest_rank_quantile(samples, q)


def cone_window_rates(traj: Trajectory, regime: str, alpha: float, window_steps: int):
    """Qualifying window rates of a single trajectory (see gamma_cone)."""
    want = traj.path.labels.index(regime)
    xn = traj.state_norm
    t = traj.grid_t
    w = window_steps
    if t.size <= w:
        return np.array([])
    ok = (
        (traj.regime_idx[:-w] == want)
        & (traj.mode[:-w] == MODE_NORMAL)
        & (traj.alignment[:-w] >= alpha)
        & (xn[:-w] > 0.0)
        & (xn[w:] > 0.0)
    )
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return np.array([])
    dt = t[idx + w] - t[idx]
    return np.log(xn[idx + w] / xn[idx]) / dt


def forcing_projection_diagnostic(
    forcing: Forcing, v, horizon: float, points: int = 2001
) -> tuple[float, float]:
    """Minimum and mean of the forcing projection on a direction over [0, T].

    A negative minimum is expected for sinusoidal forcing and is reported,
    not raised.
    """
    v = np.asarray(v, dtype=float)
    ts = np.linspace(0.0, horizon, points)
    proj = v[forcing.node] * forcing.amplitude * np.sin(forcing.omega * ts)
    return float(np.min(proj)), float(np.mean(proj))


@dataclass(frozen=True)
class GammaEstimates:
    """The three growth-rate estimates with sample counts and spreads."""

    operator: float
    dwell_quantile: float | None
    dwell_count: int
    dwell_mean: float | None
    dwell_std_error: float | None
    cone_quantile: float | None
    cone_count: int
    cone_alpha: float
    cone_window: float
    quantile_level: float

    def hybrid(self) -> float | None:
        """Conservative min of operator and cone estimates (cone may be missing)."""
        if self.cone_quantile is None:
            return self.operator
        return min(self.operator, self.cone_quantile)


def estimate_gammas(
    op_u0: LiftedOperator,
    dwell_intervals,
    trajectories,
    *,
    regime: str = "U",
    q: float = 0.9,
    cone_alpha: float = 0.5,
    cone_window_steps: int = 10,
    grid_dt: float,
) -> GammaEstimates:
    g_op = gamma_operator(op_u0)
    if dwell_intervals:
        d_samples, d_q = gamma_dwell(dwell_intervals, q)
    else:
        d_samples, d_q = np.array([]), None
    c_samples, c_q = gamma_cone(trajectories, regime, cone_alpha, cone_window_steps, q)
    return GammaEstimates(
        operator=g_op,
        dwell_quantile=d_q,
        dwell_count=int(d_samples.size),
        dwell_mean=float(np.mean(d_samples)) if d_samples.size else None,
        dwell_std_error=(
            float(np.std(d_samples, ddof=1) / np.sqrt(d_samples.size))
            if d_samples.size > 1 else None
        ),
        cone_quantile=c_q,
        cone_count=int(c_samples.size),
        cone_alpha=cone_alpha,
        cone_window=cone_window_steps * grid_dt,
        quantile_level=q,
    )
