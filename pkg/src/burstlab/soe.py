"""Sum-of-exponentials fits to completely monotone kernels.

A target kernel g(t) is approximated on [0, T] by
g_K(t) = sum_k w_k exp(-r_k t) with w_k >= 0 and rates fixed on a
logarithmic grid; the weights solve a nonnegative least-squares problem by
a Lawson-Hanson active-set iteration. Nonnegativity keeps the discrete
kernel completely monotone, which the lifted dynamics rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvergenceError, ParameterError

DESIGN_GRID_POINTS = 400
CHECK_GRID_POINTS = 400
KKT_TOL = 1e-8


@dataclass(frozen=True)
class KernelTarget:
    """Completely monotone target kernel on a finite horizon.

    kind:
      "power_law"   g(t) = (offset + t)^(-exponent)
      "exp_sum"     g(t) = sum_i weight_i * exp(-rate_i t)
      "tabulated"   samples (t_j, g_j), linearly interpolated in between
    """

    kind: str
    horizon: float
    exponent: float = 1.5
    offset: float = 1.0
    terms: tuple[tuple[float, float], ...] = ()
    times: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.horizon <= 0.0 or not math.isfinite(self.horizon):
            raise ParameterError(f"horizon must be positive, got {self.horizon}")
        if self.kind == "power_law":
            if self.offset <= 0.0 or self.exponent <= 0.0:
                raise ParameterError("power_law needs positive offset and exponent")
        elif self.kind == "exp_sum":
            if not self.terms:
                raise ParameterError("exp_sum needs at least one (weight, rate) term")
            for w, r in self.terms:
                if r <= 0.0:
                    raise ParameterError(f"exp_sum rate must be positive, got {r}")
        elif self.kind == "tabulated":
            t = np.asarray(self.times, dtype=float)
            g = np.asarray(self.values, dtype=float)
            if t.size == 0 or t.size != g.size:
                raise ParameterError("tabulated kernel needs matching nonempty times/values")
            if np.any(np.diff(t) <= 0.0):
                raise ParameterError("tabulated sample times must be strictly increasing")
            if t[0] < 0.0 or t[-1] > self.horizon:
                raise ParameterError("tabulated sample times must lie within [0, horizon]")
            if not np.all(np.isfinite(g)):
                raise ParameterError("tabulated kernel values must be finite")
        else:
            raise ParameterError(f"unknown kernel kind {self.kind!r}")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "power_law":
            return (self.offset + t) ** (-self.exponent)
        if self.kind == "exp_sum":
            out = np.zeros_like(t, dtype=float)
            for w, r in self.terms:
                out += w * np.exp(-r * t)
            return out
        return np.interp(t, self.times, self.values)


@dataclass(frozen=True)
class SOEKernel:
    """Nonnegative sum-of-exponentials approximation with its fit error."""

    weights: np.ndarray
    rates: np.ndarray
    eps_rel: float
    kkt_residual: float = 0.0
    non_unique: bool = False
    residual_norm: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        r = np.asarray(self.rates, dtype=float)
        if w.shape != r.shape or w.ndim != 1:
            raise ParameterError("weights and rates must be 1-D arrays of equal length")
        if np.any(w < 0.0):
            raise ParameterError("weights must be nonnegative")
        if np.any(r <= 0.0) or np.any(np.diff(r) <= 0.0):
            raise ParameterError("rates must be positive and strictly increasing")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)

    @property
    def order(self) -> int:
        return self.weights.size

    def scaled(self, gain: float) -> "SOEKernel":
        if gain < 0.0:
            raise ParameterError("gain must be nonnegative")
        return replace(self, weights=self.weights * gain)


def make_log_grid(r_min: float, r_max: float, k: int) -> np.ndarray:
    """Geometric rate grid r_min * (r_max/r_min)^((j-1)/(K-1)), j = 1..K."""
    if not (0.0 < r_min < r_max):
        raise ParameterError(f"need 0 < r_min < r_max, got ({r_min}, {r_max})")
    if k < 2:
        raise ParameterError(f"need at least 2 grid points, got {k}")
    return r_min * (r_max / r_min) ** (np.arange(k) / (k - 1))


def default_design_times(horizon: float) -> np.ndarray:
    """t = 0 plus a log-spaced grid resolving all rate decades up to T."""
    return np.concatenate(
        [[0.0], np.geomspace(horizon / 1e4, horizon, DESIGN_GRID_POINTS)]
    )


def default_check_times(horizon: float) -> np.ndarray:
    return np.concatenate(
        [[0.0], np.geomspace(horizon / 1e4, horizon, CHECK_GRID_POINTS)]
    )


def nnls(design: np.ndarray, target: np.ndarray, max_iter: int | None = None):
    """Lawson-Hanson nonnegative least squares.

    Active-set iteration with QR inner solves. Returns (weights,
    kkt_residual, non_unique). The iteration cap is 10 columns' worth of
    active-set changes; convex programs this small terminate well before.
    """
    g = np.asarray(design, dtype=float)
    y = np.asarray(target, dtype=float)
    m, k = g.shape
    if y.shape != (m,):
        raise ParameterError("design rows and target length differ")
    cap = max_iter if max_iter is not None else max(10 * k, 30)
    scale = max(np.max(np.abs(g.T @ y)), 1.0)

    x = np.zeros(k)
    passive = np.zeros(k, dtype=bool)
    non_unique = False
    iters = 0
    while True:
        grad = g.T @ (y - g @ x)
        candidates = ~passive
        if not np.any(candidates) or np.max(grad[candidates]) <= 1e-10 * scale:
            break
        if iters >= cap:
            raise ConvergenceError(
                "NNLS active-set cap exceeded",
                diagnostics={"iterations": iters, "active": int(passive.sum())},
            )
        iters += 1
        j = np.flatnonzero(candidates)[np.argmax(grad[candidates])]
        passive[j] = True
        while True:
            cols = np.flatnonzero(passive)
            sub = g[:, cols]
            q, r = np.linalg.qr(sub)
            diag = np.abs(np.diag(r))
            if diag.size and np.min(diag) <= 1e-12 * max(np.max(diag), 1.0):
                non_unique = True
                z_sub, *_ = np.linalg.lstsq(sub, y, rcond=None)
            else:
                z_sub = np.linalg.solve(r, q.T @ y)
            z = np.zeros(k)
            z[cols] = z_sub
            if np.all(z_sub > 0.0):
                x = z
                break
            mask = passive & (z <= 0.0)
            ratio = x[mask] / (x[mask] - z[mask])
            alpha = np.min(ratio)
            x = x + alpha * (z - x)
            passive &= x > 1e-12 * max(1.0, float(np.max(np.abs(x))))
            x[~passive] = 0.0

    grad = g.T @ (y - g @ x)
    kkt = max(
        float(np.max(np.abs(grad[passive]), initial=0.0)),
        float(np.max(grad[~passive], initial=0.0)),
    )
    return x, kkt / scale, non_unique


def fit_nnls(target: KernelTarget, rates, design_times=None) -> SOEKernel:
    """Fit nonnegative weights for fixed rates by least squares on a design grid."""
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 1 or rates.size == 0 or np.any(rates <= 0.0) or np.any(np.diff(rates) <= 0.0):
        raise ParameterError("rates must be a positive strictly increasing vector")
    if design_times is None:
        design_times = default_design_times(target.horizon)
    t = np.asarray(design_times, dtype=float)
    if t.size == 0:
        raise ParameterError("design grid is empty")
    if np.any(t < 0.0) or np.any(t > target.horizon * (1.0 + 1e-12)):
        raise ParameterError("design times must lie within [0, horizon]")
    g = np.exp(-np.outer(t, rates))
    y = target(t)
    w, kkt, non_unique = nnls(g, y)
    resid = float(np.linalg.norm(y - g @ w))
    kernel = SOEKernel(
        weights=w, rates=rates, eps_rel=0.0,
        kkt_residual=kkt, non_unique=non_unique, residual_norm=resid,
    )
    eps = kernel_error(target, kernel, default_check_times(target.horizon))
    return replace(kernel, eps_rel=eps)


def evaluate_soe(soe: SOEKernel, t) -> np.ndarray | float:
    """g_K(t) = sum_k w_k exp(-r_k t) for t >= 0."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0):
        raise ParameterError("evaluation times must be nonnegative")
    out = np.exp(-np.outer(arr.ravel(), soe.rates)) @ soe.weights
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def kernel_error(target: KernelTarget, soe: SOEKernel, check_times) -> float:
    """max_j |g - g_K| / max(1, |g|) over the check grid."""
    t = np.asarray(check_times, dtype=float)
    if t.size == 0:
        raise ParameterError("check grid is empty")
    g = target(t)
    approx = evaluate_soe(soe, t)
    return float(np.max(np.abs(g - approx) / np.maximum(1.0, np.abs(g))))
