"""Two-indicator hysteretic mode controller with minimum dwell.

Escalation takes the maximum level demanded by either indicator and
applies immediately (subject to the minimum dwell). Release steps down one
level per decision and only when BOTH indicators sit below the lower
threshold pair, so the mode sequence cannot chatter.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError

MODE_NORMAL, MODE_VERIFY, MODE_MITIGATE = 0, 1, 2


@dataclass(frozen=True)
class PolicyConfig:
    """Thresholds and dwell of the mode controller.

    ``tau_load`` and ``tau_susceptibility`` are (lower, upper) pairs; the
    lower member arms verify mode, the upper member arms mitigate mode.
    """

    tau_load: tuple[float, float]
    tau_susceptibility: tuple[float, float]
    min_dwell: float
    enabled: bool = True

    def __post_init__(self):
        if not self.tau_load[0] < self.tau_load[1]:
            raise ParameterError(f"load thresholds must be ordered, got {self.tau_load}")
        if not self.tau_susceptibility[0] < self.tau_susceptibility[1]:
            raise ParameterError(
                f"susceptibility thresholds must be ordered, got {self.tau_susceptibility}"
            )
        if self.min_dwell <= 0.0:
            raise ParameterError(f"min_dwell must be positive, got {self.min_dwell}")


@dataclass(frozen=True)
class ControllerState:
    mode: int = MODE_NORMAL
    t_last: float = 0.0


def desired_level(load: float, susceptibility: float, cfg: PolicyConfig) -> int:
    """Level demanded by the raw threshold rule, before hysteresis."""
    if load > cfg.tau_load[1] or susceptibility > cfg.tau_susceptibility[1]:
        return MODE_MITIGATE
    if load > cfg.tau_load[0] or susceptibility > cfg.tau_susceptibility[0]:
        return MODE_VERIFY
    return MODE_NORMAL


def decide(
    state: ControllerState,
    t: float,
    load: float,
    susceptibility: float,
    cfg: PolicyConfig,
) -> ControllerState:
    """One controller decision at time t.

    Pure function of (state, indicators). No change while the minimum dwell
    since the last change has not elapsed. Escalation jumps directly to the
    demanded level; release decreases by exactly one level and requires both
    indicators below the lower thresholds.
    """
    if not cfg.enabled:
        return state
    if t < state.t_last:
        raise ParameterError("decision time precedes the last mode change")
    if t - state.t_last < cfg.min_dwell:
        return state
    want = desired_level(load, susceptibility, cfg)
    if want > state.mode:
        return ControllerState(mode=want, t_last=t)
    if want < state.mode:
        released = (
            load < cfg.tau_load[0] and susceptibility < cfg.tau_susceptibility[0]
        )
        if released:
            return ControllerState(mode=state.mode - 1, t_last=t)
    return state


def crossing_times(
    trace,
    t_lo: float,
    t_hi: float,
    threshold: float,
    *,
    time_tol: float,
    samples: int = 9,
) -> list[float]:
    """Up-crossing times of a scalar trace over [t_lo, t_hi].

    ``trace`` is a callable evaluated on the solver's dense output. The
    bracket is scanned at ``samples`` points; each sign change from below
    to above the threshold is bisected down to ``time_tol``.
    """
    if t_hi <= t_lo:
        return []
    import numpy as np

    ts = np.linspace(t_lo, t_hi, max(samples, 2))
    vals = np.array([trace(t) for t in ts], dtype=float)
    out = []
    for i in range(len(ts) - 1):
        lo, hi = ts[i], ts[i + 1]
        f_lo, f_hi = vals[i], vals[i + 1]
        if not (f_lo <= threshold < f_hi):
            continue
        while hi - lo > time_tol:
            mid = 0.5 * (lo + hi)
            if trace(mid) > threshold:
                hi = mid
            else:
                lo = mid
        out.append(hi)
    return out
