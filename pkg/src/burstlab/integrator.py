"""Adaptive integration of the piecewise-constant lifted linear ODE.

Dormand-Prince 5(4) embedded pair with the standard quartic dense-output
interpolant. Regime jump times are known before integration and act as hard
interval boundaries; controller escalations triggered by the memory-load
indicator are localized inside accepted steps by bisection on the dense
output. The controller is evaluated at every accepted step end and at every
event; between evaluations the mode is frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controller import ControllerState, PolicyConfig, decide, desired_level
from .errors import DimensionError, DivergenceError, ParameterError, StiffnessError
from .model import Forcing, LiftedOperator
from .regime import RegimePath

# Dormand-Prince 5(4) tableau
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
DP_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
DP_E = np.array([
    71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
])
# Quartic dense-output coefficients: y(t0 + theta h) = y0 + h K^T P [theta..theta^4]
DP_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
CROSSING_SCAN = 7


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = 0.25
    output_points: int = 2000

    def __post_init__(self):
        if self.rtol <= 0.0 or self.atol <= 0.0:
            raise ParameterError("tolerances must be positive")
        if self.max_step <= 0.0:
            raise ParameterError("max_step must be positive")
        if self.output_points < 2:
            raise ParameterError("need at least 2 output points")


@dataclass(frozen=True)
class ModeChange:
    t: float
    old_mode: int
    new_mode: int
    trigger: str  # "L", "S", or "release"


@dataclass
class Trajectory:
    """Dense observables of one realization plus event-time records."""

    grid_t: np.ndarray
    energy: np.ndarray            # ||x(t)||
    load: np.ndarray              # sum_k ||y_k(t)||
    susceptibility: np.ndarray    # mu_2 of the active operator
    state_norm: np.ndarray        # ||X(t)||
    alignment: np.ndarray         # v_U . X / ||X|| (nan where undefined)
    regime_idx: np.ndarray
    mode: np.ndarray
    event_t: np.ndarray
    event_energy: np.ndarray
    event_load: np.ndarray
    event_susceptibility: np.ndarray
    event_state_norm: np.ndarray
    event_alignment: np.ndarray
    event_regime_idx: np.ndarray
    event_mode: np.ndarray
    snapshots: list
    mode_changes: list
    burst: float
    path: RegimePath
    accepted_steps: int
    rejected_steps: int

    def combined(self):
        """Grid plus event samples merged in time order.

        Event rows carry right-continuous indicator values; a grid sample
        coinciding exactly with an event is replaced by the event row.
        """
        t = np.concatenate([self.grid_t, self.event_t])
        order = np.argsort(t, kind="stable")
        cols = {}
        for name in ("energy", "load", "susceptibility", "state_norm", "alignment"):
            cols[name] = np.concatenate([getattr(self, name), getattr(self, "event_" + name)])[order]
        for name in ("regime_idx", "mode"):
            cols[name] = np.concatenate([getattr(self, name), getattr(self, "event_" + name)])[order]
        ts = t[order]
        is_event = np.concatenate([
            np.zeros(self.grid_t.size, dtype=bool), np.ones(self.event_t.size, dtype=bool)
        ])[order]
        # drop the left duplicate at exact grid/event coincidences
        keep = np.ones(ts.size, dtype=bool)
        same = np.flatnonzero(np.diff(ts) == 0.0)
        for i in same:
            keep[i if is_event[i + 1] else i + 1] = False
        out = {name: arr[keep] for name, arr in cols.items()}
        out["t"] = ts[keep]
        return out


def memory_load(x: np.ndarray, n: int) -> float:
    """Sum of Euclidean norms of the K memory blocks of a lifted state."""
    x = np.asarray(x, dtype=float)
    if x.size % n != 0:
        raise DimensionError(f"state length {x.size} not a multiple of n={n}")
    blocks = x.reshape(-1, n)
    if blocks.shape[0] < 2:
        return 0.0
    return float(np.sum(np.sqrt(np.sum(blocks[1:] ** 2, axis=1))))


def energy(x: np.ndarray, n: int) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=float)[:n]))


def susceptibility(op: LiftedOperator) -> float:
    """Logarithmic norm of the active operator (cached at construction)."""
    return op.susceptibility


class _Observables:
    """Vectorized (E, L, Xn, align) extraction for batches of lifted states."""

    def __init__(self, n: int, order: int, align_direction):
        self.n = n
        self.order = order
        self.v = None if align_direction is None else np.asarray(align_direction, dtype=float)

    def __call__(self, states: np.ndarray):
        m = states.shape[0]
        blocks = states.reshape(m, self.order + 1, self.n)
        norms = np.sqrt(np.sum(blocks**2, axis=2))
        e = norms[:, 0]
        load = np.sum(norms[:, 1:], axis=1)
        xn = np.sqrt(np.sum(states**2, axis=1))
        if self.v is None:
            align = np.full(m, np.nan)
        else:
            align = np.full(m, np.nan)
            ok = xn > 0.0
            align[ok] = (states[ok] @ self.v) / xn[ok]
        return e, load, xn, align


def _dense_states(y0, h, stages, theta):
    th = np.asarray(theta, dtype=float)[:, None]
    powers = np.concatenate([th, th**2, th**3, th**4], axis=1)
    return y0 + h * (powers @ DP_P.T) @ stages


def integrate_trajectory(
    ops,
    forcing: Forcing,
    path: RegimePath,
    policy: PolicyConfig | None,
    x0,
    cfg: SolverConfig,
    *,
    align_direction=None,
    grid=None,
) -> Trajectory:
    """Integrate one realization over [0, horizon].

    ``ops`` maps (regime_label, mode) to LiftedOperator; ``policy`` may be
    None or disabled, which routes through the identical code path with the
    controller inert. State is continuous across all switches.
    """
    horizon = path.horizon
    first_label = path.labels[int(path.states[0])]
    dim = ops[(first_label, 0)].dim
    n = ops[(first_label, 0)].n
    order = ops[(first_label, 0)].order
    y = np.asarray(x0, dtype=float).copy()
    if y.shape != (dim,):
        raise DimensionError(f"initial state must have length {dim}, got {y.shape}")
    for s in np.unique(path.states):
        label = path.labels[int(s)]
        for mode in (0, 1, 2):
            if (label, mode) not in ops:
                raise ParameterError(f"operator table misses ({label!r}, {mode})")

    if grid is None:
        grid = np.linspace(0.0, horizon, cfg.output_points)
    grid = np.asarray(grid, dtype=float)
    ng = grid.size
    gE = np.zeros(ng); gL = np.zeros(ng); gS = np.zeros(ng)
    gXn = np.zeros(ng); gAl = np.full(ng, np.nan)
    gz = np.zeros(ng, dtype=np.int8); gm = np.zeros(ng, dtype=np.int8)

    ev_rows = []          # (t, E, L, S, Xn, align, z, m)
    snapshots = []
    mode_changes = []
    obs = _Observables(n, order, align_direction)

    enabled = policy is not None and policy.enabled
    ctrl = ControllerState(mode=0, t_last=0.0)
    time_tol = 1e-9 * horizon

    amp, om, node = forcing.amplitude, forcing.omega, forcing.node

    segments = path.intervals()
    t = 0.0
    g_next = 0
    h = min(cfg.max_step, horizon / 100.0)
    n_accept = 0
    n_reject = 0
    stages = np.empty((7, dim))
    h_floor = max(1e-13 * horizon, 4.0 * np.finfo(float).eps)

    def rhs(tt, yy, mat, out):
        np.dot(mat, yy, out=out)
        out[node] += amp * np.sin(om * tt)
        return out

    def record_event(tt, zidx, mode):
        e, load, xn, al = obs(y[None, :])
        ev_rows.append((tt, e[0], load[0], op.susceptibility, xn[0], al[0], zidx, mode))
        snapshots.append((tt, y.copy()))
        # right-continuity: overwrite a grid sample landing exactly on tt
        j = g_next - 1
        if 0 <= j < ng and grid[j] == tt:
            gS[j] = op.susceptibility
            gz[j] = zidx
            gm[j] = mode

    def fill_grid(y_start, t0, h_step, t_hi, y_end):
        nonlocal g_next
        hi = g_next
        while hi < ng and grid[hi] <= t_hi + 1e-15 * horizon:
            hi += 1
        if hi == g_next:
            return
        ts = grid[g_next:hi]
        theta = (ts - t0) / h_step
        states = _dense_states(y_start, h_step, stages, theta)
        # exact endpoint instead of interpolant when the step end is sampled
        exact = np.abs(ts - (t0 + h_step)) <= 1e-15 * max(1.0, abs(t_hi))
        if np.any(exact):
            states[exact] = y_end
        e, load, xn, al = obs(states)
        sl = slice(g_next, hi)
        gE[sl] = e; gL[sl] = load; gXn[sl] = xn; gAl[sl] = al
        gS[sl] = op.susceptibility
        gz[sl] = zidx; gm[sl] = ctrl.mode
        g_next = hi

    def controller_probe(tt, load_val):
        """Apply one decision; returns True when the mode changed."""
        nonlocal ctrl, op
        if not enabled:
            return False
        new = decide(ctrl, tt, load_val, op.susceptibility, policy)
        if new.mode == ctrl.mode:
            ctrl = new
            return False
        old_mode = ctrl.mode
        if new.mode > old_mode:
            if load_val > (policy.tau_load[1] if new.mode == 2 else policy.tau_load[0]):
                trigger = "L"
            else:
                trigger = "S"
        else:
            trigger = "release"
        ctrl = new
        mode_changes.append(ModeChange(tt, old_mode, new.mode, trigger))
        op = ops[(label, ctrl.mode)]
        record_event(tt, zidx, ctrl.mode)
        return True

    for seg_start, seg_end, zidx in segments:
        label = path.labels[zidx]
        op = ops[(label, ctrl.mode)]
        record_event(seg_start, zidx, ctrl.mode)
        # regime entry is an event: evaluate the controller right away
        if enabled:
            load_here = memory_load(y, n)
            controller_probe(seg_start, load_here)
        t = seg_start

        k_first = None
        while t < seg_end - 1e-15 * max(1.0, seg_end):
            cap = seg_end - t
            # pending escalation blocked by the dwell gate: land a step end
            # exactly on the arming time
            if enabled:
                t_arm = ctrl.t_last + policy.min_dwell
                if t < t_arm <= t + min(h, cap):
                    want = desired_level(memory_load(y, n), op.susceptibility, policy)
                    if want > ctrl.mode:
                        cap = min(cap, t_arm - t)
            h_try = min(h, cap, cfg.max_step)
            if k_first is None:
                k_first = rhs(t, y, op.matrix, stages[0])
            while True:
                if h_try < h_floor:
                    raise StiffnessError(
                        f"step size underflow at t={t:.6g}",
                        t=t, state_norm=float(np.linalg.norm(y)),
                        susceptibility=op.susceptibility,
                    )
                for i in range(1, 7):
                    yi = y + h_try * (stages[:i].T @ DP_A[i, :i])
                    rhs(t + DP_C[i] * h_try, yi, op.matrix, stages[i])
                y_new = y + h_try * (stages.T @ DP_B)
                err_vec = h_try * (stages.T @ DP_E)
                scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
                err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
                if np.isfinite(err) and err <= 1.0:
                    break
                n_reject += 1
                if not np.isfinite(err):
                    h_try *= MIN_FACTOR
                else:
                    h_try *= max(MIN_FACTOR, SAFETY * err ** -0.2)
            if not np.all(np.isfinite(y_new)):
                raise DivergenceError(f"non-finite state at t={t + h_try:.6g}", t=t + h_try)
            n_accept += 1
            t_new = t + h_try

            # earliest escalating up-crossing of the load indicator inside
            # the step, applied only where the dwell gate is open
            t_cut = None
            if enabled and ctrl.mode < 2:
                taus = [(policy.tau_load[0], 1), (policy.tau_load[1], 2)]
                theta = np.linspace(0.0, 1.0, CROSSING_SCAN)
                sts = _dense_states(y, h_try, stages, theta)
                _, scan, _, _ = obs(sts)
                scan[0] = memory_load(y, n)
                scan[-1] = memory_load(y_new, n)
                for tau, level in taus:
                    if level <= ctrl.mode:
                        continue
                    for i in range(CROSSING_SCAN - 1):
                        if not (scan[i] <= tau < scan[i + 1]):
                            continue
                        lo = t + theta[i] * h_try
                        hi = t + theta[i + 1] * h_try
                        while hi - lo > time_tol:
                            mid = 0.5 * (lo + hi)
                            sm = _dense_states(y, h_try, stages, np.array([(mid - t) / h_try]))
                            if memory_load(sm[0], n) > tau:
                                hi = mid
                            else:
                                lo = mid
                        if hi - ctrl.t_last >= policy.min_dwell:
                            t_cut = hi if t_cut is None else min(t_cut, hi)
                        break
            if t_cut is not None and t_cut < t_new - time_tol:
                y_cut = _dense_states(y, h_try, stages, np.array([(t_cut - t) / h_try]))[0]
                fill_grid(y, t, h_try, t_cut, y_cut)
                y = y_cut
                t = t_cut
                controller_probe(t, memory_load(y, n))
                k_first = None
                continue

            fill_grid(y, t, h_try, t_new, y_new)
            y = y_new
            t = t_new
            # FSAL: last stage is the derivative at the accepted point
            stages[0] = stages[6]
            k_first = stages[0]
            if err > 0.0:
                h = h_try * min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** -0.2))
            else:
                h = h_try * MAX_FACTOR
            h = min(h, cfg.max_step)
            # controller decision at the accepted step end
            if enabled:
                changed = controller_probe(t, memory_load(y, n))
                if changed:
                    k_first = None

    # horizon end: final event sample and snapshot
    op = ops[(path.labels[int(path.states[-1])], ctrl.mode)]
    zidx = int(path.states[-1])
    record_event(horizon, zidx, ctrl.mode)
    if g_next < ng:
        # numerical shortfall: grid points beyond the last accepted step
        raise DivergenceError(f"output grid not fully covered: {g_next}/{ng}")

    ev = np.array(ev_rows, dtype=float)
    burst = float(max(gE.max(initial=0.0), ev[:, 1].max(initial=0.0)))
    return Trajectory(
        grid_t=grid, energy=gE, load=gL, susceptibility=gS, state_norm=gXn,
        alignment=gAl, regime_idx=gz, mode=gm,
        event_t=ev[:, 0], event_energy=ev[:, 1], event_load=ev[:, 2],
        event_susceptibility=ev[:, 3], event_state_norm=ev[:, 4],
        event_alignment=ev[:, 5],
        event_regime_idx=ev[:, 6].astype(np.int8),
        event_mode=ev[:, 7].astype(np.int8),
        snapshots=snapshots, mode_changes=mode_changes, burst=burst,
        path=path, accepted_steps=n_accept, rejected_steps=n_reject,
    )


def energy_inequality_audit(traj: Trajectory, forcing: Forcing) -> float:
    """Worst discretized violation of d/dt||X|| <= S ||X|| + ||f||.

    Forward differences of the combined sample trace are compared against
    the larger endpoint evaluation of S ||X|| + ||f|| on each interval
    (the active operator is constant there, so the interval bound is exact
    up to interior curvature of the right-hand side).
    """
    c = traj.combined()
    ts, xn, s = c["t"], c["state_norm"], c["susceptibility"]
    fn = np.asarray(forcing.norm(ts), dtype=float)
    dt = np.diff(ts)
    ok = dt > 1e-14 * max(1.0, ts[-1])
    deriv = np.diff(xn)[ok] / dt[ok]
    s0 = s[:-1][ok]
    lhs0 = s0 * xn[:-1][ok] + fn[:-1][ok]
    lhs1 = s0 * xn[1:][ok] + fn[1:][ok]
    bound = np.maximum(lhs0, lhs1)
    if deriv.size == 0:
        return float("-inf")
    return float(np.max(deriv - bound))


def pathwise_bound_audit(
    traj: Trajectory, a_star: float, f_sup: float, x0_norm: float, horizon: float
) -> bool:
    """sup_t ||X|| <= (||X0|| + T sup||f||) e^(A* T), evaluated in log space."""
    c = traj.combined()
    peak = float(np.max(c["state_norm"]))
    base = x0_norm + horizon * f_sup
    if peak == 0.0:
        return True
    if base == 0.0:
        return False
    log_bound = np.log(base) + a_star * horizon
    return bool(np.log(peak) <= log_bound + 1e-12 * max(1.0, abs(log_bound)))
