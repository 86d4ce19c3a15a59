"""Continuous-time Markov chain regime paths and dwell statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .seeding import substream


@dataclass(frozen=True)
class GeneratorSpec:
    """Generator matrix of a finite-state CTMC.

    ``rates[i][j]`` is the jump rate from state i to state j (i != j);
    exit rates are the row sums. A state with zero exit rate is absorbing.
    """

    labels: tuple[str, ...]
    rates: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.rates, dtype=float)
        p0 = np.asarray(self.initial, dtype=float)
        m = len(self.labels)
        if len(set(self.labels)) != m or m < 1:
            raise ParameterError("state labels must be distinct and nonempty")
        if q.shape != (m, m):
            raise ParameterError(f"rate matrix must be {m}x{m}, got {q.shape}")
        off = q.copy()
        np.fill_diagonal(off, 0.0)
        if np.any(off < 0.0) or not np.all(np.isfinite(off)):
            raise ParameterError("off-diagonal rates must be finite and nonnegative")
        if p0.shape != (m,) or np.any(p0 < 0.0) or abs(p0.sum() - 1.0) > 1e-12:
            raise ParameterError("initial distribution must be a probability vector")
        object.__setattr__(self, "rates", off)
        object.__setattr__(self, "initial", p0)

    @property
    def n_states(self) -> int:
        return len(self.labels)

    @property
    def exit_rates(self) -> np.ndarray:
        return self.rates.sum(axis=1)

    def generator_matrix(self) -> np.ndarray:
        q = self.rates.copy()
        np.fill_diagonal(q, -self.exit_rates)
        return q

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ParameterError(f"unknown state label {label!r}") from None


def two_state(rate_su: float, rate_us: float, start: str = "S") -> GeneratorSpec:
    """The benign/unfavorable two-state chain used by the experiment presets."""
    if rate_su < 0.0 or rate_us < 0.0:
        raise ParameterError("rates must be nonnegative")
    init = np.array([1.0, 0.0]) if start == "S" else np.array([0.0, 1.0])
    return GeneratorSpec(
        labels=("S", "U"),
        rates=np.array([[0.0, rate_su], [rate_us, 0.0]]),
        initial=init,
    )


@dataclass(frozen=True)
class RegimePath:
    """One realization of the regime process on [0, horizon].

    ``states`` has one more entry than ``jump_times``; state ``states[k]``
    holds on [jump_times[k-1], jump_times[k]).
    """

    jump_times: np.ndarray
    states: np.ndarray
    horizon: float
    labels: tuple[str, ...]

    def __post_init__(self):
        t = np.asarray(self.jump_times, dtype=float)
        s = np.asarray(self.states, dtype=np.int8)
        if s.size != t.size + 1:
            raise ParameterError("need exactly one more state than jump")
        if t.size and (np.any(np.diff(t) <= 0.0) or t[0] <= 0.0 or t[-1] >= self.horizon):
            raise ParameterError("jump times must be strictly increasing inside (0, horizon)")
        if np.any(s[1:] == s[:-1]):
            raise ParameterError("consecutive states must differ")
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "states", s)

    def intervals(self):
        """(t_start, t_end, state_index) triples covering [0, horizon]."""
        bounds = np.concatenate([[0.0], self.jump_times, [self.horizon]])
        return [
            (bounds[k], bounds[k + 1], int(self.states[k]))
            for k in range(self.states.size)
        ]

    def state_at(self, t: float) -> int:
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return int(self.states[k])

    def completed_dwells(self):
        """Dwell durations per state index, excluding the right-censored last one."""
        out: dict[int, list[float]] = {}
        for t0, t1, s in self.intervals()[:-1]:
            out.setdefault(s, []).append(t1 - t0)
        return out


def sample_path(gen: GeneratorSpec, horizon: float, seed) -> RegimePath:
    """Jump-chain sampling: exponential dwells, next state by rate ratio.

    ``seed`` may be an int, a SeedSequence, or a Generator; identical seeds
    reproduce identical paths.
    """
    if horizon <= 0.0:
        raise ParameterError("horizon must be positive")
    if isinstance(seed, np.random.Generator):
        rng = seed
    elif isinstance(seed, np.random.SeedSequence):
        rng = np.random.Generator(np.random.Philox(seed))
    else:
        rng = substream(int(seed))

    cdf0 = np.cumsum(gen.initial)
    state = int(np.searchsorted(cdf0, rng.random(), side="right"))
    state = min(state, gen.n_states - 1)

    exit_rates = gen.exit_rates
    jump_times = []
    states = [state]
    t = 0.0
    while True:
        lam = exit_rates[state]
        if lam <= 0.0:
            break
        t += rng.exponential(1.0 / lam)
        if t >= horizon:
            break
        row = gen.rates[state]
        cdf = np.cumsum(row / lam)
        nxt = int(np.searchsorted(cdf, rng.random(), side="right"))
        nxt = min(nxt, gen.n_states - 1)
        jump_times.append(t)
        states.append(nxt)
        state = nxt
    return RegimePath(
        jump_times=np.array(jump_times, dtype=float),
        states=np.array(states, dtype=np.int8),
        horizon=float(horizon),
        labels=gen.labels,
    )


def stationary_distribution(gen: GeneratorSpec) -> np.ndarray:
    """Solve pi Q = 0, sum(pi) = 1 for an irreducible generator."""
    m = gen.n_states
    if m == 1:
        return np.ones(1)
    adj = gen.rates > 0.0
    unreachable = _non_communicating(adj)
    if unreachable:
        names = ", ".join(gen.labels[i] for i in sorted(unreachable))
        raise ParameterError(f"chain is reducible; states not communicating: {names}")
    q = gen.generator_matrix()
    a = np.vstack([q.T, np.ones(m)])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    return pi


def _non_communicating(adj: np.ndarray) -> set[int]:
    """States that do not belong to the single communicating class of state 0."""
    m = adj.shape[0]

    def reach(start, graph):
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in range(m):
                if graph[u, v] and v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    fwd = reach(0, adj)
    bwd = reach(0, adj.T)
    return set(range(m)) - (fwd & bwd)


@dataclass(frozen=True)
class DwellRateEstimate:
    rate: float
    std_error: float
    count: int
    total_time: float


def estimate_dwell_rates(paths) -> dict[str, DwellRateEstimate | None]:
    """Exit-rate MLE per state from completed dwells across paths.

    lambda_hat = (#completed dwells) / (total completed dwell time); the
    final right-censored dwell of each path is excluded entirely. States
    with no completed dwell map to None.
    """
    if not paths:
        raise ParameterError("need at least one path")
    labels = paths[0].labels
    counts = {i: 0 for i in range(len(labels))}
    times = {i: 0.0 for i in range(len(labels))}
    for p in paths:
        if p.labels != labels:
            raise ParameterError("paths carry inconsistent state labels")
        for s, dwells in p.completed_dwells().items():
            counts[s] += len(dwells)
            times[s] += float(np.sum(dwells))
    out: dict[str, DwellRateEstimate | None] = {}
    for i, label in enumerate(labels):
        if counts[i] == 0:
            out[label] = None
        else:
            rate = counts[i] / times[i]
            out[label] = DwellRateEstimate(
                rate=rate,
                std_error=rate / np.sqrt(counts[i]),
                count=counts[i],
                total_time=times[i],
            )
    return out
