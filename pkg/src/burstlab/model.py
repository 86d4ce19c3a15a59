"""Regime- and mode-dependent lifted operators, forcing, and structural checks.

The lifted operator for a network of n nodes with K memory channels is the
(K+1)n square block matrix

    [ B      w_1 I  ...  w_K I ]
    [ I     -r_1 I         0   ]
    [ ...            ...       ]
    [ I      0          -r_K I ]

Modes modify selected blocks: verify (mode 1) scales the memory gains w_k
by alpha < 1; mitigate (mode 2) adds damping delta to B and decay delta_r
to every memory rate. With delta == delta_r, mode 2 is exactly the mode-0
operator shifted by -delta I.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DimensionError, ParameterError
from .soe import SOEKernel

MODE_NORMAL, MODE_VERIFY, MODE_MITIGATE = 0, 1, 2
MODES = (MODE_NORMAL, MODE_VERIFY, MODE_MITIGATE)


@dataclass(frozen=True)
class RegimeCoupling:
    """Damping/coupling pair of one regime's instantaneous operator."""

    damping: float
    coupling: float

    def __post_init__(self):
        if self.damping <= 0.0 or self.coupling < 0.0:
            raise ParameterError(
                f"need damping > 0 and coupling >= 0, got ({self.damping}, {self.coupling})"
            )


@dataclass(frozen=True)
class NetworkSpec:
    """Network topology, per-regime coupling, and the periodic forcing."""

    adjacency: np.ndarray
    regimes: dict[str, RegimeCoupling]
    forced_node: int
    amplitude: float
    omega: float

    def __post_init__(self):
        w = linalg.as_square(self.adjacency, "adjacency")
        object.__setattr__(self, "adjacency", w)
        if not self.regimes:
            raise ParameterError("need at least one regime")
        if not 0 <= self.forced_node < w.shape[0]:
            raise ParameterError(
                f"forced node {self.forced_node} outside [0, {w.shape[0]})"
            )
        if self.amplitude < 0.0 or self.omega < 0.0:
            raise ParameterError("amplitude and omega must be nonnegative")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def validate_stability(self) -> float:
        """Check the memoryless stability margin damping > coupling * rho(W).

        Returns rho(W). Raised margins are per regime.
        """
        rho = linalg.spectral_radius(self.adjacency)
        for label, rc in self.regimes.items():
            if rc.damping <= rc.coupling * rho:
                raise ParameterError(
                    f"regime {label!r} violates the stability margin: "
                    f"damping {rc.damping} <= coupling {rc.coupling} * rho(W) {rho:.6g}"
                )
        return rho


@dataclass(frozen=True)
class ModeDesign:
    """Verify/mitigate block modifications.

    verify_gain in (0, 1); mitigate_damping and mitigate_decay are
    nonnegative (zero makes mitigate coincide with normal mode, which the
    damping sweeps use as their baseline arm).
    """

    verify_gain: float
    mitigate_damping: float
    mitigate_decay: float

    def __post_init__(self):
        if not 0.0 < self.verify_gain < 1.0:
            raise ParameterError(f"verify_gain must be in (0,1), got {self.verify_gain}")
        if self.mitigate_damping < 0.0 or self.mitigate_decay < 0.0:
            raise ParameterError("mitigate damping/decay must be nonnegative")


@dataclass(frozen=True)
class LiftedOperator:
    """A (K+1)n lifted operator with cached spectral diagnostics."""

    regime: str
    mode: int
    matrix: np.ndarray
    susceptibility: float
    top_direction: np.ndarray
    n: int
    order: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def build_instant_operator(spec: NetworkSpec, regime: str) -> np.ndarray:
    """Instantaneous network operator -damping*I + coupling*W."""
    if regime not in spec.regimes:
        raise ParameterError(f"unknown regime label {regime!r}")
    rc = spec.regimes[regime]
    return -rc.damping * np.eye(spec.n) + rc.coupling * spec.adjacency


def assemble_lifted(
    b: np.ndarray,
    soe: SOEKernel,
    design: ModeDesign,
    mode: int,
    regime: str = "",
) -> LiftedOperator:
    """Assemble the lifted block operator for one (regime, mode) pair."""
    b = linalg.as_square(b, "instantaneous operator")
    n = b.shape[0]
    k = soe.order
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode}")

    w = soe.weights.copy()
    r = soe.rates.copy()
    b_eff = b
    if mode == MODE_VERIFY:
        w = design.verify_gain * w
    elif mode == MODE_MITIGATE:
        b_eff = b - design.mitigate_damping * np.eye(n)
        r = r + design.mitigate_decay

    d = (k + 1) * n
    a = np.zeros((d, d))
    a[:n, :n] = b_eff
    eye = np.eye(n)
    for j in range(k):
        lo = (j + 1) * n
        hi = lo + n
        a[:n, lo:hi] = w[j] * eye
        a[lo:hi, :n] = eye
        a[lo:hi, lo:hi] = -r[j] * eye

    mu, v = linalg.top_symmetric_eigpair(a)
    a.setflags(write=False)
    v.setflags(write=False)
    return LiftedOperator(
        regime=regime, mode=mode, matrix=a,
        susceptibility=mu, top_direction=v, n=n, order=k,
    )


@dataclass(frozen=True)
class Forcing:
    """Single-node sinusoid f(t) = amplitude * sin(omega t) at one node,
    lifted with zero memory blocks."""

    node: int
    amplitude: float
    omega: float
    n: int
    order: int

    @property
    def dim(self) -> int:
        return (self.order + 1) * self.n

    def scalar(self, t: float) -> float:
        return self.amplitude * np.sin(self.omega * t)

    def norm(self, t) -> np.ndarray | float:
        return np.abs(self.amplitude * np.sin(self.omega * np.asarray(t, dtype=float)))

    @property
    def sup_norm(self) -> float:
        return abs(self.amplitude)

    def lifted(self, t: float) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.node] = self.scalar(t)
        return out


def forcing_eval(spec: NetworkSpec, t: float, order: int) -> np.ndarray:
    """Lifted forcing vector at time t for a K-channel lifting."""
    if t < 0.0:
        raise ParameterError("time must be nonnegative")
    f = Forcing(
        node=spec.forced_node, amplitude=spec.amplitude, omega=spec.omega,
        n=spec.n, order=order,
    )
    return f.lifted(t)


def check_mitigation_contraction(op: LiftedOperator) -> tuple[bool, float]:
    """Whether the mitigate-mode operator is contractive, and its rate.

    Contraction is certified through the logarithmic norm: susceptibility
    mu < 0 gives ||exp(A t)|| <= exp(mu t), so the contraction prefactor is
    1 and kappa = -mu.
    """
    if op.mode != MODE_MITIGATE:
        raise ParameterError("contraction check expects a mitigate-mode operator")
    mu = op.susceptibility
    if mu < 0.0:
        return True, -mu
    return False, float("nan")


def build_operator_table(
    spec: NetworkSpec,
    soe: SOEKernel,
    design: ModeDesign,
    *,
    memory_gain: float = 1.0,
    safe_regime: str | None = None,
    safe_design: ModeDesign | None = None,
) -> dict[tuple[str, int], LiftedOperator]:
    """All (regime, mode) lifted operators for a scenario.

    ``memory_gain`` scales the fitted kernel weights (the heavy-tail tuning
    knob). With ``safe_regime`` set, that regime's operators are replaced in
    every mode by the permanently damped construction given by
    ``safe_design`` applied as mitigate mode.
    """
    kernel = soe.scaled(memory_gain)
    table: dict[tuple[str, int], LiftedOperator] = {}
    for regime in spec.regimes:
        b = build_instant_operator(spec, regime)
        for mode in MODES:
            if regime == safe_regime:
                damped = assemble_lifted(
                    b, kernel, safe_design or design, MODE_MITIGATE, regime=regime
                )
                table[(regime, mode)] = LiftedOperator(
                    regime=regime, mode=mode, matrix=damped.matrix,
                    susceptibility=damped.susceptibility,
                    top_direction=damped.top_direction,
                    n=damped.n, order=damped.order,
                )
            else:
                table[(regime, mode)] = assemble_lifted(
                    b, kernel, design, mode, regime=regime
                )
    return table


def uniform_norm_bound(table: dict[tuple[str, int], LiftedOperator]) -> float:
    """max operator norm over the table; the growth constant in the pathwise bound."""
    return max(linalg.operator_norm_2(op.matrix) for op in table.values())
