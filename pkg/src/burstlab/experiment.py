"""Scenario orchestration: ensembles, baselines, comparisons, sweeps.

A scenario is one of four kinds: plain (memory on, no controller),
dddas (memory on, controller enabled), memory_off (kernel gain forced to
zero), and safe_in_u (the unfavorable regime permanently replaced by the
damped mitigate construction). Ensembles are embarrassingly parallel over
trajectories; every random draw is keyed by (master_seed, trajectory
index, stream), so results are identical for any worker count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg
from .controller import PolicyConfig
from .errors import AuditFailure, DivergenceError, GrowthChannelInactive, ParameterError
from .estimators import (
    GammaEstimates,
    cone_window_rates,
    detect_uncontrolled_dwells,
    forcing_projection_diagnostic,
    gamma_dwell,
    nearest_rank_quantile,
)
from .integrator import (
    SolverConfig,
    Trajectory,
    energy_inequality_audit,
    integrate_trajectory,
    pathwise_bound_audit,
)
from .model import (
    MODE_MITIGATE,
    MODE_NORMAL,
    Forcing,
    ModeDesign,
    NetworkSpec,
    RegimeCoupling,
    build_operator_table,
    check_mitigation_contraction,
    uniform_norm_bound,
)
from .regime import GeneratorSpec, RegimePath, estimate_dwell_rates, sample_path, two_state
from .seeding import STREAM_REGIME, substream, trajectory_stream
from .soe import KernelTarget, SOEKernel, default_design_times, fit_nnls, make_log_grid
from .tailfit import TailFit, fit_tail, theoretical_index, truncation_bound

log = logging.getLogger(__name__)

ENERGY_AUDIT_COEFF = 1e-4
SCENARIO_KINDS = ("plain", "dddas", "memory_off", "safe_in_u")


def ring_skip_adjacency(n: int, skip: int = 3, skip_weight: float = 0.5) -> np.ndarray:
    """Directed ring with an extra skip edge per node; non-normal by design."""
    if n < 2:
        raise ParameterError("need at least 2 nodes")
    w = np.zeros((n, n))
    for i in range(n):
        w[i, (i + 1) % n] = 1.0
        if skip_weight != 0.0:
            w[i, (i + skip) % n] = skip_weight
    return w


@dataclass(frozen=True)
class AdjacencyConfig:
    kind: str = "ring_skip"           # or "explicit"
    skip: int = 3
    skip_weight: float = 0.5
    normalize_rho: float | None = None
    matrix: tuple = ()                # row tuples for kind == "explicit"

    def build(self, n: int) -> np.ndarray:
        if self.kind == "ring_skip":
            w = ring_skip_adjacency(n, self.skip, self.skip_weight)
        elif self.kind == "explicit":
            w = np.array(self.matrix, dtype=float)
            if w.shape != (n, n):
                raise ParameterError(f"explicit adjacency must be {n}x{n}")
        else:
            raise ParameterError(f"unknown adjacency kind {self.kind!r}")
        if self.normalize_rho is not None:
            rho = linalg.spectral_radius(w)
            if rho <= 0.0:
                raise ParameterError("cannot normalize a nilpotent adjacency")
            w = w * (self.normalize_rho / rho)
        return w


@dataclass(frozen=True)
class NetworkConfig:
    n: int = 20
    adjacency: AdjacencyConfig = field(default_factory=AdjacencyConfig)
    damping_s: float = 6.0
    coupling_s: float = 0.2
    damping_u: float = 0.75
    coupling_u: float = 0.4
    forced_node: int = 0
    amplitude: float = 1.0
    omega: float = 1.0

    def build(self) -> NetworkSpec:
        return NetworkSpec(
            adjacency=self.adjacency.build(self.n),
            regimes={
                "S": RegimeCoupling(self.damping_s, self.coupling_s),
                "U": RegimeCoupling(self.damping_u, self.coupling_u),
            },
            forced_node=self.forced_node,
            amplitude=self.amplitude,
            omega=self.omega,
        )


@dataclass(frozen=True)
class KernelConfig:
    kind: str = "power_law"
    exponent: float = 1.5
    offset: float = 1.0
    terms: tuple = ()
    order: int = 8
    r_min: float | None = None        # default 1/T
    r_max: float | None = None        # default 2/max_step
    gain: float = 1.0
    memory_off: bool = False

    def target(self, horizon: float) -> KernelTarget:
        return KernelTarget(
            kind=self.kind, horizon=horizon, exponent=self.exponent,
            offset=self.offset, terms=self.terms,
        )

    def rates(self, horizon: float, max_step: float) -> np.ndarray:
        r_lo = self.r_min if self.r_min is not None else 1.0 / horizon
        r_hi = self.r_max if self.r_max is not None else 2.0 / max_step
        return make_log_grid(r_lo, r_hi, self.order)


@dataclass(frozen=True)
class RegimeRatesConfig:
    rate_su: float = 1.0
    rate_us: float = 1.0
    start: str = "S"

    def build(self) -> GeneratorSpec:
        return two_state(self.rate_su, self.rate_us, start=self.start)


@dataclass(frozen=True)
class AnalysisConfig:
    q_gamma: float = 0.9
    q_b: float = 0.9
    bootstrap: int = 1000
    ci_level: float = 0.95
    cone_alpha: float = 0.5
    cone_window_steps: int = 10
    min_dwell: float = 0.5
    stability_tol: float = 0.05
    gamma_source: str = "hybrid"      # hybrid | operator | cone | dwell


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    kind: str = "plain"
    horizon: float = 100.0
    ensemble: int = 2000
    master_seed: int = 20260811
    network: NetworkConfig = field(default_factory=NetworkConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    rates: RegimeRatesConfig = field(default_factory=RegimeRatesConfig)
    policy: PolicyConfig | None = None
    mode_design: ModeDesign = field(default_factory=lambda: ModeDesign(0.5, 2.5, 2.5))
    safe_damping: float = 2.5
    solver: SolverConfig = field(default_factory=SolverConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    require_contraction: bool = False

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ParameterError(f"scenario kind must be one of {SCENARIO_KINDS}")
        if self.ensemble < 1:
            raise ParameterError("ensemble size must be at least 1")
        if self.horizon <= 0.0:
            raise ParameterError("horizon must be positive")
        flags = {
            "dddas": self.policy is not None and self.policy.enabled,
            "memory_off": self.kernel.memory_off,
            "safe_in_u": self.kind == "safe_in_u",
        }
        active = [k for k, v in flags.items() if v]
        if self.kind == "plain" and active:
            raise ParameterError(f"plain scenario has active flags: {active}")
        if self.kind != "plain" and active != [self.kind]:
            raise ParameterError(
                f"scenario kind {self.kind!r} inconsistent with flags {active}"
            )


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-trajectory reduction kept for ensemble aggregation."""

    index: int
    burst: float
    energy_grid: np.ndarray
    cone_rates: np.ndarray
    dwells: tuple
    jump_times: np.ndarray
    states: np.ndarray
    energy_violation: float
    energy_tol: float
    pathwise_ok: bool
    max_state_norm: float
    mode_changes: tuple
    mode_time: np.ndarray          # time fraction per mode over the grid
    chatter_violations: int
    release_violations: int
    accepted_steps: int


@dataclass(frozen=True)
class AuditSummary:
    energy_pass: int
    pathwise_pass: int
    chatter_violations: int
    release_violations: int
    total: int
    excluded: int
    max_energy_violation: float

    @property
    def all_pass(self) -> bool:
        return (
            self.energy_pass == self.total
            and self.pathwise_pass == self.total
            and self.chatter_violations == 0
            and self.release_violations == 0
            and self.excluded == 0
        )


@dataclass(frozen=True)
class EnsembleResult:
    config: ScenarioConfig
    bursts: np.ndarray
    bands: dict
    gamma: GammaEstimates
    dwell_rates: dict
    tail: TailFit | None
    tail_error: str | None
    audits: AuditSummary
    eps_rel: float
    rho_adjacency: float
    susceptibilities: dict
    a_star: float
    contraction: tuple
    truncation: float | None
    forcing_projection: tuple
    intervention_fraction: float
    failures: tuple
    records: tuple
    grid_t: np.ndarray
    dwell_samples: np.ndarray


# -- scenario assembly -------------------------------------------------------

def build_scenario(cfg: ScenarioConfig):
    """Operators, forcing, generator, and diagnostics shared by all trajectories."""
    spec = cfg.network.build()
    rho = spec.validate_stability()
    rates = cfg.kernel.rates(cfg.horizon, cfg.solver.max_step)
    target = cfg.kernel.target(cfg.horizon)
    soe = fit_nnls(target, rates, default_design_times(cfg.horizon))
    gain = 0.0 if cfg.kernel.memory_off else cfg.kernel.gain
    safe_design = ModeDesign(
        cfg.mode_design.verify_gain, cfg.safe_damping, cfg.safe_damping
    )
    table = build_operator_table(
        spec, soe, cfg.mode_design,
        memory_gain=gain,
        safe_regime="U" if cfg.kind == "safe_in_u" else None,
        safe_design=safe_design,
    )
    gen = cfg.rates.build()
    forcing = Forcing(
        node=spec.forced_node, amplitude=spec.amplitude, omega=spec.omega,
        n=spec.n, order=soe.order,
    )
    max_exit = float(np.max(gen.exit_rates)) if np.max(gen.exit_rates) > 0 else 0.0
    if max_exit > 0.0 and cfg.solver.max_step > 0.1 / max_exit:
        log.debug(
            "max_step %.3g above a tenth of the shortest mean dwell %.3g",
            cfg.solver.max_step, 1.0 / max_exit,
        )
    contraction = check_mitigation_contraction(table[("U", MODE_MITIGATE)])
    if cfg.require_contraction and not contraction[0]:
        raise ParameterError(
            "scenario requires certified mitigation contraction but "
            f"mu2(A_U_mitigate) = {table[('U', MODE_MITIGATE)].susceptibility:.6g} >= 0"
        )
    if cfg.kind == "dddas" and cfg.policy is not None:
        mu_u0 = table[("U", MODE_NORMAL)].susceptibility
        if not (cfg.policy.tau_susceptibility[0] < mu_u0):
            log.warning(
                "susceptibility thresholds sit above mu2(A_U)=%.4g; "
                "the controller will never fire on S", mu_u0,
            )
    return spec, soe, table, gen, forcing, rho, contraction


# -- per-trajectory work ------------------------------------------------------

_CTX = None


@dataclass
class _WorkerContext:
    cfg: ScenarioConfig
    table: dict
    forcing: Forcing
    gen: GeneratorSpec
    grid: np.ndarray
    v_u: np.ndarray
    a_star: float
    n: int


def _init_worker(ctx):
    global _CTX
    _CTX = ctx


def _run_trajectory(index: int):
    ctx = _CTX
    cfg = ctx.cfg
    path = sample_path(
        ctx.gen, cfg.horizon,
        np.random.SeedSequence(cfg.master_seed, spawn_key=(index, STREAM_REGIME)),
    )
    x0 = np.zeros(ctx.table[("S", 0)].dim)
    try:
        traj = integrate_trajectory(
            ctx.table, ctx.forcing, path, cfg.policy, x0, cfg.solver,
            align_direction=ctx.v_u, grid=ctx.grid,
        )
    except DivergenceError as exc:
        return ("failure", index, str(exc))

    violation = energy_inequality_audit(traj, ctx.forcing)
    max_xn = float(np.max(traj.state_norm))
    tol = ENERGY_AUDIT_COEFF * (1.0 + max_xn)
    ok_path = pathwise_bound_audit(
        traj, ctx.a_star, ctx.forcing.sup_norm, float(np.linalg.norm(x0)), cfg.horizon
    )
    dwells = detect_uncontrolled_dwells(
        traj, "U", cfg.analysis.min_dwell, trajectory_index=index
    )
    cone = cone_window_rates(
        traj, "U", cfg.analysis.cone_alpha, cfg.analysis.cone_window_steps
    )
    changes = traj.mode_changes
    chatter = 0
    release_bad = 0
    for a, b in zip(changes, changes[1:]):
        if b.t - a.t < (cfg.policy.min_dwell if cfg.policy else 0.0) - 1e-9:
            chatter += 1
    for ch in changes:
        if ch.new_mode < ch.old_mode and ch.new_mode != ch.old_mode - 1:
            release_bad += 1
    mode_time = np.array([
        float(np.mean(traj.mode == m)) for m in (0, 1, 2)
    ])
    return ("ok", TrajectoryRecord(
        index=index, burst=traj.burst, energy_grid=traj.energy,
        cone_rates=cone, dwells=tuple(dwells),
        jump_times=path.jump_times, states=path.states,
        energy_violation=violation, energy_tol=tol,
        pathwise_ok=ok_path, max_state_norm=max_xn,
        mode_changes=tuple(changes), mode_time=mode_time,
        chatter_violations=chatter, release_violations=release_bad,
        accepted_steps=traj.accepted_steps,
    ))


def _map_trajectories(ctx, indices, workers: int):
    if workers <= 1:
        _init_worker(ctx)
        return [_run_trajectory(i) for i in indices]
    import multiprocessing as mp

    with mp.get_context("fork").Pool(
        processes=workers, initializer=_init_worker, initargs=(ctx,)
    ) as pool:
        chunk = max(1, len(indices) // (workers * 8))
        return pool.map(_run_trajectory, indices, chunksize=chunk)


# -- ensemble driver ----------------------------------------------------------

def quantile_bands(energy_matrix: np.ndarray) -> dict:
    """mean / median / q0.9 / q0.99 of E(t) across the ensemble, per grid time."""
    if energy_matrix.ndim != 2 or energy_matrix.shape[0] < 1:
        raise ParameterError("need at least one trajectory")
    srt = np.sort(energy_matrix, axis=0)
    n = energy_matrix.shape[0]

    def row(q):
        return srt[max(int(math.ceil(q * n)), 1) - 1]

    return {
        "mean": energy_matrix.mean(axis=0),
        "median": row(0.5),
        "q90": row(0.9),
        "q99": row(0.99),
    }


def run_ensemble(cfg: ScenarioConfig, workers: int = 1) -> EnsembleResult:
    if cfg.ensemble < 1:
        raise ParameterError("ensemble size must be positive")
    spec, soe, table, gen, forcing, rho, contraction = build_scenario(cfg)
    a_star = uniform_norm_bound(table)
    v_u = table[("U", MODE_NORMAL)].top_direction
    grid = np.linspace(0.0, cfg.horizon, cfg.solver.output_points)
    ctx = _WorkerContext(
        cfg=cfg, table=table, forcing=forcing, gen=gen, grid=grid,
        v_u=v_u, a_star=a_star, n=spec.n,
    )
    raw = _map_trajectories(ctx, range(cfg.ensemble), workers)

    records = []
    failures = []
    for item in raw:
        if item[0] == "ok":
            records.append(item[1])
        else:
            failures.append((item[1], item[2]))
    if failures and (cfg.require_contraction or cfg.kind == "dddas"):
        raise AuditFailure(
            f"{len(failures)} trajectories diverged in a scenario claiming truncation"
        )
    if not records:
        raise AuditFailure("all trajectories failed")

    bursts = np.array([r.burst for r in records])
    e_matrix = np.stack([r.energy_grid for r in records])
    bands = quantile_bands(e_matrix)

    paths = [
        RegimePath(
            jump_times=r.jump_times, states=r.states,
            horizon=cfg.horizon, labels=gen.labels,
        )
        for r in records
    ]
    dwell_rates = estimate_dwell_rates(paths)

    dwell_intervals = [iv for r in records for iv in r.dwells]
    if dwell_intervals:
        d_samples, d_q = gamma_dwell(dwell_intervals, cfg.analysis.q_gamma)
    else:
        d_samples, d_q = np.array([]), None
    cone_samples = (
        np.concatenate([r.cone_rates for r in records])
        if records else np.array([])
    )
    c_q = (
        nearest_rank_quantile(cone_samples, cfg.analysis.q_gamma)
        if cone_samples.size else None
    )
    gamma = GammaEstimates(
        operator=table[("U", MODE_NORMAL)].susceptibility,
        dwell_quantile=d_q,
        dwell_count=int(d_samples.size),
        dwell_mean=float(np.mean(d_samples)) if d_samples.size else None,
        dwell_std_error=(
            float(np.std(d_samples, ddof=1) / np.sqrt(d_samples.size))
            if d_samples.size > 1 else None
        ),
        cone_quantile=c_q,
        cone_count=int(cone_samples.size),
        cone_alpha=cfg.analysis.cone_alpha,
        cone_window=cfg.analysis.cone_window_steps * float(grid[1] - grid[0]),
        quantile_level=cfg.analysis.q_gamma,
    )

    gamma_for_theory = _gamma_by_source(gamma, cfg.analysis.gamma_source)
    lam_u = dwell_rates.get("U")
    alpha_theory = None
    tail = None
    tail_error = None
    if lam_u is not None and gamma_for_theory is not None:
        try:
            alpha_theory = theoretical_index(lam_u.rate, gamma_for_theory)
        except GrowthChannelInactive as exc:
            tail_error = str(exc)
    try:
        tail = fit_tail(
            bursts,
            q_b=cfg.analysis.q_b,
            stability=cfg.analysis.stability_tol,
            resamples=cfg.analysis.bootstrap,
            level=cfg.analysis.ci_level,
            master_seed=cfg.master_seed,
            alpha_theory=alpha_theory,
            gamma_source=cfg.analysis.gamma_source,
        )
    except ParameterError as exc:
        tail_error = tail_error or str(exc)

    n_energy = sum(1 for r in records if r.energy_violation <= r.energy_tol)
    n_path = sum(1 for r in records if r.pathwise_ok)
    audits = AuditSummary(
        energy_pass=n_energy,
        pathwise_pass=n_path,
        chatter_violations=sum(r.chatter_violations for r in records),
        release_violations=sum(r.release_violations for r in records),
        total=len(records),
        excluded=len(failures),
        max_energy_violation=max(
            (r.energy_violation - r.energy_tol) for r in records
        ),
    )

    truncation = None
    if contraction[0] and cfg.policy is not None and cfg.policy.enabled:
        truncation = truncation_bound(
            a_star=a_star,
            rho=math.exp(-contraction[1] * cfg.policy.min_dwell),
            kappa=contraction[1],
            m_c=1.0,
            horizon=cfg.horizon,
            min_dwell=cfg.policy.min_dwell,
            x0_norm=0.0,
            f_sup=forcing.sup_norm,
        )

    projection = forcing_projection_diagnostic(forcing, v_u, cfg.horizon)
    mode_time = np.mean(np.stack([r.mode_time for r in records]), axis=0)

    return EnsembleResult(
        config=cfg,
        bursts=bursts,
        bands=bands,
        gamma=gamma,
        dwell_rates=dwell_rates,
        tail=tail,
        tail_error=tail_error,
        audits=audits,
        eps_rel=soe.eps_rel,
        rho_adjacency=rho,
        susceptibilities={
            f"{k[0]}:{k[1]}": op.susceptibility for k, op in sorted(table.items())
        },
        a_star=a_star,
        contraction=contraction,
        truncation=truncation,
        forcing_projection=projection,
        intervention_fraction=float(mode_time[1] + mode_time[2]),
        failures=tuple(failures),
        records=tuple(records),
        grid_t=grid,
        dwell_samples=d_samples,
    )


def _gamma_by_source(gamma: GammaEstimates, source: str) -> float | None:
    if source == "operator":
        return gamma.operator
    if source == "cone":
        return gamma.cone_quantile
    if source == "dwell":
        return gamma.dwell_quantile
    if source == "hybrid":
        return gamma.hybrid()
    raise ParameterError(f"unknown gamma source {source!r}")


# -- scenario comparison ------------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    labels: tuple
    shared_ok: bool
    tails: dict
    dominance: dict
    band_distortion: dict
    truncation_exceedance: dict
    notes: tuple


def _shared_signature(cfg: ScenarioConfig):
    return (
        cfg.horizon,
        cfg.network,
        cfg.rates,
        cfg.solver.output_points,
    )


def ccdf_at(bursts: np.ndarray, b: np.ndarray) -> np.ndarray:
    """P(B > b) evaluated at query points."""
    srt = np.sort(bursts)
    return 1.0 - np.searchsorted(srt, b, side="right") / srt.size


def compare_scenarios(results: dict, baseline: str | None = None) -> ComparisonReport:
    """Cross-scenario tail and typical-behavior comparison.

    ``results`` maps label -> EnsembleResult sharing horizon, network,
    forcing, and regime statistics. Dominance of each scenario's CCDF under
    the baseline (default: the plain scenario) is checked at all common
    burst levels above the larger fit cutoff, within binomial noise.
    """
    labels = tuple(results)
    if len(labels) < 2:
        raise ParameterError("need at least two scenarios to compare")
    sigs = {lab: _shared_signature(r.config) for lab, r in results.items()}
    first = sigs[labels[0]]
    mismatched = [lab for lab in labels if sigs[lab] != first]
    if mismatched:
        raise ParameterError(
            f"scenarios {mismatched} do not share horizon/network/regime parameters"
        )
    if baseline is None:
        plain = [lab for lab, r in results.items() if r.config.kind == "plain"]
        baseline = plain[0] if plain else labels[0]

    base = results[baseline]
    n_base = base.bursts.size
    dominance = {}
    notes = []
    for lab, res in results.items():
        if lab == baseline:
            continue
        b_min = max(
            res.tail.b_min if res.tail else -np.inf,
            base.tail.b_min if base.tail else -np.inf,
        )
        qpts = np.unique(np.concatenate([res.bursts, base.bursts]))
        qpts = qpts[qpts >= b_min]
        if qpts.size == 0:
            dominance[lab] = {"checked": 0, "violations": 0, "ok": True}
            continue
        p_res = ccdf_at(res.bursts, qpts)
        p_base = ccdf_at(base.bursts, qpts)
        se = np.sqrt(
            p_res * (1 - p_res) / res.bursts.size + p_base * (1 - p_base) / n_base
        )
        viol = p_res > p_base + 1.96 * se + 1e-12
        dominance[lab] = {
            "checked": int(qpts.size),
            "violations": int(np.sum(viol)),
            "ok": bool(not np.any(viol)),
            "max_excess": float(np.max(p_res - p_base)) if qpts.size else 0.0,
        }

    band_distortion = {}
    for lab, res in results.items():
        if lab == baseline:
            continue
        med_b = base.bands["median"]
        med_r = res.bands["median"]
        scale = np.maximum(np.abs(med_b), 1e-3 * float(np.max(med_b)) + 1e-12)
        band_distortion[lab] = float(np.max(np.abs(med_r - med_b) / scale))

    truncation_exceedance = {}
    bounds = {lab: r.truncation for lab, r in results.items() if r.truncation is not None}
    for blab, bound in bounds.items():
        for lab, res in results.items():
            frac = float(np.mean(res.bursts > bound))
            truncation_exceedance[f"{lab}_over_{blab}"] = frac

    tails = {
        lab: {
            "alpha": res.tail.alpha if res.tail else None,
            "ci": (res.tail.ci.lo, res.tail.ci.hi) if res.tail else None,
            "alpha_theory": res.tail.alpha_theory if res.tail else None,
            "b_min": res.tail.b_min if res.tail else None,
            "reliable": res.tail.reliable if res.tail else False,
            "error": res.tail_error,
        }
        for lab, res in results.items()
    }
    return ComparisonReport(
        labels=labels,
        shared_ok=True,
        tails=tails,
        dominance=dominance,
        band_distortion=band_distortion,
        truncation_exceedance=truncation_exceedance,
        notes=tuple(notes),
    )


# -- sweeps -------------------------------------------------------------------

SWEEP_AXES = ("soe_K", "regime_rates", "network_nonnormality", "forcing", "dddas_thresholds")


def _apply_axis(base: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis == "soe_K":
        return replace(base, kernel=replace(base.kernel, order=int(value)))
    if axis == "regime_rates":
        return replace(base, rates=replace(base.rates, rate_us=float(value)))
    if axis == "network_nonnormality":
        adj = replace(
            base.network.adjacency, skip_weight=float(value),
            normalize_rho=base.network.adjacency.normalize_rho or 1.5,
        )
        return replace(base, network=replace(base.network, adjacency=adj))
    if axis == "forcing":
        return replace(base, network=replace(base.network, amplitude=float(value)))
    if axis == "dddas_thresholds":
        if base.policy is None:
            raise ParameterError("dddas_thresholds sweep needs a policy")
        scale = float(value)
        pol = base.policy
        return replace(base, policy=PolicyConfig(
            tau_load=(pol.tau_load[0] * scale, pol.tau_load[1] * scale),
            tau_susceptibility=(
                pol.tau_susceptibility[0] * scale, pol.tau_susceptibility[1] * scale,
            ),
            min_dwell=pol.min_dwell,
            enabled=pol.enabled,
        ))
    raise ParameterError(f"unknown sweep axis {axis!r}; one of {SWEEP_AXES}")


def sensitivity_sweep(axis: str, grid, base: ScenarioConfig, workers: int = 1) -> dict:
    """One-axis sweep with paired seeds; per-point failures are recorded."""
    if axis not in SWEEP_AXES:
        raise ParameterError(f"unknown sweep axis {axis!r}")
    grid = list(grid)
    if not grid:
        raise ParameterError("sweep grid is empty")
    rows = []
    for value in grid:
        cfg = _apply_axis(base, axis, value)
        cfg = replace(cfg, name=f"{base.name}_{axis}_{value}")
        try:
            res = run_ensemble(cfg, workers=workers)
        except Exception as exc:  # per-point failures recorded, sweep continues
            rows.append({"value": value, "error": f"{type(exc).__name__}: {exc}"})
            continue
        row = {
            "value": value,
            "eps_rel": res.eps_rel,
            "gamma_operator": res.gamma.operator,
            "gamma_cone": res.gamma.cone_quantile,
            "alpha": res.tail.alpha if res.tail else None,
            "alpha_theory": res.tail.alpha_theory if res.tail else None,
            "ci": (res.tail.ci.lo, res.tail.ci.hi) if res.tail else None,
            "lambda_u": res.dwell_rates["U"].rate if res.dwell_rates.get("U") else None,
            "burst_q99_over_median": _tail_presence(res.bursts),
            "intervention_fraction": res.intervention_fraction,
            "max_burst": float(np.max(res.bursts)),
        }
        rows.append(row)
    summary = {"axis": axis, "rows": rows}
    if axis == "regime_rates":
        pts = [
            (r["lambda_u"], r["alpha"]) for r in rows
            if r.get("alpha") is not None and r.get("lambda_u") is not None
        ]
        if len(pts) >= 2:
            lam = np.array([p[0] for p in pts])
            al = np.array([p[1] for p in pts])
            coef = np.polyfit(lam, al, 1)
            pred = np.polyval(coef, lam)
            ss_res = float(np.sum((al - pred) ** 2))
            ss_tot = float(np.sum((al - al.mean()) ** 2))
            summary["linearity"] = {
                "slope": float(coef[0]),
                "intercept": float(coef[1]),
                "r2": 1.0 - (ss_res / ss_tot if ss_tot > 0 else 0.0),
            }
    return summary


def _tail_presence(bursts: np.ndarray) -> float:
    med = nearest_rank_quantile(bursts, 0.5)
    q99 = nearest_rank_quantile(bursts, 0.99)
    return float(q99 / med) if med > 0 else float("inf")


# -- reporting ----------------------------------------------------------------

REPORT_REQUIRED_FIELDS = (
    "regime_process", "network_operator", "memory_discretization",
    "growth_rates", "tail_statistics", "audits", "seeds",
)


def emit_report(result: EnsembleResult) -> dict:
    """Structured per-experiment report with the full reporting protocol."""
    cfg = result.config
    lam = {lab: (est.rate if est else None) for lab, est in result.dwell_rates.items()}
    lam_se = {
        lab: (est.std_error if est else None) for lab, est in result.dwell_rates.items()
    }
    tail = result.tail
    rates = cfg.kernel.rates(cfg.horizon, cfg.solver.max_step)
    report = {
        "scenario": {"name": cfg.name, "kind": cfg.kind, "horizon": cfg.horizon,
                     "ensemble": cfg.ensemble},
        "regime_process": {
            "rate_su": cfg.rates.rate_su,
            "rate_us": cfg.rates.rate_us,
            "lambda_u_configured": cfg.rates.rate_us,
            "lambda_estimated": lam,
            "lambda_std_error": lam_se,
        },
        "network_operator": {
            "n": cfg.network.n,
            "rho_adjacency": result.rho_adjacency,
            "damping": {"S": cfg.network.damping_s, "U": cfg.network.damping_u},
            "coupling": {"S": cfg.network.coupling_s, "U": cfg.network.coupling_u},
            "forced_node": cfg.network.forced_node,
            "amplitude": cfg.network.amplitude,
            "omega": cfg.network.omega,
        },
        "memory_discretization": {
            "order": cfg.kernel.order,
            "r_min": float(rates[0]),
            "r_max": float(rates[-1]),
            "gain": 0.0 if cfg.kernel.memory_off else cfg.kernel.gain,
            "eps_rel": result.eps_rel,
        },
        "growth_rates": {
            "operator": result.gamma.operator,
            "dwell_quantile": result.gamma.dwell_quantile,
            "dwell_count": result.gamma.dwell_count,
            "dwell_mean": result.gamma.dwell_mean,
            "dwell_std_error": result.gamma.dwell_std_error,
            "cone_quantile": result.gamma.cone_quantile,
            "cone_count": result.gamma.cone_count,
            "cone_alpha": result.gamma.cone_alpha,
            "cone_window": result.gamma.cone_window,
            "quantile_level": result.gamma.quantile_level,
        },
        "tail_statistics": {
            "alpha": tail.alpha if tail else None,
            "intercept": tail.intercept if tail else None,
            "b_min": tail.b_min if tail else None,
            "ci_level": tail.ci.level if tail else None,
            "ci": [tail.ci.lo, tail.ci.hi] if tail else None,
            "bootstrap_replicates": tail.ci.replicates if tail else None,
            "bootstrap_skipped": tail.ci.skipped if tail else None,
            "points_used": tail.points_used if tail else None,
            "reliable": tail.reliable if tail else None,
            "alpha_theory": tail.alpha_theory if tail else None,
            "gamma_source": cfg.analysis.gamma_source,
            "error": result.tail_error,
        },
        "audits": {
            "energy_pass": result.audits.energy_pass,
            "pathwise_pass": result.audits.pathwise_pass,
            "chatter_violations": result.audits.chatter_violations,
            "release_violations": result.audits.release_violations,
            "total": result.audits.total,
            "excluded": result.audits.excluded,
            "max_energy_violation_margin": result.audits.max_energy_violation,
            "a_star": result.a_star,
            "contraction_certified": bool(result.contraction[0]),
            "kappa": result.contraction[1] if result.contraction[0] else None,
            "truncation_bound": result.truncation,
            "forcing_projection_min": result.forcing_projection[0],
            "forcing_projection_mean": result.forcing_projection[1],
            "intervention_fraction": result.intervention_fraction,
        },
        "seeds": {"master_seed": cfg.master_seed},
    }
    return report


def validate_report(report: dict) -> list[str]:
    """Names of missing required report sections (empty when complete)."""
    return [k for k in REPORT_REQUIRED_FIELDS if k not in report]
