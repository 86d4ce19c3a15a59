"""Run-configuration ingestion: strict YAML schema with line-anchored errors.

One configuration file drives a run. Unknown keys are rejected, every
value is type-checked, and error messages carry the file name and line of
the offending key so misconfigurations are easy to locate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .controller import PolicyConfig
from .errors import ConfigError, ParameterError
from .experiment import (
    AdjacencyConfig,
    AnalysisConfig,
    KernelConfig,
    NetworkConfig,
    RegimeRatesConfig,
    ScenarioConfig,
)
from .integrator import SolverConfig
from .model import ModeDesign


class _Node:
    """A parsed YAML value remembering its source line."""

    __slots__ = ("value", "line")

    def __init__(self, value, line):
        self.value = value
        self.line = line


def _build(node) -> _Node:
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = key_node.value
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", anchor=f"line {key_node.start_mark.line + 1}")
            out[key] = _build(value_node)
        return _Node(out, line)
    if isinstance(node, yaml.SequenceNode):
        return _Node([_build(v) for v in node.value], line)
    return _Node(_scalar(node), line)


def _scalar(node):
    loader = yaml.SafeLoader("")
    tag = loader.resolve(yaml.ScalarNode, node.value, (True, False))
    node = yaml.ScalarNode(tag, node.value, node.start_mark, node.end_mark)
    if tag == "tag:yaml.org,2002:null":
        return None
    if tag == "tag:yaml.org,2002:bool":
        return loader.construct_yaml_bool(node)
    if tag == "tag:yaml.org,2002:int":
        return loader.construct_yaml_int(node)
    if tag == "tag:yaml.org,2002:float":
        return loader.construct_yaml_float(node)
    return str(node.value)


def parse_tracked(text: str) -> _Node:
    root = yaml.compose(text, Loader=yaml.SafeLoader)
    if root is None:
        return _Node({}, 1)
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("configuration root must be a mapping", anchor="line 1")
    return _build(root)


class _Section:
    """Typed access to one mapping section with unknown-key detection."""

    def __init__(self, node: _Node, path: str, source: str):
        if not isinstance(node.value, dict):
            raise ConfigError(f"{path} must be a mapping", anchor=f"{source}:{node.line}")
        self.node = node
        self.path = path
        self.source = source
        self.seen = set()

    def anchor(self, key=None):
        if key is not None and key in self.node.value:
            return f"{self.source}:{self.node.value[key].line}"
        return f"{self.source}:{self.node.line}"

    def has(self, key):
        return key in self.node.value

    def child(self, key) -> "_Section":
        self.seen.add(key)
        return _Section(self.node.value[key], f"{self.path}.{key}", self.source)

    def get(self, key, kind, default=..., choices=None):
        self.seen.add(key)
        if key not in self.node.value:
            if default is ...:
                raise ConfigError(f"missing required key {self.path}.{key}", anchor=self.anchor())
            return default
        raw = self.node.value[key].value
        value = _coerce(raw, kind, f"{self.path}.{key}", self.anchor(key))
        if choices is not None and value not in choices:
            raise ConfigError(
                f"{self.path}.{key} must be one of {sorted(choices)}, got {value!r}",
                anchor=self.anchor(key),
            )
        return value

    def get_pair(self, key, default=...):
        self.seen.add(key)
        if key not in self.node.value:
            if default is ...:
                raise ConfigError(f"missing required key {self.path}.{key}", anchor=self.anchor())
            return default
        node = self.node.value[key]
        if not isinstance(node.value, list) or len(node.value) != 2:
            raise ConfigError(f"{self.path}.{key} must be a pair", anchor=self.anchor(key))
        return tuple(
            _coerce(item.value, float, f"{self.path}.{key}[{i}]", self.anchor(key))
            for i, item in enumerate(node.value)
        )

    def get_matrix(self, key):
        self.seen.add(key)
        node = self.node.value[key]
        if not isinstance(node.value, list):
            raise ConfigError(f"{self.path}.{key} must be a list of rows", anchor=self.anchor(key))
        rows = []
        for i, row in enumerate(node.value):
            if not isinstance(row.value, list):
                raise ConfigError(f"{self.path}.{key}[{i}] must be a list", anchor=self.anchor(key))
            rows.append(tuple(
                _coerce(c.value, float, f"{self.path}.{key}[{i}][{j}]", self.anchor(key))
                for j, c in enumerate(row.value)
            ))
        return tuple(rows)

    def finish(self):
        unknown = set(self.node.value) - self.seen
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(
                f"unknown key {self.path}.{key}",
                anchor=f"{self.source}:{self.node.value[key].line}",
            )


def _coerce(raw, kind, path, anchor):
    if kind is float:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"{path} must be a number, got {raw!r}", anchor=anchor)
        return float(raw)
    if kind is int:
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ConfigError(f"{path} must be an integer, got {raw!r}", anchor=anchor)
        return int(raw)
    if kind is bool:
        if not isinstance(raw, bool):
            raise ConfigError(f"{path} must be a boolean, got {raw!r}", anchor=anchor)
        return raw
    if kind is str:
        if not isinstance(raw, str):
            raise ConfigError(f"{path} must be a string, got {raw!r}", anchor=anchor)
        return raw
    raise AssertionError(kind)


@dataclass(frozen=True)
class RunConfig:
    """Scenario plus run-level options from one configuration file."""

    scenario: ScenarioConfig
    output_dir: str
    workers: int
    verbosity: int
    raw_text: str


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from None
    try:
        root_node = parse_tracked(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        anchor = f"{path.name}:{mark.line + 1}" if mark else path.name
        raise ConfigError(f"YAML syntax error: {exc}", anchor=anchor) from None
    try:
        scenario, output = _parse_scenario(root_node, path.name)
    except ParameterError as exc:
        raise ConfigError(str(exc), anchor=path.name) from None
    return RunConfig(
        scenario=scenario,
        output_dir=output.get("directory", str),
        workers=output.get("workers", int),
        verbosity=output.get("verbosity", int),
        raw_text=text,
    )


def _parse_scenario(root_node, source: str):
    root = _Section(root_node, "config", source)

    name = root.get("name", str, default="run")
    kind = root.get("kind", str, choices={"plain", "dddas", "memory_off", "safe_in_u"})
    horizon = root.get("horizon", float)
    ensemble = root.get("ensemble", int)
    master_seed = root.get("master_seed", int)

    net = root.child("network")
    adjacency = AdjacencyConfig()
    if net.has("adjacency"):
        adj = net.child("adjacency")
        adj_kind = adj.get("kind", str, default="ring_skip", choices={"ring_skip", "explicit"})
        if adj_kind == "explicit":
            adjacency = AdjacencyConfig(kind="explicit", matrix=adj.get_matrix("matrix"))
        else:
            norm = adj.get("normalize_rho", float, default=None) if adj.has("normalize_rho") else None
            adjacency = AdjacencyConfig(
                kind="ring_skip",
                skip=adj.get("skip", int, default=3),
                skip_weight=adj.get("skip_weight", float, default=0.5),
                normalize_rho=norm,
            )
        adj.finish()
    network = NetworkConfig(
        n=net.get("n", int),
        adjacency=adjacency,
        damping_s=net.get("damping_s", float),
        coupling_s=net.get("coupling_s", float),
        damping_u=net.get("damping_u", float),
        coupling_u=net.get("coupling_u", float),
        forced_node=net.get("forced_node", int, default=0),
        amplitude=net.get("amplitude", float, default=1.0),
        omega=net.get("omega", float, default=1.0),
    )
    net.finish()

    ker = root.child("kernel")
    kernel = KernelConfig(
        kind=ker.get("kind", str, default="power_law", choices={"power_law", "exp_sum"}),
        exponent=ker.get("exponent", float, default=1.5),
        offset=ker.get("offset", float, default=1.0),
        order=ker.get("order", int, default=8),
        r_min=ker.get("r_min", float, default=None) if ker.has("r_min") else None,
        r_max=ker.get("r_max", float, default=None) if ker.has("r_max") else None,
        gain=ker.get("gain", float, default=1.0),
        memory_off=ker.get("memory_off", bool, default=False),
    )
    ker.finish()

    reg = root.child("regime_process")
    rates = RegimeRatesConfig(
        rate_su=reg.get("rate_su", float),
        rate_us=reg.get("rate_us", float),
        start=reg.get("start", str, default="S", choices={"S", "U"}),
    )
    reg.finish()

    policy = None
    if root.has("policy"):
        pol = root.child("policy")
        enabled = pol.get("enabled", bool, default=True)
        policy = PolicyConfig(
            tau_load=pol.get_pair("tau_load"),
            tau_susceptibility=pol.get_pair("tau_susceptibility"),
            min_dwell=pol.get("min_dwell", float),
            enabled=enabled,
        )
        pol.finish()

    mode_design = ModeDesign(0.5, 2.0, 2.0)
    if root.has("mode_design"):
        md = root.child("mode_design")
        mode_design = ModeDesign(
            verify_gain=md.get("verify_gain", float, default=0.5),
            mitigate_damping=md.get("mitigate_damping", float),
            mitigate_decay=md.get("mitigate_decay", float),
        )
        md.finish()

    safe_damping = root.get("safe_damping", float, default=2.5)

    solver = SolverConfig()
    if root.has("solver"):
        sol = root.child("solver")
        solver = SolverConfig(
            rtol=sol.get("rtol", float, default=1e-8),
            atol=sol.get("atol", float, default=1e-10),
            max_step=sol.get("max_step", float, default=0.25),
            output_points=sol.get("output_points", int, default=2000),
        )
        sol.finish()

    analysis = AnalysisConfig()
    if root.has("analysis"):
        ana = root.child("analysis")
        analysis = AnalysisConfig(
            q_gamma=ana.get("q_gamma", float, default=0.9),
            q_b=ana.get("q_b", float, default=0.9),
            bootstrap=ana.get("bootstrap", int, default=1000),
            ci_level=ana.get("ci_level", float, default=0.95),
            cone_alpha=ana.get("cone_alpha", float, default=0.5),
            cone_window_steps=ana.get("cone_window_steps", int, default=10),
            min_dwell=ana.get("min_dwell", float, default=0.5),
            stability_tol=ana.get("stability_tol", float, default=0.05),
            gamma_source=ana.get(
                "gamma_source", str, default="hybrid",
                choices={"hybrid", "operator", "cone", "dwell"},
            ),
        )
        ana.finish()

    require_contraction = root.get("require_contraction", bool, default=False)

    out_values = {"directory": "out", "workers": 1, "verbosity": 0}
    if root.has("output"):
        output = root.child("output")
        out_values = {
            "directory": output.get("directory", str, default="out"),
            "workers": output.get("workers", int, default=1),
            "verbosity": output.get("verbosity", int, default=0),
        }
        output.finish()
    root.finish()

    scenario = ScenarioConfig(
        name=name, kind=kind, horizon=horizon, ensemble=ensemble,
        master_seed=master_seed, network=network, kernel=kernel, rates=rates,
        policy=policy, mode_design=mode_design, safe_damping=safe_damping,
        solver=solver, analysis=analysis, require_contraction=require_contraction,
    )
    return scenario, out_values


def scenario_to_dict(cfg: ScenarioConfig, output_dir: str = "out", workers: int = 1) -> dict:
    """YAML-ready dict mirroring the configuration schema."""
    out = {
        "name": cfg.name,
        "kind": cfg.kind,
        "horizon": cfg.horizon,
        "ensemble": cfg.ensemble,
        "master_seed": cfg.master_seed,
        "network": {
            "n": cfg.network.n,
            "damping_s": cfg.network.damping_s,
            "coupling_s": cfg.network.coupling_s,
            "damping_u": cfg.network.damping_u,
            "coupling_u": cfg.network.coupling_u,
            "forced_node": cfg.network.forced_node,
            "amplitude": cfg.network.amplitude,
            "omega": cfg.network.omega,
            "adjacency": _adjacency_dict(cfg.network.adjacency),
        },
        "kernel": {
            "kind": cfg.kernel.kind,
            "exponent": cfg.kernel.exponent,
            "offset": cfg.kernel.offset,
            "order": cfg.kernel.order,
            "gain": cfg.kernel.gain,
            "memory_off": cfg.kernel.memory_off,
        },
        "regime_process": {
            "rate_su": cfg.rates.rate_su,
            "rate_us": cfg.rates.rate_us,
            "start": cfg.rates.start,
        },
        "mode_design": {
            "verify_gain": cfg.mode_design.verify_gain,
            "mitigate_damping": cfg.mode_design.mitigate_damping,
            "mitigate_decay": cfg.mode_design.mitigate_decay,
        },
        "safe_damping": cfg.safe_damping,
        "solver": {
            "rtol": cfg.solver.rtol,
            "atol": cfg.solver.atol,
            "max_step": cfg.solver.max_step,
            "output_points": cfg.solver.output_points,
        },
        "analysis": {
            "q_gamma": cfg.analysis.q_gamma,
            "q_b": cfg.analysis.q_b,
            "bootstrap": cfg.analysis.bootstrap,
            "ci_level": cfg.analysis.ci_level,
            "cone_alpha": cfg.analysis.cone_alpha,
            "cone_window_steps": cfg.analysis.cone_window_steps,
            "min_dwell": cfg.analysis.min_dwell,
            "stability_tol": cfg.analysis.stability_tol,
            "gamma_source": cfg.analysis.gamma_source,
        },
        "require_contraction": cfg.require_contraction,
        "output": {"directory": output_dir, "workers": workers, "verbosity": 0},
    }
    if cfg.kernel.r_min is not None:
        out["kernel"]["r_min"] = cfg.kernel.r_min
    if cfg.kernel.r_max is not None:
        out["kernel"]["r_max"] = cfg.kernel.r_max
    if cfg.policy is not None:
        out["policy"] = {
            "tau_load": list(cfg.policy.tau_load),
            "tau_susceptibility": list(cfg.policy.tau_susceptibility),
            "min_dwell": cfg.policy.min_dwell,
            "enabled": cfg.policy.enabled,
        }
    return out


def _adjacency_dict(adj: AdjacencyConfig) -> dict:
    if adj.kind == "explicit":
        return {"kind": "explicit", "matrix": [list(r) for r in adj.matrix]}
    out = {"kind": "ring_skip", "skip": adj.skip, "skip_weight": adj.skip_weight}
    if adj.normalize_rho is not None:
        out["normalize_rho"] = adj.normalize_rho
    return out
