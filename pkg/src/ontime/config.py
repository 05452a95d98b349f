"""Declarative experiment configuration read from YAML.

Every field has a default, so an empty file describes the reference setup
(p = 0.2, T = 5, delta = 1, states [-500, 500], 20 delays and retransmissions,
discount 0.999, M = 10000). Errors carry the dotted path of the bad field.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields, replace

import yaml

from ._validation import ConfigurationError, DomainError
from .analytics import OnTimeSpec
from .channel import ChannelParams, ExponentialGain, success_probability
from .mdp import BOUNDARY_MODES, ActionSpace, StateSpace
from .solver import SolverConfig

SWEEP_VARIABLES = ("p", "t_target", "delta", "M", "n_r", "snr_threshold")
SIM_MODES = ("random", "optimal", "both")
ANALYTIC_QUANTITIES = ("per_packet", "repeat_ccdf", "expected_count")


def _opt(default, kind, nullable=False, choices=None):
    return field(default=default, metadata={"kind": kind, "nullable": nullable, "choices": choices})


@dataclass(frozen=True)
class ChannelSection:
    """Either a direct ``p`` or the physical link parameters it derives from."""

    p: float | None = _opt(0.2, float, nullable=True)
    gain_rate: float = _opt(2.0, float)
    transmit_power: float = _opt(1.0, float)
    distance: float = _opt(100.0, float)
    path_loss_exponent: float = _opt(2.0, float)
    noise_power: float = _opt(1e-4, float)
    snr_threshold: float = _opt(0.8047, float)

    def params(self):
        return ChannelParams(
            transmit_power=self.transmit_power, distance=self.distance,
            path_loss_exponent=self.path_loss_exponent, noise_power=self.noise_power,
            snr_threshold=self.snr_threshold, gain=ExponentialGain(self.gain_rate),
        )

    def probability(self):
        return self.p if self.p is not None else success_probability(self.params())


@dataclass(frozen=True)
class OnTimeSection:
    t_target: int = _opt(5, int)
    delta: int = _opt(1, int)


@dataclass(frozen=True)
class ModelSection:
    iota_min: int = _opt(-500, int)
    iota_max: int = _opt(500, int)
    n_d_max: int = _opt(20, int)
    n_r_max: int = _opt(20, int)
    boundary: str = _opt("clamp", str, choices=BOUNDARY_MODES)


@dataclass(frozen=True)
class SolverSection:
    discount: float = _opt(0.999, float)
    epsilon: float = _opt(1e-3, float)
    max_iterations: int = _opt(100_000, int)


@dataclass(frozen=True)
class SimulationSection:
    M: int = _opt(10_000, int)
    replications: int = _opt(30, int)
    seed: int = _opt(0, int)
    mode: str = _opt("both", str, choices=SIM_MODES)
    policy: str | None = _opt(None, str, nullable=True)
    theory: bool = _opt(False, bool)


@dataclass(frozen=True)
class AnalyticSection:
    quantity: str = _opt("per_packet", str, choices=ANALYTIC_QUANTITIES)
    m_max: int = _opt(30, int)
    n_r: int = _opt(0, int)
    j_min: int = _opt(-20, int)
    j_max: int = _opt(20, int)


@dataclass(frozen=True)
class SweepSection:
    variable: str | None = _opt(None, str, nullable=True, choices=SWEEP_VARIABLES)
    values: tuple = _opt((), tuple)


SECTIONS = {
    "channel": ChannelSection,
    "on_time": OnTimeSection,
    "model": ModelSection,
    "solver": SolverSection,
    "simulation": SimulationSection,
    "analytic": AnalyticSection,
    "sweep": SweepSection,
}

# Where each sweep variable lives.
_SWEEP_TARGET = {
    "p": ("channel", "p"),
    "snr_threshold": ("channel", "snr_threshold"),
    "t_target": ("on_time", "t_target"),
    "delta": ("on_time", "delta"),
    "M": ("simulation", "M"),
    "n_r": ("analytic", "n_r"),
}


def _coerce(value, meta, path):
    if value is None:
        if meta["nullable"]:
            return None
        raise ConfigurationError(f"{path}: value required")
    kind = meta["kind"]
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{path}: expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind is float:
        # YAML 1.1 reads exponent literals without a dot (1e-3) as strings.
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                raise ConfigurationError(f"{path}: expected a number, got {value!r}") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{path}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigurationError(f"{path}: expected a finite number, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"{path}: expected a string, got {value!r}")
        if meta["choices"] and value not in meta["choices"]:
            raise ConfigurationError(f"{path}: must be one of {list(meta['choices'])}, got {value!r}")
        return value
    if kind is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{path}: expected a list, got {value!r}")
        out = []
        for k, v in enumerate(value):
            if isinstance(v, str):
                try:
                    v = float(v)
                except ValueError:
                    pass
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigurationError(f"{path}[{k}]: expected a number, got {v!r}")
            out.append(v)
        return tuple(out)
    raise AssertionError(kind)


def _section_from_dict(cls, data, path):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigurationError(f"{path}.{unknown[0]}: unknown field")
    kwargs = {name: _coerce(data[name], f.metadata, f"{path}.{name}")
              for name, f in known.items() if name in data}
    return cls(**kwargs)


@dataclass(frozen=True)
class ExperimentConfig:
    channel: ChannelSection = field(default_factory=ChannelSection)
    on_time: OnTimeSection = field(default_factory=OnTimeSection)
    model: ModelSection = field(default_factory=ModelSection)
    solver: SolverSection = field(default_factory=SolverSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    analytic: AnalyticSection = field(default_factory=AnalyticSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    output: str | None = None

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, data, validate=True):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"config: expected a mapping, got {type(data).__name__}")
        unknown = sorted(set(data) - set(SECTIONS) - {"output"})
        if unknown:
            raise ConfigurationError(f"{unknown[0]}: unknown section")
        kwargs = {name: _section_from_dict(sec, data.get(name), name)
                  for name, sec in SECTIONS.items()}
        out = data.get("output")
        if out is not None and not isinstance(out, str):
            raise ConfigurationError(f"output: expected a path string, got {out!r}")
        cfg = cls(output=out, **kwargs)
        if validate:
            cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, text):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"config: not valid YAML ({exc})") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_yaml(fh.read())

    def to_dict(self):
        out = {}
        for name in SECTIONS:
            sec = dataclasses.asdict(getattr(self, name))
            if "values" in sec:
                sec["values"] = list(sec["values"])
            out[name] = sec
        out["output"] = self.output
        return out

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)

    def with_overrides(self, assignments):
        """Apply ``section.field=value`` strings; values are parsed as YAML scalars."""
        data = self.to_dict()
        for item in assignments:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigurationError(f"override {item!r}: expected section.field=value")
            parts = key.strip().split(".")
            try:
                value = yaml.safe_load(raw)
            except yaml.YAMLError:
                raise ConfigurationError(f"{key}: cannot parse {raw!r}") from None
            if parts == ["output"]:
                data["output"] = value
                continue
            if len(parts) != 2 or parts[0] not in SECTIONS:
                raise ConfigurationError(f"{key}: unknown field")
            data[parts[0]][parts[1]] = value
        return type(self).from_dict(data)

    # -- validation ---------------------------------------------------------

    def validate(self):
        sweep = self.sweep
        if sweep.variable is None and sweep.values:
            raise ConfigurationError("sweep.variable: required when sweep.values is given")
        if sweep.variable is not None and not sweep.values:
            raise ConfigurationError("sweep.values: empty grid")
        if sweep.variable == "snr_threshold" and self.channel.p is not None:
            raise ConfigurationError("channel.p: must be null when sweeping snr_threshold")
        for point in self.points():
            point._validate_point()
        return self

    def _validate_point(self):
        path = "channel"
        try:
            if self.channel.p is None:
                self.channel.params()
                path = "channel.snr_threshold"
            else:
                path = "channel.p"
            p = self.channel.probability()
            if not 0.0 < p <= 1.0:
                raise DomainError(f"p must lie in (0, 1], got {p}")
            path = "on_time"
            spec = self.spec()
            path = "model"
            states = self.state_spaces()
            ActionSpace(self.model.n_d_max, self.model.n_r_max)
            if spec.t_target + spec.delta > states.iota_max:
                raise ConfigurationError(
                    f"t_target + delta = {spec.t_target + spec.delta} exceeds iota_max"
                )
            path = "solver"
            self.solver_config()
        except (DomainError, ConfigurationError) as exc:
            section = path.split(".")[0]
            first = str(exc).split()[0]
            if section in SECTIONS and first in SECTIONS[section].__dataclass_fields__:
                path = f"{section}.{first}"
            raise ConfigurationError(f"{path}: {exc}") from None
        sim, ana = self.simulation, self.analytic
        for name, value, lo in (("simulation.M", sim.M, 1),
                                ("simulation.replications", sim.replications, 1),
                                ("simulation.seed", sim.seed, 0),
                                ("analytic.m_max", ana.m_max, 1),
                                ("analytic.n_r", ana.n_r, 0)):
            if value < lo:
                raise ConfigurationError(f"{name}: must be >= {lo}, got {value}")
        if sim.seed >= 2**64:
            raise ConfigurationError("simulation.seed: must fit in 64 bits")
        if ana.j_min > ana.j_max:
            raise ConfigurationError("analytic.j_min: must not exceed analytic.j_max")

    # -- derived objects ----------------------------------------------------

    def points(self):
        """One config per sweep value (just ``self`` when nothing is swept)."""
        if self.sweep.variable is None:
            return [self]
        section, name = _SWEEP_TARGET[self.sweep.variable]
        out = []
        kind = SECTIONS[section].__dataclass_fields__[name].metadata["kind"]
        for k, value in enumerate(self.sweep.values):
            value = _coerce(value, {"kind": kind, "nullable": False, "choices": None},
                            f"sweep.values[{k}]")
            sec = replace(getattr(self, section), **{name: value})
            out.append(replace(self, **{section: sec, "sweep": SweepSection()}))
        return out

    @property
    def p(self):
        return self.channel.probability()

    def spec(self):
        return OnTimeSpec(self.on_time.t_target, self.on_time.delta)

    def state_spaces(self):
        return StateSpace(self.model.iota_min, self.model.iota_max)

    def action_space(self):
        return ActionSpace(self.model.n_d_max, self.model.n_r_max)

    def solver_config(self):
        s = self.solver
        return SolverConfig(discount=s.discount, epsilon=s.epsilon, max_iterations=s.max_iterations)

    def sweep_value(self, point):
        """Value of the swept variable in one of ``points()``."""
        section, name = _SWEEP_TARGET[self.sweep.variable]
        return getattr(getattr(point, section), name)
