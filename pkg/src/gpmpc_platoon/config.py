"""Run configuration: an INI document with fixed sections and typed keys.

Resolution order, later wins: built-in defaults, config file, the
``GPMPC_OUTPUT_DIR`` environment variable (output directory only), and
``--set section.key=value`` overrides.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, fields, replace

from .chance_constraints import DistancePolicy, ProbabilityError
from .hv_model import DEFAULT_ARX, ArxCoefficients, HvInputError, TruthHvSpec
from .mpc_controller import MpcConfig, MpcInputError
from .sim_harness import SCENARIOS, Scenario

CONFIG_VERSION = 1
OUTPUT_ENV = "GPMPC_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _schedule(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        start, value = item.split(":")
        out.append((float(start), float(value)))
    return tuple(out)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return ", ".join(f"{repr(float(a))}:{repr(float(b))}" for a, b in v)
    if isinstance(v, tuple):
        return " ".join(repr(float(x)) for x in v)
    return str(v)


@dataclass(frozen=True)
class MetaSection:
    version: int = CONFIG_VERSION


@dataclass(frozen=True)
class ScenarioSection:
    name: str = "constant"
    duration: float = 30.0
    initial_gap: float = 20.0
    n_av: int = 2
    seed: int = 0
    # empty means the named scenario's own schedule
    reference_schedule: tuple[tuple[float, float], ...] = ()
    sample_truth: bool = False


@dataclass(frozen=True)
class MpcSection:
    horizon: int = 10
    dt: float = 0.1
    q1: float = 5.0
    q2: float = 5.0
    r: float = 10.0
    v_min: float = -35.0
    v_max: float = 35.0
    a_min: float = -5.0
    a_max: float = 5.0
    delta: float = 20.0
    p_def: float = 0.95
    sqp_tol: float = 1e-4
    sqp_max_iter: int = 10
    qp_tol: float = 1e-8
    qp_max_iter: int = 20000


@dataclass(frozen=True)
class ArxSection:
    c: tuple[float, ...] = DEFAULT_ARX.c
    b: tuple[float, ...] = DEFAULT_ARX.b
    sample_time: float = 0.1


@dataclass(frozen=True)
class TruthSection:
    reaction_gain: float = 0.003
    saturation_dec: float = 0.02
    saturation_inc: float = 0.02
    speed_deficit: float = 0.001
    noise_std: float = 0.0005


@dataclass(frozen=True)
class DataSection:
    n_train: int = 6
    n_test: int = 3
    duration: float = 200.0
    seed: int = 0
    levels: tuple[float, ...] = (10.0, 15.0, 20.0)
    hold_min: float = 8.0
    hold_max: float = 25.0


@dataclass(frozen=True)
class GpSection:
    stride: int = 5
    max_points: int = 100
    restarts: int = 5
    seed: int = 0


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"


@dataclass(frozen=True)
class RunConfig:
    meta: MetaSection = field(default_factory=MetaSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    mpc: MpcSection = field(default_factory=MpcSection)
    arx: ArxSection = field(default_factory=ArxSection)
    truth: TruthSection = field(default_factory=TruthSection)
    data: DataSection = field(default_factory=DataSection)
    gp: GpSection = field(default_factory=GpSection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- derived objects ----------------------------------------------------

    def mpc_config(self, variant: str = "gp") -> MpcConfig:
        m = self.mpc
        return MpcConfig(
            horizon=m.horizon, dt=m.dt, q1=m.q1, q2=m.q2, r=m.r,
            v_min=m.v_min, v_max=m.v_max, a_min=m.a_min, a_max=m.a_max,
            policy=DistancePolicy(m.delta, m.p_def), variant=variant,
            sqp_tol=m.sqp_tol, sqp_max_iter=m.sqp_max_iter, qp_tol=m.qp_tol, qp_max_iter=m.qp_max_iter,
        )

    def arx_coefficients(self) -> ArxCoefficients:
        return ArxCoefficients(self.arx.c, self.arx.b, self.arx.sample_time)

    def truth_spec(self, seed: int) -> TruthHvSpec:
        t = self.truth
        return TruthHvSpec(
            base=self.arx_coefficients(),
            reaction_gain=t.reaction_gain,
            saturation=(t.saturation_dec, t.saturation_inc),
            speed_deficit=t.speed_deficit,
            noise_std=t.noise_std,
            seed=seed,
        )

    def scenario_obj(self, name: str | None = None) -> Scenario:
        s = self.scenario
        name = s.name if name is None else name
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
        kw = dict(duration=s.duration, initial_gap=s.initial_gap, n_av=s.n_av, seed=s.seed)
        if s.reference_schedule:
            kw["reference_schedule"] = s.reference_schedule
        return SCENARIOS[name](**kw)

    def validate(self) -> "RunConfig":
        if self.meta.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.meta.version}")
        try:
            self.mpc_config()
            self.arx_coefficients()
            self.truth_spec(0)
            if self.scenario.name != "all":
                self.scenario_obj()
            else:
                for name in SCENARIOS:
                    self.scenario_obj(name)
        except (MpcInputError, ProbabilityError, HvInputError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        d, g = self.data, self.gp
        if d.n_train < 1 or d.n_test < 1:
            raise ConfigError("data.n_train and data.n_test must be >= 1")
        if not d.duration > 0 or not 0 < d.hold_min <= d.hold_max or not d.levels:
            raise ConfigError("data.duration, data.hold_min/hold_max and data.levels must be positive")
        if g.stride < 1 or g.max_points < 2 or g.restarts < 1:
            raise ConfigError("gp.stride >= 1, gp.max_points >= 2 and gp.restarts >= 1 required")
        if abs(self.arx.sample_time - self.mpc.dt) > 1e-12:
            raise ConfigError("arx.sample_time must equal mpc.dt")
        return self

    # -- text form ----------------------------------------------------------

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for sec in fields(self):
            obj = getattr(self, sec.name)
            parser[sec.name] = {f.name: _fmt_value(getattr(obj, f.name)) for f in fields(obj)}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()


_PARSERS = {int: int, float: float, str: str, bool: _bool}


def _parse_value(section: str, key: str, default, text: str):
    try:
        if key == "reference_schedule":
            return _schedule(text)
        if isinstance(default, tuple):
            return _floats(text)
        return _PARSERS[type(default)](text.strip())
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {text!r}") from exc


def _apply(cfg: RunConfig, section: str, key: str, text: str) -> RunConfig:
    names = {f.name for f in fields(cfg)}
    if section not in names:
        raise ConfigError(f"unknown section [{section}]")
    sec = getattr(cfg, section)
    keys = {f.name for f in fields(sec)}
    if key not in keys:
        raise ConfigError(f"unknown key {section}.{key}")
    value = _parse_value(section, key, getattr(sec, key), text)
    return replace(cfg, **{section: replace(sec, **{key: value})})


def load_config(path=None, overrides=(), env=None) -> RunConfig:
    """Resolve a RunConfig from an optional INI file, the environment and overrides."""
    env = os.environ if env is None else env
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        for section in parser.sections():
            for key, text in parser[section].items():
                cfg = _apply(cfg, section, key, text)
    if env.get(OUTPUT_ENV):
        cfg = replace(cfg, output=replace(cfg.output, dir=env[OUTPUT_ENV]))
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, text = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        cfg = _apply(cfg, section, key, text)
    return cfg.validate()
