"""Experiment configuration: an INI file with one section per pipeline stage.

Example::

    [problem]
    coefficients = paper2d
    nu = 0.1

    [actuators]
    m = 2

    [feedback]
    law = riccati

Unset keys take the defaults of the dataclasses below. Floats are written
with ``repr`` so that ``parse_config(render_config(cfg)) == cfg``.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields

from .coefficients import INITIAL_STATES, PAPER_PERIOD
from .errors import ConfigError
from .feedback import LAW_KINDS

COEFFICIENT_SETS = ("paper2d", "autonomous_const", "pure_diffusion")


@dataclass(frozen=True)
class ProblemConfig:
    coefficients: str = "paper2d"
    c: float = -5.0
    nu: float = 0.1
    initial: str = "paper"


@dataclass(frozen=True)
class MeshConfig:
    base_n: int = 8
    refine: int = 0


@dataclass(frozen=True)
class ActuatorConfig:
    m: int = 2
    r: float = 0.5


@dataclass(frozen=True)
class FeedbackConfig:
    law: str = "riccati"
    lam: float = 1.0
    beta: float = 1.0
    mu_bar: float = 1.0
    k_ric: float = 0.005
    tau: float = 0.1
    varpi: float = PAPER_PERIOD
    epsilon: float | None = None    # None: sqrt(N eps) on the coarse mesh
    n_max: int = 200
    delta_s: float = 0.2


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float = 3.0
    step: float | None = None       # None: 0.01 below refinement level 3, else 0.001
    window: float = 0.5


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    gain_table: str = "gain_table.psgt"


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    actuators: ActuatorConfig = field(default_factory=ActuatorConfig)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def step(self) -> float:
        if self.simulation.step is not None:
            return self.simulation.step
        return 0.01 if self.mesh.refine < 3 else 0.001

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        sub = dataclasses.replace(getattr(self, section), **changes)
        return validate(dataclasses.replace(self, **{section: sub}))


_AUTO = "auto"


def _parse_value(kind, text: str, where: str):
    text = text.strip()
    optional = "None" in str(kind)
    if optional and text.lower() == _AUTO:
        return None
    try:
        if "int" in str(kind):
            return int(text)
        if "float" in str(kind):
            return float(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {kind}") from None
    return text


def _render_value(v) -> str:
    if v is None:
        return _AUTO
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from None
    sections = {}
    for f in fields(ExperimentConfig):
        cls = f.default_factory().__class__
        known = {g.name: g for g in fields(cls)}
        values = {}
        if cp.has_section(f.name):
            for key, raw in cp.items(f.name):
                if key not in known:
                    raise ConfigError(f"{source}: unknown key [{f.name}] {key}")
                values[key] = _parse_value(known[key].type, raw, f"[{f.name}] {key}")
        sections[f.name] = cls(**values)
    unknown = set(cp.sections()) - set(sections)
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    return validate(ExperimentConfig(**sections))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return parse_config_text(text, str(path))


def render_config(cfg: ExperimentConfig) -> str:
    out = []
    for f in fields(cfg):
        sub = getattr(cfg, f.name)
        out.append(f"[{f.name}]")
        out.extend(f"{g.name} = {_render_value(getattr(sub, g.name))}" for g in fields(sub))
        out.append("")
    return "\n".join(out)


def _positive(name, v):
    if not (v > 0 and math.isfinite(v)):
        raise ConfigError(f"{name} must be positive and finite, got {v!r}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    p, ms, a, fb, sim = cfg.problem, cfg.mesh, cfg.actuators, cfg.feedback, cfg.simulation
    if p.coefficients not in COEFFICIENT_SETS:
        raise ConfigError(f"unknown coefficient set {p.coefficients!r}; choose from "
                          f"{', '.join(COEFFICIENT_SETS)}")
    if p.initial not in INITIAL_STATES:
        raise ConfigError(f"unknown initial state {p.initial!r}")
    if not math.isfinite(p.c):
        raise ConfigError("c must be finite")
    _positive("nu", p.nu)
    if ms.base_n < 1 or ms.refine < 0:
        raise ConfigError("need base_n >= 1 and refine >= 0")
    if a.m < 1 or not 0 < a.r < 1:
        raise ConfigError("need m >= 1 and 0 < r < 1")
    if fb.law not in LAW_KINDS:
        raise ConfigError(f"unknown law {fb.law!r}; choose from {', '.join(LAW_KINDS)}")
    if not math.isfinite(fb.lam):
        raise ConfigError("lam must be finite")
    for name in ("beta", "mu_bar", "k_ric", "varpi"):
        _positive(name, getattr(fb, name))
    if not (fb.tau >= 0 and math.isfinite(fb.tau)):
        raise ConfigError("tau must be nonnegative")
    if fb.k_ric > fb.varpi:
        raise ConfigError("k_ric must not exceed the period")
    if fb.epsilon is not None and not fb.epsilon > 0:
        raise ConfigError("epsilon must be positive (inf allowed)")
    if fb.n_max < 1 or not 0 < fb.delta_s <= 1:
        raise ConfigError("need n_max >= 1 and 0 < delta_s <= 1")
    if p.coefficients == "paper2d" and abs(fb.varpi - PAPER_PERIOD) > 1e-12:
        raise ConfigError(f"paper2d data have period pi/6; got varpi={fb.varpi!r}")
    _positive("horizon", sim.horizon)
    if sim.step is not None:
        _positive("step", sim.step)
    if not 0 < sim.window <= 1:
        raise ConfigError("window must lie in (0, 1]")
    if not cfg.output.dir or not cfg.output.gain_table:
        raise ConfigError("output paths must be nonempty")
    return cfg
