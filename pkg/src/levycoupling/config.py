"""Experiment configuration schema (YAML) and builders for model objects.

Drift callables are given as numpy expressions in ``x`` (rows of states, shape
(n, dim)) or ``u`` for the interaction kernel; only numpy names are visible.
"""
import copy
from typing import List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import ConfigDict, Field, ValidationError
from pydantic.dataclasses import dataclass

from . import levy as lv
from .coupling import CouplingConfig
from .errors import ConfigInvalid
from .sde import DriftConstants, DriftSpec

STRICT = ConfigDict(extra="forbid")
KINDS = ("simulate", "couple", "particles", "picard", "rates", "verify", "acceptance")


@dataclass(config=STRICT)
class Component:
    type: Literal["stable", "uniform", "gaussian"]
    alpha: float = 1.5
    scale: float = 1.0
    r_min: float = 0.0
    r_max: float = float("inf")
    intensity: float = 1.0
    low: float = -1.0
    high: float = 1.0
    sd: float = 1.0


@dataclass(config=STRICT)
class Measure:
    dim: int = 1
    components: List[Component] = Field(default_factory=list)


@dataclass(config=STRICT)
class Constants:
    K1: Optional[float] = None
    K2: Optional[float] = None
    K3: Optional[float] = None
    l0: Optional[float] = None
    K1b1: Optional[float] = None
    K2b1: Optional[float] = None
    rb1: Optional[float] = None
    Kb2: Optional[float] = None
    B0: Optional[float] = None
    lambda_dissip: Optional[float] = None
    C0_dissip: Optional[float] = None


@dataclass(config=STRICT)
class Drift:
    b: Optional[str] = None
    b1: Optional[str] = None
    b2: Optional[str] = None
    b2_matrix: Optional[List[List[float]]] = None
    constants: Constants = Field(default_factory=Constants)
    validate: bool = True


@dataclass(config=STRICT)
class Jump:
    epsilon_cutoff: float = 1e-3
    compensate: bool = True
    max_jumps_per_horizon: float = 1e7


@dataclass(config=STRICT)
class Coupling:
    kappa: float = 1.0
    delta: float = 0.0
    mixture: Literal["thinned", "scaled"] = "thinned"


@dataclass(config=STRICT)
class TimeGrid:
    T: float = 1.0
    dt: float = 0.01
    n_record: int = 11


@dataclass(config=STRICT)
class Initial:
    type: Literal["point", "gaussian"] = "point"
    x0: List[float] = Field(default_factory=lambda: [0.0])
    mean: float = 0.0
    sd: float = 1.0


@dataclass(config=STRICT)
class SimulateSection:
    x0: List[float] = Field(default_factory=lambda: [0.0])
    n_paths: int = 100


@dataclass(config=STRICT)
class CoupleSection:
    x0: List[float] = Field(default_factory=lambda: [1.0])
    y0: List[float] = Field(default_factory=lambda: [-1.0])
    n_paths: int = 1000
    n_survival: int = 41
    write_paths: bool = True


@dataclass(config=STRICT)
class ParticlesSection:
    mode: Literal["simulate", "poc"] = "simulate"
    n: int = 64
    n_list: List[int] = Field(default_factory=lambda: [16, 32, 64, 128])
    replicates: int = 20
    n_law_samples: int = 2048
    picard_iters: int = 3
    initial: Initial = Field(default_factory=Initial)


@dataclass(config=STRICT)
class PicardSection:
    iters: int = 3
    n_law_samples: int = 2048
    initial: Initial = Field(default_factory=Initial)


@dataclass(config=STRICT)
class Sigma:
    c0: Optional[float] = None
    alpha: Optional[float] = None


@dataclass(config=STRICT)
class RatesSection:
    theorem: Literal["thtpw", "additive", "poc"] = "thtpw"
    K1: float = 0.0
    K2: float = 1.0
    l0: float = 0.0
    K3: float = 0.0
    kappa: float = 1.0
    sigma: Sigma = Field(default_factory=Sigma)
    K2b1: float = 1.0
    B0: float = 0.0


@dataclass(config=STRICT)
class VerifySection:
    K1: float = 1.0
    K2: float = 0.5
    l0: float = 1.0
    n_grid: int = 10000
    lambda_factor: float = 1.0


@dataclass(config=STRICT)
class AcceptanceSection:
    suite: Literal["primary"] = "primary"
    criteria: Optional[List[str]] = None


@dataclass(config=STRICT)
class ExperimentConfig:
    kind: Literal["simulate", "couple", "particles", "picard", "rates", "verify", "acceptance"]
    seed: int
    out: Optional[str] = None
    threads: int = 1
    measure: Measure = Field(default_factory=Measure)
    drift: Drift = Field(default_factory=lambda: Drift(b="0*x"))
    jump: Jump = Field(default_factory=Jump)
    coupling: Coupling = Field(default_factory=Coupling)
    time: TimeGrid = Field(default_factory=TimeGrid)
    simulate: SimulateSection = Field(default_factory=SimulateSection)
    couple: CoupleSection = Field(default_factory=CoupleSection)
    particles: ParticlesSection = Field(default_factory=ParticlesSection)
    picard: PicardSection = Field(default_factory=PicardSection)
    rates: RatesSection = Field(default_factory=RatesSection)
    verify: VerifySection = Field(default_factory=VerifySection)
    acceptance: AcceptanceSection = Field(default_factory=AcceptanceSection)


def _set_dotted(doc, key, value):
    parts = key.split(".")
    cur = doc
    for p in parts[:-1]:
        nxt = cur.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigInvalid(key, "cannot override inside a non-mapping value")
        cur = nxt
    cur[parts[-1]] = value


def parse_config(doc, overrides=()):
    """Validate a mapping (plus ``key=value`` overrides) into an ExperimentConfig."""
    doc = copy.deepcopy(doc) if doc else {}
    if not isinstance(doc, dict):
        raise ConfigInvalid("<root>", "the config must be a mapping")
    for item in overrides:
        if "=" not in item:
            raise ConfigInvalid(item, "overrides must look like key=value")
        k, v = item.split("=", 1)
        _set_dotted(doc, k.strip(), yaml.safe_load(v))
    if "seed" not in doc:
        raise ConfigInvalid("seed", "a seed is required")
    try:
        return ExperimentConfig(**doc)
    except ValidationError as e:
        err = e.errors()[0]
        raise ConfigInvalid(".".join(str(p) for p in err["loc"]) or "<root>", err["msg"]) from None
    except TypeError as e:
        raise ConfigInvalid("<root>", str(e)) from None


def load_config(path, overrides=()):
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return parse_config(doc, overrides)


def to_dict(cfg):
    from pydantic import RootModel
    return RootModel[ExperimentConfig](cfg).model_dump(mode="json")


# ---------------------------------------------------------------------------
# builders

_NS = {k: getattr(np, k) for k in ("sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "arctan", "abs", "sign",
                                   "minimum", "maximum", "clip", "where", "pi")}


def compile_expr(expr, var, key):
    try:
        code = compile(expr, f"<{key}>", "eval")
    except SyntaxError as e:
        raise ConfigInvalid(key, f"invalid expression: {e}") from None
    for name in code.co_names:
        if name not in _NS and name != var:
            raise ConfigInvalid(key, f"unknown name {name!r} in expression")

    def f(a):
        return eval(code, {"__builtins__": {}}, {**_NS, var: a}) + 0.0 * a
    return f


def build_levy(cfg):
    m = cfg.measure
    comps = []
    for i, c in enumerate(m.components):
        if c.type == "stable":
            comps.append(lv.IsotropicStable(c.alpha, c.scale, m.dim, c.r_min, c.r_max))
        elif c.type == "uniform":
            if m.dim != 1:
                raise ConfigInvalid(f"measure.components.{i}", "uniform jumps are one-dimensional")
            comps.append(lv.uniform_jumps(c.intensity, c.low, c.high))
        else:
            comps.append(lv.gaussian_jumps(c.intensity, c.sd, m.dim))
    return lv.LevyMeasureSpec(tuple(comps), m.dim)


def build_drift(cfg):
    d = cfg.drift
    k = DriftConstants(**{f: getattr(d.constants, f) for f in DriftConstants.__dataclass_fields__})
    dim = cfg.measure.dim
    b = compile_expr(d.b, "x", "drift.b") if d.b else None
    b1 = compile_expr(d.b1, "x", "drift.b1") if d.b1 else None
    b2 = compile_expr(d.b2, "u", "drift.b2") if d.b2 else None
    try:
        return DriftSpec(b=b, b1=b1, b2=b2, dim=dim, constants=k, b2_matrix=d.b2_matrix, validate=d.validate)
    except ValueError as e:
        raise ConfigInvalid("drift", str(e)) from None


def build_jump(cfg):
    j = cfg.jump
    return lv.JumpSimConfig(j.epsilon_cutoff, j.compensate, j.max_jumps_per_horizon)


def build_coupling(cfg):
    c = cfg.coupling
    return CouplingConfig(kappa=c.kappa, delta=c.delta, mixture=c.mixture)


def build_initial(init, dim):
    if init.type == "point":
        x0 = np.asarray(init.x0, dtype=float).reshape(1, dim)
        return lambda n, rng: np.repeat(x0, n, axis=0)
    m, s = init.mean, init.sd
    return lambda n, rng: m + s * rng.standard_normal((n, dim))
