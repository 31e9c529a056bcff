"""Experiment configuration read from TOML with strict key checking."""
import dataclasses
import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .adaptive import LAMBDA_MAX, LAMBDA_MIN, SCHEMES, THETA_MIN

OUT_DIR_ENV = "ADAPTIVE_TEKI_OUT_DIR"
PROBLEMS = ("linear-elliptic", "darcy")


class ConfigError(ValueError):
    """Invalid or unknown configuration entry; the message names the field."""


@dataclass
class ExperimentSection:
    problem: str = "linear-elliptic"
    schemes: list = field(default_factory=lambda: ["vanilla", "fixed", "bilevel", "map", "covariance"])
    seed: int = 0
    J: int = 50
    Q: int = 20
    N: int = None  # 200 linear, 100 Darcy
    h: float = 1.0
    out: str = "runs/default"


@dataclass
class ProblemSection:
    lam_truth: float = None  # 50 linear, 20 Darcy
    noise_std: float = None  # 0.1 linear, 0.01 Darcy
    mesh: float = None  # 2^-4 linear, 2^-6 Darcy
    K: int = None  # 8 linear, 16 Darcy
    prior_scale: float = 10.0  # linear: C0 = lam_truth * prior_scale * (-Laplacian)^-1
    kl_terms: int = 16
    kl_sigma: float = 1.0
    kl_tau: float = 0.0
    kl_nu: float = 1.0
    literal_kl: bool = False
    harmonic: bool = False
    source: float = 1.0


@dataclass
class RegularizationSection:
    lam_fixed: float = None  # 1 linear, 0.1 Darcy
    lam0: float = None  # defaults to lam_fixed
    theta0: float = None  # theta_0 = theta0 / eig(C0); defaults to lam0
    lam_min: float = LAMBDA_MIN
    lam_max: float = LAMBDA_MAX
    theta_min: float = THETA_MIN
    armijo_step: float = 1.0
    armijo_c1: float = 1e-4
    armijo_shrink: float = 0.5
    armijo_floor: float = 1e-12
    two_level_rate: float = 1.0
    theta_rate: float = 1.0


@dataclass
class ReferenceSection:
    lam_grid_min: float = 1e-4
    lam_grid_max: float = 1e4
    lam_grid_size: int = 81


@dataclass
class SdeSection:
    dt: float = 1e-2
    t_end: float = 100.0
    method: str = "implicit"
    alpha: float = 0.5
    R: float = 1.0
    window: list = field(default_factory=lambda: [10.0, 100.0])
    checkpoints: int = 60
    Q: int = 20


SECTIONS = {"experiment": ExperimentSection, "problem": ProblemSection,
            "regularization": RegularizationSection, "reference": ReferenceSection,
            "sde": SdeSection}

DEFAULTS = {
    "linear-elliptic": {"N": 200, "lam_truth": 50.0, "noise_std": 0.1, "mesh": 2.0**-4,
                        "K": 8, "lam_fixed": 1.0},
    "darcy": {"N": 100, "lam_truth": 20.0, "noise_std": 0.01, "mesh": 2.0**-6,
              "K": 16, "lam_fixed": 0.1},
}

_POSITIVE = {
    "experiment": ("J", "Q", "h"),
    "problem": ("lam_truth", "noise_std", "mesh", "K", "prior_scale", "kl_terms", "kl_sigma"),
    "regularization": ("lam_fixed", "lam0", "theta0", "lam_min", "lam_max", "theta_min",
                       "armijo_step", "armijo_c1", "armijo_floor", "two_level_rate", "theta_rate"),
    "reference": ("lam_grid_min", "lam_grid_max", "lam_grid_size"),
    "sde": ("dt", "t_end", "R", "checkpoints", "Q"),
}


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    problem: ProblemSection = field(default_factory=ProblemSection)
    regularization: RegularizationSection = field(default_factory=RegularizationSection)
    reference: ReferenceSection = field(default_factory=ReferenceSection)
    sde: SdeSection = field(default_factory=SdeSection)

    @property
    def is_linear(self):
        return self.experiment.problem == "linear-elliptic"

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **sections):
        """Copy with some section fields overridden: ``replace(experiment={"seed": 3})``."""
        data = self.to_dict()
        for name, vals in sections.items():
            data[name].update(vals)
        return from_dict(data)


def _coerce(section, name, value, default):
    where = f"{section}.{name}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    ann = {f.name: f.type for f in dataclasses.fields(SECTIONS[section])}[name]
    if ann is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if ann is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if ann is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if ann is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return list(value)
    return value  # pragma: no cover


def from_dict(data):
    """Build and validate a config from nested dicts; unknown keys raise :class:`ConfigError`."""
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    built = {}
    for name, cls in SECTIONS.items():
        raw = data.get(name)
        raw = {} if raw is None else raw
        if not isinstance(raw, dict):
            raise ConfigError(f"section [{name}] must be a table")
        known = {f.name: f for f in dataclasses.fields(cls)}
        bad = set(raw) - set(known)
        if bad:
            raise ConfigError(f"unknown key(s) in [{name}]: "
                              + ", ".join(f"{name}.{k}" for k in sorted(bad)))
        inst = cls()
        for k, v in raw.items():
            if v is None:
                continue
            setattr(inst, k, _coerce(name, k, v, getattr(cls(), k)))
        built[name] = inst
    cfg = ExperimentConfig(**built)
    _resolve(cfg)
    validate(cfg)
    return cfg


def _resolve(cfg):
    prob = cfg.experiment.problem
    if prob not in PROBLEMS:
        raise ConfigError(f"experiment.problem must be one of {PROBLEMS}, got {prob!r}")
    dflt = DEFAULTS[prob]
    if cfg.experiment.N is None:
        cfg.experiment.N = dflt["N"]
    for k in ("lam_truth", "noise_std", "mesh", "K"):
        if getattr(cfg.problem, k) is None:
            setattr(cfg.problem, k, dflt[k])
    reg = cfg.regularization
    if reg.lam_fixed is None:
        reg.lam_fixed = dflt["lam_fixed"]
    if reg.lam0 is None:
        reg.lam0 = reg.lam_fixed
    if reg.theta0 is None:
        reg.theta0 = reg.lam0


def validate(cfg):
    for section, names in _POSITIVE.items():
        sec = getattr(cfg, section)
        for n in names:
            v = getattr(sec, n)
            if v is None or not v > 0:
                raise ConfigError(f"{section}.{n} must be positive, got {v!r}")
    e = cfg.experiment
    if e.J < 2:
        raise ConfigError("experiment.J must be at least 2")
    if e.N < 0:
        raise ConfigError("experiment.N must be nonnegative")
    if not e.schemes:
        raise ConfigError("experiment.schemes must list at least one scheme")
    for s in e.schemes:
        if s not in SCHEMES:
            raise ConfigError(f"experiment.schemes: unknown scheme {s!r}; "
                              f"choose from {sorted(SCHEMES)}")
    if len(set(e.schemes)) != len(e.schemes):
        raise ConfigError("experiment.schemes contains duplicates")
    r = cfg.regularization
    if not r.lam_min < r.lam_max:
        raise ConfigError("regularization.lam_min must be below regularization.lam_max")
    if not 0 < r.armijo_shrink < 1:
        raise ConfigError("regularization.armijo_shrink must lie in (0, 1)")
    if not cfg.reference.lam_grid_min < cfg.reference.lam_grid_max:
        raise ConfigError("reference.lam_grid_min must be below reference.lam_grid_max")
    s = cfg.sde
    if not 0 < s.alpha < 1:
        raise ConfigError("sde.alpha must lie in (0, 1)")
    if s.method not in ("explicit", "implicit"):
        raise ConfigError("sde.method must be 'explicit' or 'implicit'")
    if len(s.window) != 2 or not 0 < s.window[0] < s.window[1] <= s.t_end:
        raise ConfigError("sde.window must be [t0, t1] with 0 < t0 < t1 <= sde.t_end")
    if not cfg.is_linear and cfg.problem.kl_nu < 0:
        raise ConfigError("problem.kl_nu must be nonnegative")


def load(path):
    """Read a TOML config file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_dict(data)


def output_dir(cfg, override=None):
    """Output directory: explicit override, then the environment, then the config."""
    return override or os.environ.get(OUT_DIR_ENV) or cfg.experiment.out
