"""Flat ``key = value`` run configuration for estimation on user data."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from typing import Dict, List

from .gmm import EstimationConfig, InstrumentPlan


class ConfigError(ValueError):
    pass


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

# key -> one-line description, shown by ``--help`` and in the README
DOCUMENTATION = {
    "order": "number of lagged outcomes p (1 or 2)",
    "plan": "moment plan: auto, ar1_triplets or ar2_t4 (auto picks by order)",
    "rescale": "divide each moment function by its sum of absolute terms",
    "initial_condition_split": "interact moments with initial-condition dummies",
    "triplet_periods": "how T_i in the unbalanced triplet weight is counted: modeled or observed",
    "weighting": "weight matrix: diagonal (inverse moment variances at the pilot) or identity",
    "gtol": "gradient tolerance of the quasi-Newton search",
    "maxiter": "iteration cap per start",
    "restarts": "extra randomly perturbed starts",
    "jitter": "half-width of the uniform start perturbation",
    "seed": "seed for restarts and the bootstrap",
    "fd_step": "finite-difference step for the moment Jacobian",
    "bootstrap": "bootstrap replications (0 disables)",
}


def parse_pairs(text: str) -> Dict[str, str]:
    """``key = value`` lines; ``#`` and ``;`` start comments."""
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None
    return dict(parser["run"])


@dataclass(frozen=True)
class RunConfig:
    order: int = 1
    plan: str = "auto"
    rescale: bool = True
    initial_condition_split: bool = True
    triplet_periods: str = "modeled"
    weighting: str = "diagonal"
    gtol: float = 1e-8
    maxiter: int = 500
    restarts: int = 5
    jitter: float = 0.5
    seed: int = 0
    fd_step: float = 1e-5
    bootstrap: int = 0

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ConfigError("order must be 1 or 2")
        if self.plan not in ("auto", "ar1_triplets", "ar2_t4"):
            raise ConfigError(f"unknown plan {self.plan!r}")
        if self.weighting not in ("diagonal", "identity"):
            raise ConfigError(f"unknown weighting {self.weighting!r}")
        if self.triplet_periods not in ("modeled", "observed"):
            raise ConfigError("triplet_periods must be modeled or observed")
        if self.gtol <= 0 or self.fd_step <= 0 or self.jitter < 0:
            raise ConfigError("gtol and fd_step must be positive, jitter nonnegative")
        if self.maxiter < 1 or self.restarts < 0 or self.bootstrap < 0 or self.bootstrap == 1:
            raise ConfigError("maxiter >= 1, restarts >= 0 and bootstrap = 0 or >= 2 required")

    @classmethod
    def from_mapping(cls, values: Dict[str, str]) -> "RunConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(values) - set(kinds))
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
        parsed = {}
        for key, text in values.items():
            text = str(text).strip()
            kind = kinds[key]
            try:
                if kind == "bool":
                    if text.lower() not in _TRUE | _FALSE:
                        raise ValueError(text)
                    parsed[key] = text.lower() in _TRUE
                elif kind == "int":
                    parsed[key] = int(text)
                elif kind == "float":
                    parsed[key] = float(text)
                else:
                    parsed[key] = text
            except ValueError:
                raise ConfigError(f"invalid value for {key}: {text!r}") from None
        return cls(**parsed)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls.from_mapping(parse_pairs(text))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def instrument_plan(self) -> InstrumentPlan:
        kind = self.plan if self.plan != "auto" else ("ar1_triplets" if self.order == 1 else "ar2_t4")
        return InstrumentPlan(kind, self.rescale, self.initial_condition_split, self.triplet_periods)

    def estimation(self, n_jobs: int = 1) -> EstimationConfig:
        return EstimationConfig(
            self.weighting, self.gtol, self.maxiter, self.restarts, self.jitter, self.seed, self.fd_step, self.bootstrap, n_jobs
        )

    def lines(self) -> List[str]:
        return [f"{k} = {v}" for k, v in asdict(self).items()]
