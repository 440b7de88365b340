"""Dynamic binary-choice panel logit with lagged outcomes and individual effects.

Conventions used throughout the package:

* an outcome path ``y`` holds the ``T`` modeled periods ``(y_1, ..., y_T)``;
* an initial condition ``y0`` holds the ``p`` pre-sample lags ordered
  oldest first, so ``y0[..., -1]`` is ``y_0``;
* regressors ``x`` have shape ``(..., T, K)``;
* outcome paths are enumerated with ``y_1`` as the most significant bit,
  so index 0 is all zeros and index ``2**T - 1`` is all ones.

All array functions broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import log_expit


@dataclass(frozen=True)
class ModelSpec:
    p: int
    T: int
    K: int = 0

    def __post_init__(self):
        if self.p < 1 or self.T < 1 or self.K < 0:
            raise ValueError(f"invalid model dimensions p={self.p}, T={self.T}, K={self.K}")

    @property
    def T_obs(self) -> int:
        return self.T + self.p

    @property
    def n_params(self) -> int:
        return self.K + self.p


@dataclass(frozen=True)
class Parameters:
    beta: np.ndarray
    gamma: np.ndarray

    def __init__(self, beta, gamma):
        beta = np.atleast_1d(np.asarray(beta, dtype=float)).reshape(-1)
        gamma = np.atleast_1d(np.asarray(gamma, dtype=float)).reshape(-1)
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(gamma))):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)

    @property
    def K(self) -> int:
        return self.beta.size

    @property
    def p(self) -> int:
        return self.gamma.size

    def vector(self) -> np.ndarray:
        """Stack as ``(beta, gamma)``; the order used by every estimator."""
        return np.concatenate([self.beta, self.gamma])

    @classmethod
    def from_vector(cls, theta, K: int) -> "Parameters":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:K], theta[K:])

    def check(self, spec: ModelSpec) -> None:
        if self.K != spec.K or self.p != spec.p:
            raise ValueError(
                f"parameter lengths (K={self.K}, p={self.p}) do not match spec (K={spec.K}, p={spec.p})"
            )


def all_outcomes(T: int) -> np.ndarray:
    """Every binary path of length ``T`` in canonical order, shape ``(2**T, T)``."""
    idx = np.arange(2**T)
    shifts = np.arange(T - 1, -1, -1)
    return ((idx[:, None] >> shifts) & 1).astype(np.int8)


def outcome_index(y) -> np.ndarray:
    """Canonical index of outcome paths (last axis is time)."""
    y = np.asarray(y, dtype=np.int64)
    T = y.shape[-1]
    weights = 2 ** np.arange(T - 1, -1, -1)
    return y @ weights


def linear_index(x, beta) -> np.ndarray:
    """``x_t' beta`` for every period; ``x`` has shape ``(..., T, K)``."""
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if beta.size == 0:
        return np.zeros(x.shape[:-1])
    return x @ beta


def single_index_path(y0, y, x, beta, gamma) -> np.ndarray:
    """Return ``z_t = x_t'beta + sum_l y_{t-l} gamma_l`` for ``t = 1..T``.

    Lags reaching before period 1 are read from ``y0`` (shape ``(..., p)``).
    """
    y0 = np.asarray(y0, dtype=float)
    y = np.asarray(y, dtype=float)
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    p = gamma.size
    T = y.shape[-1]
    if y0.shape[-1] != p:
        raise ValueError(f"initial condition has {y0.shape[-1]} lags, model has {p}")
    lead = np.broadcast_shapes(y0.shape[:-1], y.shape[:-1])
    history = np.concatenate(
        [np.broadcast_to(y0, lead + (p,)), np.broadcast_to(y, lead + (T,))], axis=-1
    )
    z = linear_index(x, beta)
    for lag in range(1, p + 1):
        z = z + gamma[lag - 1] * history[..., p - lag : p - lag + T]
    return z


def single_index(spec: ModelSpec, params: Parameters, y0, y, x, t: int) -> float:
    """Single index of period ``t`` (1-based) for one individual."""
    if not 1 <= t <= spec.T:
        raise ValueError(f"period {t} outside 1..{spec.T}")
    params.check(spec)
    x = np.asarray(x, dtype=float).reshape(spec.T, spec.K)
    z = single_index_path(np.asarray(y0).reshape(spec.p), np.asarray(y).reshape(spec.T), x, params.beta, params.gamma)
    return float(z[t - 1])


def log_sequence_probability(y0, y, x, beta, gamma, alpha) -> np.ndarray:
    """Log probability of path ``y`` given ``y0``, ``x`` and effect ``alpha``.

    Each factor is ``1 / (1 + exp((1 - 2 y_t)(z_t + alpha)))``, evaluated in log
    space so that large ``|alpha|`` never overflows.
    """
    z = single_index_path(y0, y, x, beta, gamma)
    alpha = np.asarray(alpha, dtype=float)[..., None]
    sign = 2.0 * np.asarray(y, dtype=float) - 1.0
    return log_expit(sign * (z + alpha)).sum(axis=-1)


def sequence_probability(spec: ModelSpec, params: Parameters, y0, y, x, alpha: float) -> float:
    params.check(spec)
    x = np.asarray(x, dtype=float).reshape(spec.T, spec.K)
    lp = log_sequence_probability(
        np.asarray(y0).reshape(spec.p), np.asarray(y).reshape(spec.T), x, params.beta, params.gamma, alpha
    )
    return float(np.exp(lp))


def probability_table(y0, x, beta, gamma, alpha, T: int) -> np.ndarray:
    """Probabilities of all ``2**T`` paths; leading axes of ``x``/``alpha`` broadcast.

    Result has shape ``lead + (2**T,)``.
    """
    ys = all_outcomes(T)
    y0 = np.asarray(y0, dtype=float)
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    lp = log_sequence_probability(
        y0[..., None, :], ys, x[..., None, :, :], beta, gamma, alpha[..., None]
    )
    return np.exp(lp)


def probability_vector(spec: ModelSpec, params: Parameters, y0, x, alpha: float) -> np.ndarray:
    """Probability vector over all outcome paths in canonical order."""
    params.check(spec)
    x = np.asarray(x, dtype=float).reshape(spec.T, spec.K)
    return probability_table(np.asarray(y0).reshape(spec.p), x, params.beta, params.gamma, alpha, spec.T)


# ---------------------------------------------------------------------------
# Panel data and simulation


@dataclass
class PanelDataset:
    """Outcomes and regressors on a common grid of ``T_obs`` periods.

    The first ``p`` grid periods supply initial conditions; the remaining ``T``
    are modeled.  ``observed`` marks which (individual, period) cells exist.
    """

    outcomes: np.ndarray  # (n, T_obs) int
    regressors: np.ndarray  # (n, T_obs, K)
    observed: np.ndarray  # (n, T_obs) bool
    spec: ModelSpec
    ids: Optional[list] = None
    periods: Optional[np.ndarray] = None  # calendar label of each grid column
    effects: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.outcomes = np.asarray(self.outcomes, dtype=np.int8)
        self.regressors = np.asarray(self.regressors, dtype=float)
        self.observed = np.asarray(self.observed, dtype=bool)
        n, T_obs = self.outcomes.shape
        if T_obs != self.spec.T_obs:
            raise ValueError(f"dataset has {T_obs} periods, spec expects {self.spec.T_obs}")
        if self.regressors.shape != (n, T_obs, self.spec.K):
            raise ValueError("regressor array shape does not match outcomes and spec")
        if self.observed.shape != (n, T_obs):
            raise ValueError("observation mask shape does not match outcomes")
        if self.periods is None:
            self.periods = np.arange(1 - self.spec.p, self.spec.T + 1)
        if self.ids is None:
            self.ids = [str(i) for i in range(n)]

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def balanced(self) -> bool:
        return bool(self.observed.all())

    @property
    def y0(self) -> np.ndarray:
        return self.outcomes[:, : self.spec.p]

    @property
    def y(self) -> np.ndarray:
        return self.outcomes[:, self.spec.p :]

    @property
    def x(self) -> np.ndarray:
        return self.regressors[:, self.spec.p :, :]

    def subset(self, rows) -> "PanelDataset":
        rows = np.asarray(rows)
        return PanelDataset(
            self.outcomes[rows],
            self.regressors[rows],
            self.observed[rows],
            self.spec,
            ids=[self.ids[i] for i in rows],
            periods=self.periods,
            effects=None if self.effects is None else self.effects[rows],
        )


RegressorRule = Union[str, Callable[[np.random.Generator, int, int, int], np.ndarray]]
EffectRule = Union[str, float, Callable[[np.random.Generator, np.ndarray], np.ndarray]]


def draw_regressors(rule: RegressorRule, rng: np.random.Generator, n: int, periods: int, K: int) -> np.ndarray:
    """Regressors of shape ``(n, periods, K)``.

    ``"design"``: ``X1 ~ N(0,1)`` and ``Xk = (X1 + Zk)/sqrt(2)`` for ``k > 1``.
    ``"normal"``: independent standard normals.
    """
    if callable(rule):
        x = np.asarray(rule(rng, n, periods, K), dtype=float)
        if x.shape != (n, periods, K):
            raise ValueError(f"regressor sampler returned shape {x.shape}, expected {(n, periods, K)}")
        return x
    if rule == "normal":
        return rng.standard_normal((n, periods, K))
    if rule == "design":
        x = rng.standard_normal((n, periods, K))
        if K > 1:
            x[:, :, 1:] = (x[:, :, :1] + x[:, :, 1:]) / np.sqrt(2.0)
        return x
    raise ValueError(f"unknown regressor rule {rule!r}")


def draw_effects(rule: EffectRule, rng: np.random.Generator, x: np.ndarray) -> np.ndarray:
    """Fixed effects for each individual.

    ``"zero"`` or a number gives a constant; ``"half_sum"`` gives half the sum of
    the first regressor over all observed periods.
    """
    n = x.shape[0]
    if callable(rule):
        a = np.asarray(rule(rng, x), dtype=float).reshape(-1)
        if a.size != n:
            raise ValueError("effect sampler returned wrong number of values")
        return a
    if isinstance(rule, (int, float)) and not isinstance(rule, bool):
        return np.full(n, float(rule))
    if rule == "zero":
        return np.zeros(n)
    if rule == "half_sum":
        if x.shape[-1] == 0:
            raise ValueError("half_sum effect rule needs at least one regressor")
        return 0.5 * x[:, :, 0].sum(axis=1)
    raise ValueError(f"unknown fixed-effect rule {rule!r}")


def simulate_panel(
    spec: ModelSpec,
    params: Parameters,
    fixed_effect_rule: EffectRule = "zero",
    regressor_rule: RegressorRule = "design",
    n: int = 1000,
    seed=None,
    initial: str = "zeros",
    burn_in: int = 50,
) -> PanelDataset:
    """Draw a balanced panel with ``T_obs = T + p`` periods.

    Every one of the ``T_obs`` periods is generated by the model.  With
    ``initial="zeros"`` lags before the first period are 0; with
    ``initial="burnin"`` the process first runs ``burn_in`` extra periods with
    fresh regressors and those are discarded.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    params.check(spec)
    if initial not in ("zeros", "burnin"):
        raise ValueError(f"unknown initial-condition rule {initial!r}")
    rng = np.random.default_rng(seed)
    T_obs = spec.T_obs
    x = draw_regressors(regressor_rule, rng, n, T_obs, spec.K)
    alpha = draw_effects(fixed_effect_rule, rng, x)
    lags = np.zeros((n, spec.p))
    if initial == "burnin":
        xb = draw_regressors(regressor_rule, rng, n, burn_in, spec.K)
        for t in range(burn_in):
            lags = _step(lags, xb[:, t], params, alpha, rng)
    y = np.empty((n, T_obs), dtype=np.int8)
    for t in range(T_obs):
        lags = _step(lags, x[:, t], params, alpha, rng)
        y[:, t] = lags[:, -1]
    return PanelDataset(y, x, np.ones((n, T_obs), dtype=bool), spec, effects=alpha)


def _step(lags, xt, params, alpha, rng):
    # lags are oldest first; gamma_1 multiplies the newest
    index = linear_index(xt, params.beta) + lags[:, ::-1] @ params.gamma + alpha
    u = rng.random(lags.shape[0])
    new = (u < 1.0 / (1.0 + np.exp(-index))).astype(float)
    return np.concatenate([lags[:, 1:], new[:, None]], axis=1)
