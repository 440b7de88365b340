"""Closed-form moment functions for the first-order model.

Every function broadcasts: ``y`` has shape ``(..., T)``, ``x`` has shape
``(..., T, K)`` and the scalar initial outcome ``y0`` has shape ``(...)``.
Variants are ``"A"`` and ``"B"``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from ._tables import IndexDiffs, as_int, match, piecewise
from .model import Parameters, linear_index, single_index_path

Weight = Union[None, Sequence[int], Callable[[np.ndarray], np.ndarray]]


class SingularCombinationError(ValueError):
    """A linear combination whose divisor vanishes at the given parameters."""


def _variant(v: str) -> str:
    v = str(v).upper()
    if v not in ("A", "B"):
        raise ValueError(f"unknown variant {v!r}; expected 'A' or 'B'")
    return v


def _gamma1(params: Parameters) -> float:
    if params.p != 1:
        raise ValueError(f"first-order moments need one lag coefficient, got {params.p}")
    return float(params.gamma[0])


def _prepare(y0, y, x, params: Parameters, T: Optional[int] = None):
    y = as_int(y)
    x = np.asarray(x, dtype=float)
    if T is not None and y.shape[-1] != T:
        raise ValueError(f"outcome path has length {y.shape[-1]}, expected {T}")
    if x.shape[-2] != y.shape[-1] or x.shape[-1] != params.K:
        raise ValueError(f"regressors of shape {x.shape} do not match T={y.shape[-1]}, K={params.K}")
    y0 = as_int(y0)
    return y0, y, x


def moment_ar1_t3(variant: str, y0, y, x, params: Parameters) -> np.ndarray:
    """The four T=3 moment functions, written with regressor differences."""
    variant = _variant(variant)
    g = _gamma1(params)
    y0, y, x = _prepare(y0, y, x, params, T=3)
    xb = linear_index(x, params.beta)
    d = lambda t, s: xb[..., t - 1] - xb[..., s - 1]  # noqa: E731
    e = np.exp
    with np.errstate(over="ignore"):
        if variant == "A":
            zero = [((0, 1, 0), e(d(1, 2))), ((0, 1, 1), e(d(1, 3) - g)), ((1, 0), -1.0), ((1, 1, 0), e(d(3, 2)) - 1)]
            one = [((0, 1, 0), e(d(1, 2) + g)), ((0, 1, 1), e(d(1, 3))), ((1, 0), -1.0), ((1, 1, 0), e(d(3, 2)) - 1)]
        else:
            zero = [((0, 0, 1), e(d(2, 3)) - 1), ((0, 1), -1.0), ((1, 0, 0), e(d(3, 1))), ((1, 0, 1), e(g + d(2, 1)))]
            one = [((0, 0, 1), e(d(2, 3)) - 1), ((0, 1), -1.0), ((1, 0, 0), e(d(3, 1) - g)), ((1, 0, 1), e(d(2, 1)))]
    return np.where(y0 == 1, piecewise(y, one), piecewise(y, zero))


def _weight_values(weight: Weight, y: np.ndarray, t: int) -> np.ndarray:
    if weight is None:
        return np.ones(y.shape[:-1])
    if callable(weight):
        return np.asarray(weight(y[..., : t - 1]), dtype=float)
    if len(weight) != t - 1:
        raise ValueError(f"prehistory pattern must have length {t - 1}")
    return match(y, tuple(weight)).astype(float)


def ar1_triplet_moment(variant: str, periods: Tuple[int, int, int], y0, y, x, params: Parameters, weight: Weight = None):
    """Moment built on periods ``t < s < r`` from single-index differences.

    ``weight`` multiplies by a function of ``(y_1, ..., y_{t-1})``; a tuple is
    read as the indicator of that prefix.
    """
    variant = _variant(variant)
    t, s, r = periods
    y0, y, x = _prepare(y0, y, x, params)
    T = y.shape[-1]
    if not 1 <= t < s < r <= T:
        raise ValueError(f"invalid period triple {periods} for T={T}")
    z = IndexDiffs(single_index_path(y0[..., None], y, x, params.beta, params.gamma))
    if variant == "A":
        cases = [((0, 1, 0), z.e(t, s)), ((0, 1, 1), z.e(t, r)), ((1, 0), -1.0), ((1, 1, 0), z.e(r, s) - 1)]
    else:
        cases = [((0, 0, 1), z.e(s, r) - 1), ((0, 1), -1.0), ((1, 0, 0), z.e(r, t)), ((1, 0, 1), z.e(s, t))]
    values = piecewise(y, cases, positions=(t, s, r))
    return values * _weight_values(weight, y, t)


@dataclass(frozen=True)
class MomentFamilyAR1:
    variant: str
    periods: Tuple[int, int, int] = (1, 2, 3)
    initial: int = 0
    prehistory_weight: Weight = None


def moment_ar1_general(family: MomentFamilyAR1, y, x, params: Parameters) -> np.ndarray:
    return ar1_triplet_moment(family.variant, family.periods, family.initial, y, x, params, family.prehistory_weight)


def ar1_rescale_denominator(variant: str, periods, y_prev, x, params: Parameters) -> np.ndarray:
    """Sum of absolute terms used to bound a triplet moment.

    Depends on the regressors at ``(t, s, r)`` and on ``y_{t-1}`` only; the lags
    inside are those of consecutive periods, so for ``(1, 2, 3)`` this is the
    usual T=3 normalisation.
    """
    variant = _variant(variant)
    g = _gamma1(params)
    t, s, r = periods
    xb = linear_index(np.asarray(x, dtype=float), params.beta)
    d = lambda a, b: xb[..., a - 1] - xb[..., b - 1]  # noqa: E731
    c = np.asarray(y_prev, dtype=float)
    with np.errstate(over="ignore"):
        if variant == "A":
            return 1 + np.exp(d(t, s) + c * g) + np.exp(d(t, r) + (c - 1) * g) + np.exp(d(r, s))
        return 1 + np.exp(d(s, r)) + np.exp(d(r, t) - c * g) + np.exp(d(s, t) + (1 - c) * g)


def moment_ar1_rescaled(variant: str, y0, y, x, params: Parameters) -> np.ndarray:
    """T=3 moment divided by the sum of the absolute values of its terms."""
    m = moment_ar1_t3(variant, y0, y, x, params)
    return m / ar1_rescale_denominator(variant, (1, 2, 3), y0, x, params)


def kitazawa_moments(t: int, y0, y, x, params: Parameters) -> Tuple[np.ndarray, np.ndarray]:
    """Transformed outcomes built from periods ``t-1, t, t+1``; returns ``(hU_t, hUpsilon_t)``."""
    g = _gamma1(params)
    y0, y, x = _prepare(y0, y, x, params)
    T = y.shape[-1]
    if not 2 <= t <= T - 1:
        raise ValueError(f"period {t} outside 2..{T - 1}")
    lead = np.broadcast_shapes(y0.shape, y.shape[:-1])
    hist = np.concatenate([np.broadcast_to(y0, lead)[..., None], np.broadcast_to(y, lead + (T,))], axis=-1).astype(float)
    xb = linear_index(x, params.beta)
    dx_now = xb[..., t - 1] - xb[..., t - 2]
    dx_next = xb[..., t] - xb[..., t - 1]
    prev2, prev, cur, nxt = hist[..., t - 2], hist[..., t - 1], hist[..., t], hist[..., t + 1]
    delta = np.expm1(g)

    u = cur + (1 - cur) * nxt - (1 - cur) * nxt * np.exp(-dx_next) - delta * prev * (1 - cur) * nxt * np.exp(-dx_next)
    tu = np.tanh((-g * prev2 + dx_now + dx_next) / 2)
    hu = u - prev - tu * (u + prev - 2 * u * prev)

    ups = cur * nxt + cur * (1 - nxt) * np.exp(dx_next) + delta * (1 - prev) * cur * (1 - nxt) * np.exp(dx_next)
    tv = np.tanh((g * (1 - prev2) + dx_now + dx_next) / 2)
    hv = ups - prev - tv * (ups + prev - 2 * ups * prev)
    return hu, hv


def kitazawa_factors(t: int, y0, y, x, params: Parameters) -> Tuple[np.ndarray, np.ndarray]:
    """Multipliers relating the transforms to the triplet moments on ``(t-1, t, t+1)``.

    ``hU_t = fb * m_B`` and ``hUpsilon_t = fa * m_A``; both factors depend only on
    ``y_{t-2}`` and the regressors.
    """
    g = _gamma1(params)
    y0, y, x = _prepare(y0, y, x, params)
    xb = linear_index(x, params.beta)
    prev2 = y0 if t == 2 else y[..., t - 3]
    s = xb[..., t] - xb[..., t - 2]
    fb = np.tanh((-g * prev2 + s) / 2) - 1
    fa = np.tanh((g * (1 - prev2) + s) / 2) + 1
    return fb, fa


HK_KINDS = ("survivor_y3_0", "survivor_y3_1")


def hk_combination(which: str, y0, y, x12_beta, params: Parameters) -> np.ndarray:
    """Linear combination of the T=3 moments that is valid when ``x_2 = x_3``.

    ``survivor_y3_0`` is supported on ``(0,1,0)`` and ``(1,0,0)``;
    ``survivor_y3_1`` on ``(0,1,1)`` and ``(1,0,1)``.
    """
    if which not in HK_KINDS:
        raise ValueError(f"unknown combination {which!r}; expected one of {HK_KINDS}")
    g = _gamma1(params)
    if g == 0.0:
        raise SingularCombinationError("combination divisor exp(+-gamma) - 1 vanishes at gamma = 0")
    y0 = as_int(y0)
    y = as_int(y)
    d12 = np.asarray(x12_beta, dtype=float)
    # one synthetic regressor with unit coefficient carries x_12'beta, with x_2 = x_3
    x = np.stack([d12, np.zeros_like(d12), np.zeros_like(d12)], axis=-1)[..., None]
    unit = Parameters([1.0], [g])
    ma = moment_ar1_t3("A", y0, y, x, unit)
    mb = moment_ar1_t3("B", y0, y, x, unit)
    if which == "survivor_y3_0":
        coef = np.where(y0 == 1, np.exp(d12), np.exp(d12 - g))
        return (ma + coef * mb) / np.expm1(-g)
    coef = np.where(y0 == 1, np.exp(d12 + g), np.exp(d12))
    return (ma + coef * mb) / np.expm1(g)


def tau_curves(prob_table, theta: float) -> Tuple[float, float]:
    """Both solutions for ``tau = exp(gamma + beta)`` given ``theta = exp(beta)``.

    ``prob_table`` holds the 8 path probabilities given ``y0 = 0`` for the
    design with regressor ``x_t = t``.
    """
    p = np.asarray(prob_table, dtype=float).reshape(8)
    if theta <= 0:
        raise ValueError("theta must be positive")
    if np.any(p < 0):
        raise ValueError("probabilities must be nonnegative")
    p001, p010, p011, p100, p101, p110 = p[1], p[2], p[3], p[4], p[5], p[6]
    denom = -p010 + theta * (p100 + p101) - (theta**2 - theta) * p110
    if denom <= 0:
        raise ValueError(f"theta={theta} outside the admissible range (nonpositive denominator)")
    tau_a = p011 / denom
    tau_b = (-(1 / theta - 1) * p001 + (p010 + p011) - theta**2 * p100) / p101
    return float(tau_a), float(tau_b)


def dependency_identity_t4(y0, y, x, params: Parameters) -> Tuple[np.ndarray, np.ndarray]:
    """Both sides of the expansion of ``(e^gamma - 1) m_A(1,2,3)`` in the T=4 basis."""
    g = _gamma1(params)
    if g == 0.0:
        raise SingularCombinationError("the T=4 expansion is stated for gamma != 0")
    y0, y, x = _prepare(y0, y, x, params, T=4)
    xb = linear_index(x, params.beta)
    d = lambda t, s: xb[..., t - 1] - xb[..., s - 1]  # noqa: E731
    m = lambda v, per: ar1_triplet_moment(v, per, y0, y, x, params)  # noqa: E731
    lhs = np.expm1(g) * m("A", (1, 2, 3))
    shift = np.exp((1 - y[..., 0]) * (y0 * g + d(1, 4)))
    rhs = (
        (1 + np.exp(g) - np.exp(d(4, 3)) - np.exp(g + d(3, 4))) * m("A", (1, 2, 4))
        + (np.exp(g + d(3, 4)) - 1) * m("A", (1, 3, 4))
        + np.exp(y0 * g) * (np.exp(d(1, 4)) - np.exp(d(1, 3))) * m("B", (1, 3, 4))
        + shift * ((np.exp(d(4, 2)) - np.exp(g + d(3, 2))) * m("A", (2, 3, 4)) + (np.exp(d(4, 3)) - 1) * m("B", (2, 3, 4)))
    )
    return lhs, rhs


def triplet_candidates(T: int, y0, x, params: Parameters, last_only: bool = True, consecutive: bool = False):
    """Value tables (rows) of every triplet moment times every prefix indicator.

    With ``last_only`` the final period is fixed at ``r = T``; with
    ``consecutive`` only ``(t, t+1, t+2)`` triplets are used.
    """
    from .model import all_outcomes

    ys = all_outcomes(T)
    rows, labels = [], []
    for t in range(1, T - 1):
        for s in range(t + 1, T):
            for r in range(s + 1, T + 1):
                if last_only and r != T:
                    continue
                if consecutive and (s != t + 1 or r != t + 2):
                    continue
                for prefix in product((0, 1), repeat=t - 1):
                    for v in ("A", "B"):
                        rows.append(ar1_triplet_moment(v, (t, s, r), y0, ys, x, params, weight=prefix))
                        labels.append((v, (t, s, r), prefix))
    return np.array(rows), labels
