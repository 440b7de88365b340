"""Closed-form moment functions for second- and higher-order models.

Initial conditions ``y0`` have shape ``(..., p)`` with ``y_0`` last; paths ``y``
have shape ``(..., T)`` and regressors ``(..., T, K)``.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np

from ._tables import IndexDiffs, as_int, piecewise
from .model import Parameters, linear_index, single_index_path

P2_T4_VARIANTS = ("A", "B", "C", "D")
P3_T5_VARIANTS = tuple("ABCDEFGH")
P2_T5_TAGS = tuple(
    [("shift", v) for v in P2_T4_VARIANTS]
    + [("breve", v) for v in P2_T4_VARIANTS]
    + [("tilde", v) for v in P2_T4_VARIANTS]
    + [("embed", v) for v in P3_T5_VARIANTS]
)
ARP_T3_PATTERNS = ("zeros", "zero_ones", "one_zeros", "ones")
ARP_T4_VARIANTS = ("A", "B", "C", "C_alt")


def _check(y0, y, x, params: Parameters, p: int, T: int):
    y0, y = as_int(y0), as_int(y)
    x = np.asarray(x, dtype=float)
    if params.p != p:
        raise ValueError(f"expected {p} lag coefficients, got {params.p}")
    if y0.shape[-1] != p:
        raise ValueError(f"initial condition must hold {p} lags")
    if y.shape[-1] != T or x.shape[-2] != T or x.shape[-1] != params.K:
        raise ValueError(f"outcomes/regressors do not match T={T}, K={params.K}")
    return y0, y, x


def _variant(v: str, allowed: Sequence[str]) -> str:
    v = str(v).upper() if str(v).lower() != "c_alt" else "C_alt"
    if v not in allowed:
        raise ValueError(f"unsupported variant {v!r}; expected one of {tuple(allowed)}")
    return v


def moment_p2_t4(variant: str, y0, y, x, params: Parameters) -> np.ndarray:
    """Second-order model observed for four periods after the two lags."""
    variant = _variant(variant, P2_T4_VARIANTS)
    y0, y, x = _check(y0, y, x, params, 2, 4)
    z = IndexDiffs(single_index_path(y0, y, x, params.beta, params.gamma))
    with np.errstate(over="ignore"):
        return piecewise(y, _p2_t4_cases(variant, z.e, np.exp(params.gamma[0])))


class _Summands:
    """A sum ``sum_k c_k exp(e_k)`` where each exponent ``e_k`` is a product key of index differences."""

    def __init__(self, terms):
        self.terms = {k: v for k, v in terms.items() if v != 0}

    @staticmethod
    def lift(other):
        return other if isinstance(other, _Summands) else _Summands({(): float(other)})

    def __add__(self, other):
        out = dict(self.terms)
        for k, v in _Summands.lift(other).terms.items():
            out[k] = out.get(k, 0.0) + v
        return _Summands(out)

    __radd__ = __add__

    def __neg__(self):
        return _Summands({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-_Summands.lift(other))

    def __rsub__(self, other):
        return _Summands.lift(other) - self

    def __mul__(self, other):
        out = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in _Summands.lift(other).terms.items():
                key = tuple(sorted(k1 + k2, key=str))
                out[key] = out.get(key, 0.0) + v1 * v2
        return _Summands(out)

    __rmul__ = __mul__


def _summand_exponents(key, path, y0, x, params):
    """Exponent of one summand, evaluated on the outcome ``path``."""
    z = single_index_path(y0, path, x, params.beta, params.gamma)
    total = np.zeros(z.shape[:-1])
    for factor in key:
        if factor == "g1":
            total = total + params.gamma[0]
        else:
            t, s = factor
            total = total + z[..., t - 1] - z[..., s - 1]
    return total


def _p2_t4_symbolic(variant: str):
    cases = _p2_t4_cases(variant, lambda t, s: _Summands({((t, s),): 1.0}), _Summands({("g1",): 1.0}))
    out = []
    for pattern, value in cases:
        path = np.zeros(4, dtype=np.int64)
        path[: len(pattern)] = pattern
        out.extend((path, key) for key in _Summands.lift(value).terms)
    return out


@lru_cache(maxsize=None)
def p2_t4_distinct_summands(variant: str, y0: Tuple[int, int]):
    """Positive summands of ``moment_p2_t4`` at initial condition ``y0``, with duplicates merged.

    Two summands are the same function when their exponents agree at a
    generic random point; the first representative of each group is kept.
    """
    rng = np.random.default_rng(20240601)
    x = rng.normal(size=(4, 2))
    params = Parameters(rng.normal(size=2), rng.normal(size=2))
    kept, seen = [], []
    for path, key in _p2_t4_symbolic(_variant(variant, P2_T4_VARIANTS)):
        value = float(_summand_exponents(key, path, np.asarray(y0), x, params))
        if all(abs(value - other) > 1e-9 for other in seen):
            seen.append(value)
            kept.append((tuple(path), key))
    return tuple(kept)


def p2_t4_scale(variant: str, y0, x, params: Parameters) -> np.ndarray:
    """Sum of the distinct positive summands appearing in ``moment_p2_t4``.

    Every summand is an exponential evaluated on an outcome path fixed by its
    case, so the result depends on ``(y0, x)`` only, bounds ``|m|`` and is
    smooth in the parameters.  ``y0`` has shape ``(..., 2)``.
    """
    variant = _variant(variant, P2_T4_VARIANTS)
    y0 = as_int(y0)
    x = np.asarray(x, dtype=float)
    lead = np.broadcast_shapes(y0.shape[:-1], x.shape[:-2])
    y0 = np.broadcast_to(y0, lead + (2,))
    x = np.broadcast_to(x, lead + x.shape[-2:])
    out = np.zeros(lead)
    for first in (0, 1):
        for second in (0, 1):
            rows = (y0[..., 0] == first) & (y0[..., 1] == second)
            if not rows.any():
                continue
            summands = p2_t4_distinct_summands(variant, (first, second))
            paths = np.array([path for path, _ in summands])
            z = single_index_path(y0[rows][:, None, :], paths, x[rows][:, None], params.beta, params.gamma)
            total = np.zeros(z.shape[0])
            with np.errstate(over="ignore"):
                for j, (_, key) in enumerate(summands):
                    exponent = np.zeros(z.shape[0])
                    for factor in key:
                        exponent += params.gamma[0] if factor == "g1" else z[:, j, factor[0] - 1] - z[:, j, factor[1] - 1]
                    total += np.exp(exponent)
            out[rows] = total
    return out


def p2_t4_support(variant: str) -> Tuple[Tuple[int, ...], ...]:
    """Outcome prefixes on which ``moment_p2_t4`` can be nonzero."""
    return tuple(pattern for pattern, _ in _p2_t4_cases(_variant(variant, P2_T4_VARIANTS), lambda t, s: 1.0, 1.0))


def _p2_t4_cases(variant: str, e, exp_g1):
    """Case table; ``e(t, s)`` and ``exp_g1`` may be numbers, arrays or ``_Summands``."""
    if variant == "A":
        cases = [
            ((0, 0, 1, 0), e(2, 3) - e(4, 3)),
            ((0, 0, 1, 1), e(2, 4) - 1),
            ((0, 1), -1.0),
            ((1, 0, 0), e(4, 1) * exp_g1),
            ((1, 0, 1, 0), e(4, 1) * (1 + e(2, 3) - e(4, 3))),
            ((1, 0, 1, 1), e(2, 1)),
        ]
    elif variant == "B":
        cases = [
            ((0, 1, 0, 0), e(1, 2)),
            ((0, 1, 0, 1), e(1, 4) * (1 + e(3, 2) - e(3, 4))),
            ((0, 1, 1), e(1, 4) * exp_g1),
            ((1, 0), -1.0),
            ((1, 1, 0, 0), e(4, 2) - 1),
            ((1, 1, 0, 1), e(3, 2) - e(3, 4)),
        ]
    elif variant == "C":
        cases = [
            ((0, 0, 0, 1), (e(2, 4) - 1) * (1 - e(3, 4))),
            ((0, 0, 1), e(2, 4) * exp_g1 - 1),
            ((0, 1), -1.0),
            ((1, 0, 0, 0), e(4, 1)),
            ((1, 0, 0, 1), e(2, 1) * (1 + e(3, 2) - e(3, 4))),
            ((1, 0, 1), e(2, 1)),
        ]
    else:
        cases = [
            ((0, 1, 0), e(1, 2)),
            ((0, 1, 1, 0), e(1, 2) * (1 + e(2, 3) - e(4, 3))),
            ((0, 1, 1, 1), e(1, 4)),
            ((1, 0), -1.0),
            ((1, 1, 0), e(4, 2) * exp_g1 - 1),
            ((1, 1, 1, 0), (e(4, 2) - 1) * (1 - e(4, 3))),
        ]
    return cases


def moment_p2_t4_zero_start(variant: str, y, x, params: Parameters) -> np.ndarray:
    """Same functions as ``moment_p2_t4`` at ``y0 = (0, 0)``, written with regressors and lag coefficients."""
    variant = _variant(variant, P2_T4_VARIANTS)
    y = as_int(y)
    g1, g2 = params.gamma
    xb = linear_index(np.asarray(x, dtype=float), params.beta)
    d = lambda t, s: xb[..., t - 1] - xb[..., s - 1]  # noqa: E731
    e = np.exp
    with np.errstate(over="ignore", invalid="ignore"):
        if variant == "A":
            cases = [
                ((0, 0, 1, 0), e(d(2, 3)) - e(d(4, 3) + g1)),
                ((0, 0, 1, 1), e(d(2, 4) - g1) - 1),
                ((0, 1), -1.0),
                ((1, 0, 0), e(d(4, 1) + g1)),
                ((1, 0, 1, 0), e(d(4, 1) + g1) * (1 + e(d(2, 3) + g1 - g2) - e(d(4, 3) + g1 - g2))),
                ((1, 0, 1, 1), e(d(2, 1) + g1)),
            ]
        elif variant == "B":
            cases = [
                ((0, 1, 0, 0), e(d(1, 2))),
                ((0, 1, 0, 1), e(d(1, 4) - g2) * (1 + e(d(3, 2) + g1) - e(d(3, 4) + g1 - g2))),
                ((0, 1, 1), e(d(1, 4) - g2)),
                ((1, 0), -1.0),
                ((1, 1, 0, 0), e(d(4, 2) - g1 + g2) - 1),
                ((1, 1, 0, 1), e(d(3, 2) + g2) - e(d(3, 4) + g1)),
            ]
        elif variant == "C":
            cases = [
                ((0, 0, 0, 1), (e(d(2, 4)) - 1) * (1 - e(d(3, 4)))),
                ((0, 0, 1), e(d(2, 4)) - 1),
                ((0, 1), -1.0),
                ((1, 0, 0, 0), e(d(4, 1))),
                ((1, 0, 0, 1), e(d(2, 1) + g1) * (1 - e(d(3, 4) + g2) + e(d(3, 2) - g1 + g2))),
                ((1, 0, 1), e(d(2, 1) + g1)),
            ]
        else:
            cases = [
                ((0, 1, 0), e(d(1, 2))),
                ((0, 1, 1, 0), e(d(1, 2)) * (1 + e(d(2, 3) - g1) - e(d(4, 3) + g2))),
                ((0, 1, 1, 1), e(d(1, 4) - g1 - g2)),
                ((1, 0), -1.0),
                ((1, 1, 0), e(d(4, 2) + g2) - 1),
                ((1, 1, 1, 0), (e(d(4, 2) + g2) - 1) * (1 - e(d(4, 3)))),
            ]
    return piecewise(y, cases)


def moment_p3_t5(variant: str, y0, y, x, params: Parameters) -> np.ndarray:
    """Third-order model observed for five periods after the three lags."""
    variant = _variant(variant, P3_T5_VARIANTS)
    y0, y, x = _check(y0, y, x, params, 3, 5)
    g1, g2, _ = params.gamma
    z = IndexDiffs(single_index_path(y0, y, x, params.beta, params.gamma))
    e = z.e
    E = np.exp
    with np.errstate(over="ignore", invalid="ignore"):
        tables = {
            "A": lambda: [
                ((0, 0, 1, 0, 0), e(2, 3) - e(5, 3)),
                ((0, 0, 1, 0, 1), (e(4, 3) - e(4, 5) + 1) * (e(2, 5) - 1)),
                ((0, 0, 1, 1), E(g1) * e(2, 5) - 1),
                ((0, 1), -1.0),
                ((1, 0, 0, 0), E(g2) * e(5, 1)),
                ((1, 0, 0, 1), E(g2 - g1) * e(5, 1)),
                ((1, 0, 1, 0, 0), e(5, 1) * (e(2, 3) - e(5, 3) + 1)),
                ((1, 0, 1, 0, 1), e(2, 1) + e(4, 1) + e(2, 1) * e(4, 3) - e(2, 1) * e(4, 5) - e(4, 1) * e(5, 3)),
                ((1, 0, 1, 1), e(2, 1)),
            ],
            "B": lambda: [
                ((0, 1, 0, 0), e(1, 2)),
                ((0, 1, 0, 1, 0), e(1, 2) + e(1, 4) + e(1, 2) * e(3, 4) - e(1, 4) * e(3, 5) - e(1, 2) * e(5, 4)),
                ((0, 1, 0, 1, 1), e(1, 5) * (e(3, 2) - e(3, 5) + 1)),
                ((0, 1, 1, 0), E(g2 - g1) * e(1, 5)),
                ((0, 1, 1, 1), E(g2) * e(1, 5)),
                ((1, 0), -1.0),
                ((1, 1, 0, 0), E(g1) * e(5, 2) - 1),
                ((1, 1, 0, 1, 0), (e(3, 4) - e(5, 4) + 1) * (e(5, 2) - 1)),
                ((1, 1, 0, 1, 1), e(3, 2) - e(3, 5)),
            ],
            "C": lambda: [
                ((0, 0, 0, 1, 0), -e(5, 4) * (1 - e(2, 5)) * (1 - e(3, 5))),
                ((0, 0, 0, 1, 1), (e(2, 5) - 1) * (1 - e(3, 5))),
                ((0, 0, 1, 0), E(g2 - g1) * e(2, 5) - 1),
                ((0, 0, 1, 1), E(g2) * e(2, 5) - 1),
                ((0, 1), -1.0),
                ((1, 0, 0, 0), E(g1) * e(5, 1)),
                ((1, 0, 0, 1, 0), -e(2, 1) * e(3, 4) + e(5, 1) + e(2, 1) * e(5, 4) + e(3, 1) * e(5, 4) - e(5, 1) * e(5, 4)),
                ((1, 0, 0, 1, 1), e(2, 1) + e(3, 1) - e(2, 1) * e(3, 5)),
                ((1, 0, 1), e(2, 1)),
            ],
            "D": lambda: [
                ((0, 1, 0), e(1, 2)),
                ((0, 1, 1, 0, 0), e(1, 2) + e(1, 3) - e(1, 2) * e(5, 3)),
                ((0, 1, 1, 0, 1), e(1, 5) - e(1, 2) * e(4, 3) + e(1, 2) * e(4, 5) + e(1, 3) * e(4, 5) - e(1, 5) * e(4, 5)),
                ((0, 1, 1, 1), E(g1) * e(1, 5)),
                ((1, 0), -1.0),
                ((1, 1, 0, 0), E(g2) * e(5, 2) - 1),
                ((1, 1, 0, 1), E(g2 - g1) * e(5, 2) - 1),
                ((1, 1, 1, 0, 0), (e(5, 2) - 1) * (1 - e(5, 3))),
                ((1, 1, 1, 0, 1), -e(4, 5) * (1 - e(5, 2)) * (1 - e(5, 3))),
            ],
            "E": lambda: [
                ((0, 0, 1, 0), e(2, 3) - E(g1) * e(5, 3)),
                ((0, 0, 1, 1, 0), (e(2, 3) - e(5, 3)) * (e(3, 4) - e(5, 4) + 1)),
                ((0, 0, 1, 1, 1), e(2, 5) - 1),
                ((0, 1), -1.0),
                ((1, 0, 0, 0), E(g1 + g2) * e(5, 1)),
                ((1, 0, 0, 1), E(g2) * e(5, 1)),
                ((1, 0, 1, 0), E(g1) * e(5, 1) * (-E(g1) * e(5, 3) + e(2, 3) + 1)),
                (
                    (1, 0, 1, 1, 0),
                    e(5, 1) * (e(2, 3) + e(2, 4) - e(5, 3) - e(5, 4) - e(2, 3) * e(5, 4) + e(5, 3) * e(5, 4) + 1),
                ),
                ((1, 0, 1, 1, 1), e(2, 1)),
            ],
            "F": lambda: [
                ((0, 1, 0, 0, 0), e(1, 2)),
                (
                    (0, 1, 0, 0, 1),
                    e(1, 5) * (e(3, 2) - e(3, 5) + e(4, 2) - e(4, 5) - e(3, 2) * e(4, 5) + e(3, 5) * e(4, 5) + 1),
                ),
                ((0, 1, 0, 1), E(g1) * e(1, 5) * (-E(g1) * e(3, 5) + e(3, 2) + 1)),
                ((0, 1, 1, 0), E(g2) * e(1, 5)),
                ((0, 1, 1, 1), E(g1 + g2) * e(1, 5)),
                ((1, 0), -1.0),
                ((1, 1, 0, 0, 0), e(5, 2) - 1),
                ((1, 1, 0, 0, 1), (e(3, 2) - e(3, 5)) * (e(4, 3) - e(4, 5) + 1)),
                ((1, 1, 0, 1), e(3, 2) - E(g1) * e(3, 5)),
            ],
            "G": lambda: [
                ((0, 0, 0, 0, 1), (e(2, 5) - 1) * (1 - e(3, 5)) * (1 - e(4, 5))),
                ((0, 0, 0, 1), (E(g1) * e(2, 5) - 1) * (1 - E(g1) * e(3, 5))),
                ((0, 0, 1, 0), E(g2) * e(2, 5) - 1),
                ((0, 0, 1, 1), E(g1 + g2) * e(2, 5) - 1),
                ((0, 1), -1.0),
                ((1, 0, 0, 0, 0), e(5, 1)),
                (
                    (1, 0, 0, 0, 1),
                    e(2, 1) + e(3, 1) - e(2, 1) * e(3, 5) + e(4, 1) - e(2, 1) * e(4, 5) - e(3, 1) * e(4, 5)
                    + e(2, 1) * e(3, 5) * e(4, 5),
                ),
                ((1, 0, 0, 1), -E(g1) * e(2, 1) * e(3, 5) + e(2, 1) + e(3, 1)),
                ((1, 0, 1), e(2, 1)),
            ],
            "H": lambda: [
                ((0, 1, 0), e(1, 2)),
                ((0, 1, 1, 0), -E(g1) * e(1, 2) * e(5, 3) + e(1, 2) + e(1, 3)),
                (
                    (0, 1, 1, 1, 0),
                    e(1, 2) + e(1, 3) + e(1, 4) - e(1, 2) * e(5, 3) - e(1, 2) * e(5, 4) - e(1, 3) * e(5, 4)
                    + e(1, 2) * e(5, 3) * e(5, 4),
                ),
                ((0, 1, 1, 1, 1), e(1, 5)),
                ((1, 0), -1.0),
                ((1, 1, 0, 0), E(g1 + g2) * e(5, 2) - 1),
                ((1, 1, 0, 1), E(g2) * e(5, 2) - 1),
                ((1, 1, 1, 0), (E(g1) * e(5, 2) - 1) * (1 - E(g1) * e(5, 3))),
                ((1, 1, 1, 1, 0), (e(5, 2) - 1) * (1 - e(5, 3)) * (1 - e(5, 4))),
            ],
        }
        return piecewise(y, tables[variant]())


def moment_p2_t5_family(tag: Tuple[str, str], y0, y, x, params: Parameters) -> np.ndarray:
    """One of the twenty second-order functions available with five periods.

    ``("shift", v)``: the four-period function on periods 1..4.
    ``("breve", v)`` / ``("tilde", v)``: the four-period function on periods
    2..5, switched on when ``y_1 = 0`` / ``y_1 = 1``.
    ``("embed", v)``: the third-order five-period function with a zero prepended
    to the initial condition and third lag coefficient 0.
    """
    kind, v = tag
    y0, y, x = _check(y0, y, x, params, 2, 5)
    if kind == "shift":
        return moment_p2_t4(v, y0, y[..., :4], x[..., :4, :], params)
    if kind in ("breve", "tilde"):
        lead = np.broadcast_shapes(y0.shape[:-1], y.shape[:-1])
        start = np.concatenate([np.broadcast_to(y0[..., -1:], lead + (1,)), np.broadcast_to(y[..., :1], lead + (1,))], axis=-1)
        inner = moment_p2_t4(v, start, y[..., 1:], x[..., 1:, :], params)
        on = y[..., 0] == (0 if kind == "breve" else 1)
        return np.where(on, inner, 0.0)
    if kind == "embed":
        start = np.concatenate([np.zeros(y0.shape[:-1] + (1,), dtype=y0.dtype), y0], axis=-1)
        return moment_p3_t5(v, start, y, x, Parameters(params.beta, [params.gamma[0], params.gamma[1], 0.0]))
    raise ValueError(f"unsupported tag {tag!r}")


def p2_t5_dependency_residuals(y0, y, x, params: Parameters) -> np.ndarray:
    """The four linear combinations of the twenty functions that vanish identically.

    Returns an array with a trailing axis of length 4.
    """
    y0, y, x = _check(y0, y, x, params, 2, 5)
    g1, g2 = params.gamma
    yl, yz = y0[..., 0].astype(float), y0[..., 1].astype(float)  # y_{-1}, y_0
    xb = linear_index(x, params.beta)
    x25, x51, x21 = xb[..., 1] - xb[..., 4], xb[..., 4] - xb[..., 0], xb[..., 1] - xb[..., 0]
    f = lambda tag: moment_p2_t5_family(tag, y0, y, x, params)  # noqa: E731
    br = {v: f(("breve", v)) for v in P2_T4_VARIANTS}
    ti = {v: f(("tilde", v)) for v in P2_T4_VARIANTS}
    em = {v: f(("embed", v)) for v in P3_T5_VARIANTS}
    E = np.exp
    r1 = (
        E(yz * g1 + yl * g2) * (em["C"] - br["A"])
        + E(x25 + (yz - 1) * g1 + (yl + yz) * g2) * br["A"]
        + E(g1 + x51) * (em["B"] - ti["A"])
        + E(g1 + x21 + yz * g2) * ti["A"]
    )
    r2 = (
        E(x25 + (yz + 1) * g1 + (yl + yz - 1) * g2) * (em["A"] - br["B"])
        + E((yz + 1) * g1 + yl * g2) * br["B"]
        + E(g1 + x21 + yz * g2) * (em["D"] - ti["B"])
        + E(g2 + x51) * ti["B"]
    )
    r3 = (
        E(yz * g1 + yl * g2) * (em["G"] - br["C"])
        + E(x25 + yz * g1 + (yl + yz) * g2) * br["C"]
        + E(x51) * (em["F"] - ti["C"])
        + E(g1 + x21 + yz * g2) * ti["C"]
    )
    r4 = (
        E(x25 + (yz - 1) * g1 + (yl + yz - 1) * g2) * (em["E"] - br["D"])
        + E(yz * g1 + yl * g2) * br["D"]
        + E(x21 + yz * g2) * (em["H"] - ti["D"])
        + E(g2 + x51) * ti["D"]
    )
    return np.stack([r1, r2, r3, r4], axis=-1)


def moment_p2_nox_t3(y0, y, gamma) -> np.ndarray:
    """Second-order model without regressors, three modeled periods."""
    y0, y = as_int(y0), as_int(y)
    g1, g2 = np.asarray(gamma, dtype=float).reshape(2)
    E = np.exp
    tables = {
        (0, 0): [((0, 1, 0), 1.0), ((0, 1, 1), E(-g1)), ((1, 0), -1.0)],
        (0, 1): [((0, 1), -1.0), ((1, 0, 0), E(g2 - g1)), ((1, 0, 1), E(g2))],
        (1, 0): [((0, 1, 0), E(g2)), ((0, 1, 1), E(g2 - g1)), ((1, 0), -1.0)],
        (1, 1): [((0, 1), -1.0), ((1, 0, 0), E(-g1)), ((1, 0, 1), 1.0)],
    }
    out = np.zeros(np.broadcast_shapes(y0.shape[:-1], y.shape[:-1]))
    for key, cases in tables.items():
        sel = (y0[..., 0] == key[0]) & (y0[..., 1] == key[1])
        out = np.where(sel, piecewise(y, cases), out)
    return out


def initial_pattern(y0) -> np.ndarray:
    """Classify initial conditions whose last ``p - 1`` entries are constant.

    Returns codes 0..3 for ``0_p``, ``(0, 1_{p-1})``, ``(1, 0_{p-1})``, ``1_p``
    and -1 otherwise.
    """
    y0 = as_int(y0)
    head, tail = y0[..., 0], y0[..., 1:]
    tail_zero, tail_one = (tail == 0).all(axis=-1), (tail == 1).all(axis=-1)
    code = np.full(y0.shape[:-1], -1)
    code = np.where((head == 0) & tail_zero, 0, code)
    code = np.where((head == 0) & tail_one, 1, code)
    code = np.where((head == 1) & tail_zero, 2, code)
    code = np.where((head == 1) & tail_one, 3, code)
    return code


def _require_equal(x, a: int, b: int, tol: float):
    x = np.asarray(x, dtype=float)
    gap = np.abs(x[..., a - 1, :] - x[..., b - 1, :]).max(initial=0.0)
    if gap > tol:
        raise ValueError(f"regressors in periods {a} and {b} differ by {gap:.3g} (> {tol:g})")


def moment_arp_t3_xeq(y0, y, x, params: Parameters, tol: float = 1e-12) -> np.ndarray:
    """Order-p functions for three periods when ``x_2 = x_3``.

    Only ``beta``, ``gamma_1`` and ``gamma_p`` enter.
    """
    p = params.p
    if p < 2:
        raise ValueError("restricted-regressor functions need p >= 2")
    y0, y, x = _check(y0, y, x, params, p, 3)
    _require_equal(x, 2, 3, tol)
    code = initial_pattern(y0)
    if np.any(code < 0):
        raise ValueError("initial condition must be 0_p, (0,1_{p-1}), (1,0_{p-1}) or 1_p")
    g1, gp = params.gamma[0], params.gamma[-1]
    xb = linear_index(x, params.beta)
    x12 = xb[..., 0] - xb[..., 1]
    E = np.exp
    with np.errstate(over="ignore"):
        tables = [
            [((0, 1, 0), E(x12)), ((0, 1, 1), E(x12 - g1)), ((1, 0), -1.0)],
            [((0, 1), -1.0), ((1, 0, 0), E(-x12 - g1 + gp)), ((1, 0, 1), E(-x12 + gp))],
            [((0, 1, 0), E(x12 + gp)), ((0, 1, 1), E(x12 - g1 + gp)), ((1, 0), -1.0)],
            [((0, 1), -1.0), ((1, 0, 0), E(-x12 - g1)), ((1, 0, 1), E(-x12))],
        ]
        out = np.zeros(np.broadcast_shapes(code.shape, y.shape[:-1], x12.shape))
        for k, cases in enumerate(tables):
            out = np.where(code == k, piecewise(y, cases), out)
    return out


def moment_arp_t4_xeq(variant: str, y0, y, x, params: Parameters, tol: float = 1e-12) -> np.ndarray:
    """Order-p (p >= 3) functions for four periods when ``x_3 = x_4``.

    Variants A, B and C need ``y0 = 0_p``; C_alt needs ``y0 = (0, 1, 0_{p-2})``.
    """
    variant = _variant(variant, ARP_T4_VARIANTS)
    p = params.p
    if p < 3:
        raise ValueError("these functions need p >= 3")
    y0, y, x = _check(y0, y, x, params, p, 4)
    _require_equal(x, 3, 4, tol)
    need = np.zeros(p, dtype=int)
    if variant == "C_alt":
        need[1] = 1
    if np.any((y0 != need).any(axis=-1)):
        raise ValueError(f"variant {variant} requires initial condition {tuple(need)}")
    g = params.gamma
    g1, g2 = g[0], g[1]
    xb = linear_index(x, params.beta)
    d = lambda t, s: xb[..., t - 1] - xb[..., s - 1]  # noqa: E731
    E = np.exp
    with np.errstate(over="ignore"):
        if variant == "A":
            inner = moment_arp_t3_xeq(np.zeros(y.shape[:-1] + (p,), dtype=int), y[..., 1:], x[..., 1:, :], params, tol=np.inf)
            return np.where(y[..., 0] == 0, inner, 0.0)
        if variant == "B":
            return moment_p2_t4("D", np.zeros(2, dtype=int), y, x, Parameters(params.beta, g[:2]))
        if variant == "C":
            cases = [
                ((0, 0, 1, 0), -E(g1)),
                ((0, 0, 1, 1), -1.0),
                ((0, 1, 0, 0), E(d(3, 2)) * (E(g1) - E(g2))),
                ((0, 1, 0, 1), E(g1 - g2) - 1),
                ((0, 1, 1), -1.0),
                ((1, 0, 0), E(d(3, 1) + g2)),
                ((1, 0, 1), E(d(2, 1) + g1)),
            ]
        else:
            gq, gp = g[p - 2], g[p - 1]
            cases = [
                ((0, 0, 1, 0), -E(g1)),
                ((0, 0, 1, 1), -1.0),
                ((0, 1, 0, 0), E(d(3, 2) - gp) * (E(g1) - E(g2))),
                ((0, 1, 0, 1), E(g1 - g2) - 1),
                ((0, 1, 1), -1.0),
                ((1, 0, 0), E(d(3, 1) + g2 - gq)),
                ((1, 0, 1), E(d(2, 1) + g1 - gq + gp)),
            ]
    return piecewise(y, cases)


def transplant_initial(y0, new_y0, x, params: Parameters) -> np.ndarray:
    """Regressor shift that keeps every single index unchanged when ``y0`` is replaced.

    Returns ``x`` with an extra regressor column carrying
    ``sum_r (y_{t-r} - new_{t-r}) gamma_r`` for ``t <= p``; use with a unit
    coefficient appended to ``beta``.
    """
    y0, new_y0 = as_int(y0), as_int(new_y0)
    x = np.asarray(x, dtype=float)
    p = params.p
    T = x.shape[-2]
    shift = np.zeros(x.shape[:-1])
    for t in range(1, min(p, T) + 1):
        for r in range(t, p + 1):
            idx = p + t - r - 1  # position of y_{t-r} inside y0
            shift[..., t - 1] += (y0[..., idx] - new_y0[..., idx]) * params.gamma[r - 1]
    return np.concatenate([x, shift[..., None]], axis=-1)
