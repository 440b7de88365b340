"""Numerical checks of the moment functions, their identities and the moment counts.

Every check returns a :class:`Check` so that callers can print or export a
uniform report.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .discovery import measured_moment_count, moment_count_formula, solve_constrained_moment, system_ar1_t3, system_p2_t4_a
from .model import ModelSpec, Parameters, all_outcomes, probability_table
from .moments_ar1 import (
    HK_KINDS,
    ar1_triplet_moment,
    dependency_identity_t4,
    hk_combination,
    kitazawa_factors,
    kitazawa_moments,
    moment_ar1_rescaled,
    moment_ar1_t3,
    triplet_candidates,
)
from .moments_arp import (
    P2_T4_VARIANTS,
    P2_T5_TAGS,
    P3_T5_VARIANTS,
    moment_arp_t3_xeq,
    moment_arp_t4_xeq,
    moment_p2_nox_t3,
    moment_p2_t4,
    moment_p2_t4_zero_start,
    moment_p2_t5_family,
    moment_p3_t5,
    p2_t5_dependency_residuals,
)

SUITES = ("ar1", "arp", "identities", "counts", "discovery")
ORTHOGONALITY_TOL = 1e-10
IDENTITY_TOL = 1e-10
ORACLE_TOL = 1e-9


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


class _Draws:
    """Random ``(x, beta, gamma, alpha)`` on moderate ranges."""

    def __init__(self, seed, K: int = 2):
        self.rng = np.random.default_rng(seed)
        self.K = K

    def params(self, p: int) -> Parameters:
        return Parameters(self.rng.uniform(-1, 1, self.K), self.rng.uniform(-1, 1, p))

    def x(self, T: int, equal: Optional[tuple] = None) -> np.ndarray:
        x = self.rng.standard_normal((T, self.K))
        if equal is not None:
            a, b = equal
            x[b - 1] = x[a - 1]
        return x

    def alpha(self) -> float:
        return float(self.rng.standard_normal())


# ---------------------------------------------------------------------------
# Orthogonality


@dataclass(frozen=True)
class _Family:
    name: str
    p: int
    T: int
    initials: Sequence[tuple]
    moment: Callable  # (y0 tuple, y, x, params) -> (..., 2**T)
    equal: Optional[tuple] = None
    regressors: bool = True


def _worst_orthogonality(family: _Family, draws: int, seed) -> float:
    gen = _Draws(seed)
    ys = all_outcomes(family.T)
    worst = 0.0
    for i in range(draws):
        y0 = family.initials[i % len(family.initials)]
        params, x, alpha = gen.params(family.p), gen.x(family.T, family.equal), gen.alpha()
        if not family.regressors:
            x = np.zeros_like(x)
        probs = probability_table(np.asarray(y0), x, params.beta, params.gamma, alpha, family.T)
        values = np.asarray(family.moment(y0, ys, x, params), dtype=float)
        worst = max(worst, float(np.abs(values @ probs).max()))
    return worst


def _ar1_families() -> List[_Family]:
    zero_one = [(0,), (1,)]
    fams = []
    for v in ("A", "B"):
        fams.append(_Family(f"p=1 T=3 {v}", 1, 3, zero_one, lambda y0, y, x, th, v=v: moment_ar1_t3(v, y0[0], y, x, th)))
        fams.append(_Family(f"p=1 T=3 {v} rescaled", 1, 3, zero_one, lambda y0, y, x, th, v=v: moment_ar1_rescaled(v, y0[0], y, x, th)))
    for T in (4, 5):
        fams.append(
            _Family(
                f"p=1 T={T} all triplets and prefixes",
                1,
                T,
                zero_one,
                lambda y0, y, x, th, T=T: triplet_candidates(T, y0[0], x, th, last_only=False)[0],
            )
        )
    for T in (3, 4, 5):
        fams.append(
            _Family(
                f"p=1 T={T} transformed outcomes",
                1,
                T,
                zero_one,
                lambda y0, y, x, th, T=T: np.concatenate([np.stack(kitazawa_moments(t, y0[0], y, x, th)) for t in range(2, T)]),
            )
        )

    def hk(y0, y, x, th):
        x12 = float((x[0] - x[1]) @ th.beta)
        return np.stack([hk_combination(kind, y0[0], y, x12, th) for kind in HK_KINDS])

    fams.append(_Family("p=1 T=3 x2=x3 survivor combinations", 1, 3, zero_one, hk, equal=(2, 3)))
    return fams


def _initials(p: int) -> List[tuple]:
    return list(product((0, 1), repeat=p))


def _pattern_initials(p: int) -> List[tuple]:
    return [(0,) * p, (0,) + (1,) * (p - 1), (1,) + (0,) * (p - 1), (1,) * p]


def _arp_families() -> List[_Family]:
    fams = []
    for v in P2_T4_VARIANTS:
        fams.append(_Family(f"p=2 T=4 {v}", 2, 4, _initials(2), lambda y0, y, x, th, v=v: moment_p2_t4(v, y0, y, x, th)))
        fams.append(
            _Family(f"p=2 T=4 {v} lag form", 2, 4, [(0, 0)], lambda y0, y, x, th, v=v: moment_p2_t4_zero_start(v, y, x, th))
        )
    for v in P3_T5_VARIANTS:
        fams.append(_Family(f"p=3 T=5 {v}", 3, 5, _initials(3), lambda y0, y, x, th, v=v: moment_p3_t5(v, y0, y, x, th)))
    for tag in P2_T5_TAGS:
        fams.append(
            _Family(f"p=2 T=5 {tag[0]} {tag[1]}", 2, 5, _initials(2), lambda y0, y, x, th, tag=tag: moment_p2_t5_family(tag, y0, y, x, th))
        )
    fams.append(
        _Family("p=2 T=3 no regressors", 2, 3, _initials(2), lambda y0, y, x, th: moment_p2_nox_t3(y0, y, th.gamma), regressors=False)
    )
    for p in (2, 3, 4):
        fams.append(
            _Family(f"p={p} T=3 x2=x3", p, 3, _pattern_initials(p), lambda y0, y, x, th: moment_arp_t3_xeq(y0, y, x, th), equal=(2, 3))
        )
    for p in (3, 4):
        for v in ("A", "B", "C"):
            fams.append(
                _Family(f"p={p} T=4 x3=x4 {v}", p, 4, [(0,) * p], lambda y0, y, x, th, v=v: moment_arp_t4_xeq(v, y0, y, x, th), equal=(3, 4))
            )
        alt = (0, 1) + (0,) * (p - 2)
        fams.append(
            _Family(f"p={p} T=4 x3=x4 C_alt", p, 4, [alt], lambda y0, y, x, th: moment_arp_t4_xeq("C_alt", y0, y, x, th), equal=(3, 4))
        )
    return fams


def _orthogonality_suite(suite: str, families: Iterable[_Family], draws: int, seed: int) -> List[Check]:
    out = []
    for n, fam in enumerate(families):
        worst = _worst_orthogonality(fam, draws, (seed, n))
        out.append(Check(suite, f"orthogonality {fam.name}", worst, ORTHOGONALITY_TOL, worst < ORTHOGONALITY_TOL, f"{draws} draws"))
    return out


def suite_ar1(draws: int = 200, seed: int = 0) -> List[Check]:
    return _orthogonality_suite("ar1", _ar1_families(), draws, seed)


def suite_arp(draws: int = 200, seed: int = 0) -> List[Check]:
    return _orthogonality_suite("arp", _arp_families(), draws, seed)


# ---------------------------------------------------------------------------
# Pointwise identities


def _identity(name: str, residuals: Iterable[float]) -> Check:
    worst = max(residuals, default=0.0)
    return Check("identities", name, worst, IDENTITY_TOL, worst < IDENTITY_TOL)


def suite_identities(draws: int = 200, seed: int = 0) -> List[Check]:
    gen = _Draws((seed, 99))
    checks = []

    res = []
    for i in range(draws):
        T = 3 + i % 3
        th, x, y0 = gen.params(1), gen.x(T), i % 2
        ys = all_outcomes(T)
        for t in range(2, T):
            hu, hv = kitazawa_moments(t, y0, ys, x, th)
            fb, fa = kitazawa_factors(t, y0, ys, x, th)
            mb = ar1_triplet_moment("B", (t - 1, t, t + 1), y0, ys, x, th)
            ma = ar1_triplet_moment("A", (t - 1, t, t + 1), y0, ys, x, th)
            res.append(float(np.abs(hu - fb * mb).max()))
            res.append(float(np.abs(hv - fa * ma).max()))
    checks.append(_identity("transformed outcomes equal scaled triplet moments", res))

    # survivor combinations against the ratio of the two path probabilities
    res = []
    ys = all_outcomes(3)
    for i in range(draws):
        th, x, y0 = gen.params(1), gen.x(3, (2, 3)), i % 2
        g = th.gamma[0]
        x12 = float((x[0] - x[1]) @ th.beta)
        for kind, (a, b), log_ratio in (
            ("survivor_y3_0", ("010", "100"), x12 + g * y0),
            ("survivor_y3_1", ("011", "101"), x12 - g * (1 - y0)),
        ):
            m = hk_combination(kind, y0, ys, x12, th)
            ia, ib = int(a, 2), int(b, 2)
            off = np.delete(m, [ia, ib])
            scale = max(abs(m[ia]), abs(m[ib]))
            res.append(float(abs(m[ia] + np.exp(log_ratio) * m[ib]) / scale))
            res.append(float(np.abs(off).max()))
    checks.append(_identity("survivor combinations match the two-path form", res))

    res = []
    ys = all_outcomes(4)
    for i in range(draws):
        th, x = gen.params(1), gen.x(4)
        lhs, rhs = dependency_identity_t4(i % 2, ys, x, th)
        res.append(float(np.abs(lhs - rhs).max()))
    checks.append(_identity("T=4 expansion of the (1,2,3) moment", res))

    res = []
    ys = all_outcomes(5)
    inits = _initials(2)
    for i in range(draws):
        th, x = gen.params(2), gen.x(5)
        r = p2_t5_dependency_residuals(np.asarray(inits[i % 4]), ys, x, th)
        res.append(float(np.abs(r).max()))
    checks.append(_identity("second-order T=5 dependencies", res))

    res = []
    ys = all_outcomes(4)
    for i in range(draws):
        th, x = gen.params(2), gen.x(4)
        for v in P2_T4_VARIANTS:
            a = moment_p2_t4(v, np.zeros(2, dtype=int), ys, x, th)
            b = moment_p2_t4_zero_start(v, ys, x, th)
            res.append(float(np.abs(a - b).max()))
    checks.append(_identity("second-order T=4 index and lag forms agree", res))
    return checks


# ---------------------------------------------------------------------------
# Moment counts

# (p, T, label, lag coefficients or None for random, expected count or None for the formula)
COUNT_CASES = (
    (1, 2, "gamma != 0", None, 0),
    (1, 2, "gamma = 0", (0.0,), 1),
    (1, 3, "", None, 2),
    (1, 4, "", None, 8),
    (1, 5, "", None, 22),
    (2, 3, "", None, None),
    (2, 4, "", None, 4),
    (2, 5, "", None, 16),
    (3, 4, "", None, None),
    (3, 5, "", None, 8),
    (2, 4, "gamma2 = 0", (0.8, 0.0), 8),
    (2, 4, "gamma1 = 0", (0.0, 0.6), 9),
)


@dataclass(frozen=True)
class CountRow:
    p: int
    T: int
    label: str
    measured: int
    formula: int
    expected: int

    @property
    def ok(self) -> bool:
        return self.measured == self.expected


def moment_count_table(seed: int = 0, K: int = 1) -> List[CountRow]:
    """Measured nullspace dimension at the all-zero initial condition for each case."""
    rng = np.random.default_rng(seed)
    rows = []
    for p, T, label, gamma, expected in COUNT_CASES:
        beta = rng.uniform(0.5, 1.5, K)
        gamma = rng.uniform(0.5, 1.5, p) if gamma is None else np.asarray(gamma)
        x = rng.standard_normal((T, K))
        measured = measured_moment_count(p, T, Parameters(beta, gamma), np.zeros(p, dtype=int), x)
        formula = moment_count_formula(p, T)
        rows.append(CountRow(p, T, label, measured, formula, formula if expected is None else expected))
    return rows


def suite_counts(seed: int = 0) -> List[Check]:
    out = []
    for row in moment_count_table(seed):
        name = f"count p={row.p} T={row.T}" + (f" {row.label}" if row.label else "")
        detail = f"expected {row.expected}; generic formula {row.formula}"
        out.append(Check("counts", name, float(row.measured), 0.0, row.ok, detail))
    return out


# ---------------------------------------------------------------------------
# Discovery against closed forms


def suite_discovery(points: int = 20, seed: int = 0) -> List[Check]:
    gen = _Draws((seed, 7), K=1)
    worst = {"A": 0.0, "B": 0.0, "p2": 0.0}
    for i in range(points):
        th, x, y0 = gen.params(1), gen.x(3), i % 2
        for v in ("A", "B"):
            L, cons = system_ar1_t3(v, ModelSpec(1, 3, 1), th, [y0], x)
            found = solve_constrained_moment(L, cons)
            closed = moment_ar1_t3(v, y0, all_outcomes(3), x, th)
            worst[v] = max(worst[v], float(np.abs(found - closed).max()))
        th2, x4 = gen.params(2), gen.x(4)
        y02 = np.asarray(_initials(2)[i % 4])
        L, cons = system_p2_t4_a(ModelSpec(2, 4, 1), th2, y02, x4)
        found = solve_constrained_moment(L, cons)
        closed = moment_p2_t4("A", y02, all_outcomes(4), x4, th2)
        worst["p2"] = max(worst["p2"], float(np.abs(found - closed).max()))
    names = {"A": "system (a) vs T=3 A", "B": "system (b) vs T=3 B", "p2": "second-order T=4 system vs A"}
    return [Check("discovery", names[k], v, ORACLE_TOL, v < ORACLE_TOL, f"{points} points") for k, v in worst.items()]


def run_suites(suites: Optional[Sequence[str]] = None, draws: int = 200, seed: int = 0) -> List[Check]:
    """Run the named suites (all when empty) in a fixed order."""
    chosen = list(SUITES) if not suites else list(dict.fromkeys(suites))
    unknown = [s for s in chosen if s not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s) {unknown}; expected from {SUITES}")
    runners: Dict[str, Callable[[], List[Check]]] = {
        "ar1": lambda: suite_ar1(draws, seed),
        "arp": lambda: suite_arp(draws, seed),
        "identities": lambda: suite_identities(draws, seed),
        "counts": lambda: suite_counts(seed),
        "discovery": lambda: suite_discovery(20, seed),
    }
    out: List[Check] = []
    for s in SUITES:
        if s in chosen:
            out.extend(runners[s]())
    return out
