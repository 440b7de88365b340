"""Expected moment functions over regressor regions, and grid scans of them.

Expectations over outcomes are computed exactly from the model probabilities,
so only regressors and fixed effects are simulated.  The same draws are reused
at every grid point, which makes the scanned curves smooth in the parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import ModelSpec, Parameters, all_outcomes, probability_table
from .moments_ar1 import moment_ar1_t3
from .moments_arp import moment_arp_t3_xeq, moment_arp_t4_xeq

MomentFunction = Callable[[np.ndarray, np.ndarray, np.ndarray, Parameters], np.ndarray]
Region = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class IdentificationDGP:
    """Regressors and fixed effects for a fixed initial condition.

    Regressors are independent normals; ``equal_periods`` (1-based modeled
    periods ``(a, b)``) copies period ``a`` into period ``b``.  The fixed effect
    is ``effect_loading`` times the time mean of the first regressor plus a
    normal shock.
    """

    spec: ModelSpec
    truth: Parameters
    initial: Tuple[int, ...]
    equal_periods: Optional[Tuple[int, int]] = None
    effect_loading: float = 0.5
    effect_sd: float = 1.0
    regressor_sd: float = 1.0

    def __post_init__(self):
        self.truth.check(self.spec)
        if len(self.initial) != self.spec.p:
            raise ValueError(f"initial condition needs {self.spec.p} values")

    def draw(self, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
        x = self.regressor_sd * rng.standard_normal((n, self.spec.T, self.spec.K))
        if self.equal_periods is not None:
            a, b = self.equal_periods
            x[:, b - 1] = x[:, a - 1]
        alpha = self.effect_sd * rng.standard_normal(n)
        if self.spec.K:
            alpha = alpha + self.effect_loading * x[:, :, 0].mean(axis=1)
        return x, alpha


def ar1_region(signs: Sequence[int]) -> Region:
    """Regressor ``k`` smallest in period 1 and largest in period 2 (sign +1), or the reverse."""

    def inside(x):
        keep = np.ones(x.shape[0], dtype=bool)
        for k, sign in enumerate(signs):
            x1, x2, x3 = (sign * x[:, t, k] for t in range(3))
            keep &= ((x1 <= x3) & (x3 < x2)) | ((x1 < x3) & (x3 <= x2))
        return keep

    return inside


def arp_region(signs: Sequence[int]) -> Region:
    """``x_{k1} < x_{k2}`` for sign +1 and ``x_{k1} > x_{k2}`` for sign -1."""

    def inside(x):
        keep = np.ones(x.shape[0], dtype=bool)
        for k, sign in enumerate(signs):
            keep &= sign * (x[:, 1, k] - x[:, 0, k]) > 0
        return keep

    return inside


class ConditionalSample:
    """Draws of ``(X, A)`` restricted to a region, with the true outcome probabilities."""

    def __init__(self, dgp: IdentificationDGP, region: Optional[Region] = None, draws: int = 20000, seed=0, max_batches: int = 200):
        rng = np.random.default_rng(seed)
        xs, alphas, kept = [], [], 0
        for _ in range(max_batches):
            x, alpha = dgp.draw(rng, max(draws, 10000))
            keep = np.ones(len(alpha), dtype=bool) if region is None else region(x)
            xs.append(x[keep])
            alphas.append(alpha[keep])
            kept += int(keep.sum())
            if kept >= draws:
                break
        if kept == 0:
            raise ValueError("no draw landed in the conditioning region")
        self.x = np.concatenate(xs)[:draws]
        self.alpha = np.concatenate(alphas)[:draws]
        self.dgp = dgp
        self.y0 = np.asarray(dgp.initial, dtype=np.int64)
        self.outcomes = all_outcomes(dgp.spec.T)
        self.probabilities = probability_table(
            self.y0, self.x, dgp.truth.beta, dgp.truth.gamma, self.alpha, dgp.spec.T
        )

    @property
    def size(self) -> int:
        return len(self.alpha)

    def conditional_means(self, moment: MomentFunction, params: Parameters) -> np.ndarray:
        """``E[m | X, A]`` for every draw."""
        values = moment(self.y0, self.outcomes, self.x[:, None], params)
        return np.sum(self.probabilities * values, axis=-1)

    def expected(self, moment: MomentFunction, params: Parameters) -> Tuple[float, float]:
        per_draw = self.conditional_means(moment, params)
        return float(per_draw.mean()), float(per_draw.std(ddof=1) / np.sqrt(per_draw.size))


def expected_moment_on_set(
    moment: MomentFunction,
    params_eval: Parameters,
    dgp: IdentificationDGP,
    region: Optional[Region] = None,
    draws: int = 20000,
    seed=0,
) -> Tuple[float, float]:
    """Monte Carlo estimate of ``E[m(Y, X, params_eval) | Y0 = y0, X in region]`` and its standard error."""
    return ConditionalSample(dgp, region, draws, seed).expected(moment, params_eval)


@dataclass
class ScanReport:
    label: str
    coordinate: int
    truth: float
    grid: np.ndarray
    values: np.ndarray
    standard_errors: np.ndarray
    direction: int  # +1 increasing, -1 decreasing, 0 neither
    roots: List[float] = field(default_factory=list)

    @property
    def resolution(self) -> float:
        return float(np.max(np.diff(self.grid)))

    @property
    def strictly_monotone(self) -> bool:
        return self.direction != 0

    @property
    def root_at_truth(self) -> bool:
        return len(self.roots) == 1 and abs(self.roots[0] - self.truth) <= self.resolution


def _roots(grid, values, tol) -> List[float]:
    roots = []
    for i, v in enumerate(values):
        if abs(v) <= tol:
            roots.append(float(grid[i]))
    for i in range(len(values) - 1):
        a, b = values[i], values[i + 1]
        if abs(a) > tol and abs(b) > tol and np.sign(a) != np.sign(b):
            roots.append(float(grid[i] - a * (grid[i + 1] - grid[i]) / (b - a)))
    return sorted(roots)


def scan_parameter(
    sample: ConditionalSample,
    moment: MomentFunction,
    coordinate: int,
    half_width: float = 2.0,
    points: int = 21,
    label: str = "",
) -> ScanReport:
    """Expected moment along one coordinate of ``(beta, gamma)``, the others held at the truth."""
    truth = sample.dgp.truth
    base = truth.vector()
    K = truth.K
    grid = base[coordinate] + np.linspace(-half_width, half_width, points)
    values, ses = np.empty(points), np.empty(points)
    for i, value in enumerate(grid):
        theta = base.copy()
        theta[coordinate] = value
        values[i], ses[i] = sample.expected(moment, Parameters.from_vector(theta, K))
    steps = np.diff(values)
    direction = 1 if np.all(steps > 0) else -1 if np.all(steps < 0) else 0
    tol = 1e-12 * max(1.0, float(np.max(np.abs(values))))
    return ScanReport(label, coordinate, float(base[coordinate]), grid, values, ses, direction, _roots(grid, values, tol))


# ---------------------------------------------------------------------------
# Ready-made diagnostics


def _ar1_moment(variant: str) -> MomentFunction:
    return lambda y0, y, x, params: moment_ar1_t3(variant, y0[..., 0], y, x, params)


def _sign_label(signs) -> str:
    return "".join("+" if s > 0 else "-" for s in signs)


def identification_diag_ar1(
    variant: str = "B",
    initial: int = 0,
    truth: Parameters = Parameters([1.0], [1.0]),
    draws: int = 20000,
    seed=0,
    half_width: float = 2.0,
    points: int = 21,
) -> Dict[str, ScanReport]:
    """Scan every coordinate of the first-order T=3 moment on each sign region."""
    K = truth.K
    spec = ModelSpec(1, 3, K)
    dgp = IdentificationDGP(spec, truth, (initial,))
    moment = _ar1_moment(variant)
    reports = {}
    for n_region, signs in enumerate(product((1, -1), repeat=K)):
        sample = ConditionalSample(dgp, ar1_region(signs), draws, (seed, n_region))
        for coord in range(K + 1):
            name = f"gamma" if coord == K else f"beta{coord + 1}"
            label = f"{variant}{initial} s={_sign_label(signs)} {name}"
            reports[label] = scan_parameter(sample, moment, coord, half_width, points, label)
    return reports


THEOREMS_ARP = ("T2i", "T2ii", "T4")


def identification_diag_arp(
    theorem: str,
    p: int = 2,
    truth: Optional[Parameters] = None,
    draws: int = 20000,
    seed=0,
    half_width: float = 2.0,
    points: int = 21,
) -> Dict[str, ScanReport]:
    """Scans for the higher-order identification results.

    ``T2i``: ``beta`` and ``gamma_1`` from the T=3 moments at ``0_p`` and ``1_p``
    with ``x_2 = x_3``, on each sign region.  ``T2ii``: ``gamma_p`` from the
    moments at ``(0, 1_{p-1})`` and ``(1, 0_{p-1})``.  ``T4``: ``gamma_2`` from
    the T=4 moment at ``(0, 1, 0)`` with ``x_3 = x_4`` (``p = 3``).
    """
    if theorem not in THEOREMS_ARP:
        raise ValueError(f"unknown theorem {theorem!r}; expected one of {THEOREMS_ARP}")
    if theorem == "T4":
        p = 3
    if p < 2:
        raise ValueError("higher-order diagnostics need p >= 2")
    if truth is None:
        truth = Parameters([1.0], np.linspace(1.0, 0.5, p))
    K = truth.K
    reports = {}
    if theorem == "T4":
        spec = ModelSpec(p, 4, K)
        dgp = IdentificationDGP(spec, truth, (0, 1, 0), equal_periods=(3, 4))
        moment = lambda y0, y, x, params: moment_arp_t4_xeq("C_alt", y0, y, x, params, tol=1e-9)  # noqa: E731
        sample = ConditionalSample(dgp, None, draws, seed)
        label = "C_alt (0,1,0) gamma2"
        reports[label] = scan_parameter(sample, moment, K + 1, half_width, points, label)
        return reports
    spec = ModelSpec(p, 3, K)
    moment = lambda y0, y, x, params: moment_arp_t3_xeq(y0, y, x, params, tol=1e-9)  # noqa: E731
    if theorem == "T2ii":
        for n_init, initial in enumerate([(0,) + (1,) * (p - 1), (1,) + (0,) * (p - 1)]):
            dgp = IdentificationDGP(spec, truth, initial, equal_periods=(2, 3))
            sample = ConditionalSample(dgp, None, draws, (seed, n_init))
            label = f"{''.join(map(str, initial))} gamma{p}"
            reports[label] = scan_parameter(sample, moment, K + p - 1, half_width, points, label)
        return reports
    for n_init, initial in enumerate([(0,) * p, (1,) * p]):
        dgp = IdentificationDGP(spec, truth, initial, equal_periods=(2, 3))
        for n_region, signs in enumerate(product((1, -1), repeat=K)):
            sample = ConditionalSample(dgp, arp_region(signs), draws, (seed, n_init, n_region))
            for coord in range(K + 1):
                name = "gamma1" if coord == K else f"beta{coord + 1}"
                label = f"{''.join(map(str, initial))} s={_sign_label(signs)} {name}"
                reports[label] = scan_parameter(sample, moment, coord, half_width, points, label)
    return reports
