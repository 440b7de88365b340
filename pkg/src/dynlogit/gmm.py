"""GMM estimation from the conditional moment functions, plus two logit benchmarks.

Sample moments are built per individual by interacting rescaled moment
functions with regressor differences and initial-condition dummies.  The
objective is minimised by BFGS with central-difference gradients; inference is
by the sandwich formula or a nonparametric bootstrap over individuals.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from itertools import combinations
from math import comb
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import sparse
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .model import PanelDataset, Parameters
from .moments_ar1 import ar1_rescale_denominator, ar1_triplet_moment
from ._tables import match
from .moments_arp import P2_T4_VARIANTS, initial_pattern, moment_p2_t4, p2_t4_scale, p2_t4_support

log = logging.getLogger(__name__)

PLAN_KINDS = ("ar1_triplets", "ar2_t4")
IQR_TO_SD = 1.35


class EstimationError(RuntimeError):
    """Estimation could not produce a trustworthy answer."""


class SeparationError(EstimationError):
    """The logit likelihood increases without bound along some direction."""


# ---------------------------------------------------------------------------
# Instrument plans and stacked moments


@dataclass(frozen=True)
class InstrumentPlan:
    """How conditional moment functions become unconditional moments.

    ``ar1_triplets``: for every usable period triple ``t < s < r`` both
    first-order moment functions are interacted with ``(1, x_ts, x_sr, x_tr)``
    and split by ``y_{t-1}``.  ``ar2_t4``: each of the four second-order moment
    functions is interacted with the four initial-condition dummies and with
    the regressor changes ``x_2 - x_1``, ``x_3 - x_2``, ``x_4 - x_3``.

    ``triplet_periods`` selects how ``T_i`` in the triplet weight
    ``(T_i - 1) / C(T_i, 3)`` is counted: ``"modeled"`` uses observed outcomes
    minus one, ``"observed"`` uses observed outcomes.
    """

    kind: str = "ar1_triplets"
    rescale: bool = True
    initial_condition_split: bool = True
    triplet_periods: str = "modeled"

    def __post_init__(self):
        if self.kind not in PLAN_KINDS:
            raise ValueError(f"unknown plan kind {self.kind!r}; expected one of {PLAN_KINDS}")
        if self.triplet_periods not in ("modeled", "observed"):
            raise ValueError("triplet_periods must be 'modeled' or 'observed'")

    @property
    def order(self) -> int:
        return 1 if self.kind == "ar1_triplets" else 2

    @property
    def base(self) -> Tuple[str, ...]:
        return ("A", "B") if self.kind == "ar1_triplets" else P2_T4_VARIANTS

    @property
    def instruments(self) -> Tuple[str, ...]:
        if self.kind == "ar1_triplets":
            return ("constant", "x_ts", "x_sr", "x_tr")
        return ("initial_dummies", "x_21", "x_32", "x_43")

    def initial_conditions(self) -> int:
        if not self.initial_condition_split:
            return 1
        return 2 if self.kind == "ar1_triplets" else 4

    def dimension(self, K: int) -> int:
        if self.kind == "ar1_triplets":
            return self.initial_conditions() * 2 * (1 + 3 * K)
        return 4 * (self.initial_conditions() + 3 * K)

    def check(self, dataset: PanelDataset) -> None:
        spec = dataset.spec
        if spec.p != self.order:
            raise ValueError(f"plan {self.kind!r} needs order {self.order}, dataset has order {spec.p}")
        if self.kind == "ar1_triplets" and spec.T < 3:
            raise ValueError("triplet moments need at least three modeled periods")
        if self.kind == "ar2_t4" and spec.T != 4:
            raise ValueError("the second-order plan needs exactly four modeled periods")
        if self.dimension(spec.K) <= spec.n_params:
            raise ValueError("plan has no more moments than parameters")


@dataclass(frozen=True)
class TripletTerm:
    periods: Tuple[int, int, int]
    weights: np.ndarray  # (n,), zero where the triple is not usable


def triplet_expand(plan: InstrumentPlan, dataset: PanelDataset) -> List[TripletTerm]:
    """Usable period triples and their per-individual weights.

    A triple needs the outcomes at ``t-1, t, s-1, s, r-1, r`` and the
    regressors at ``t, s, r``.  Individuals with fewer than three modeled
    periods contribute nothing.
    """
    obs = dataset.observed
    count = obs.sum(axis=1)
    Ti = count - 1 if plan.triplet_periods == "modeled" else count
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.array([(k - 1) / comb(int(k), 3) if k >= 3 else 0.0 for k in Ti])
    terms = []
    for t, s, r in combinations(range(1, dataset.spec.T + 1), 3):
        usable = obs[:, [t - 1, t, s - 1, s, r - 1, r]].all(axis=1)
        if usable.any():
            terms.append(TripletTerm((t, s, r), np.where(usable, w, 0.0)))
    return terms


def _filled(dataset: PanelDataset):
    y = np.where(dataset.observed, dataset.outcomes, 0).astype(np.int8)
    x = np.where(dataset.observed[..., None], dataset.regressors, 0.0)
    return y, x


CANONICAL_TRIPLE = (2, 4, 6)


@dataclass
class PreparedTriplets:
    """Parameter-free parts of the first-order stacked moments.

    Every usable (individual, triple) pair becomes one row of a six-period
    path ``(y_{t-1}, y_t, y_{s-1}, y_s, y_{r-1}, y_r)`` with regressors at
    positions 2, 4 and 6, so all triples are evaluated as the triple
    ``(2, 4, 6)`` in one call.  ``sums[b]`` adds weighted row contributions
    into individuals for initial-condition block ``b``.
    """

    prev: np.ndarray
    y: np.ndarray
    x: np.ndarray
    instruments: np.ndarray
    sums: List[sparse.csr_matrix]


def prepare_triplets(plan: InstrumentPlan, dataset: PanelDataset) -> PreparedTriplets:
    y, x = _filled(dataset)
    K = dataset.spec.K
    who, paths, regs, insts, prevs, weights = [], [], [], [], [], []
    for term in triplet_expand(plan, dataset):
        t, s, r = term.periods
        # a constant path over (t, s, r) zeroes both moment functions
        flat = (y[:, t] == y[:, s]) & (y[:, s] == y[:, r])
        rows = np.flatnonzero((term.weights != 0) & ~flat)
        who.append(rows)
        weights.append(term.weights[rows])
        paths.append(y[rows][:, [t - 1, t, s - 1, s, r - 1, r]])
        reg = np.zeros((rows.size, 6, K))
        reg[:, 1], reg[:, 3], reg[:, 5] = x[rows, t], x[rows, s], x[rows, r]
        regs.append(reg)
        xt, xs, xr = x[rows, t], x[rows, s], x[rows, r]
        insts.append(np.concatenate([np.ones((rows.size, 1)), xt - xs, xs - xr, xt - xr], axis=1))
        prevs.append(y[rows, t - 1])
    if who:
        who, weights = np.concatenate(who), np.concatenate(weights)
        paths, regs, insts, prevs = np.concatenate(paths), np.concatenate(regs), np.concatenate(insts), np.concatenate(prevs)
    else:
        who, weights = np.zeros(0, dtype=int), np.zeros(0)
        paths, regs, insts, prevs = np.zeros((0, 6), dtype=np.int8), np.zeros((0, 6, K)), np.zeros((0, 1 + 3 * K)), np.zeros(0, dtype=np.int8)
    blocks = plan.initial_conditions()
    block = prevs.astype(int) if blocks == 2 else np.zeros(who.size, dtype=int)
    cols = np.arange(who.size)
    sums = [
        sparse.csr_matrix((np.where(block == b, weights, 0.0), (who, cols)), shape=(dataset.n, who.size))
        for b in range(blocks)
    ]
    return PreparedTriplets(prevs, paths, regs, insts, sums)


def stack_moments(plan: InstrumentPlan, dataset: PanelDataset, params: Parameters, prepared=None) -> np.ndarray:
    """Per-individual stacked moment vectors, shape ``(n, plan.dimension(K))``.

    ``prepared`` may carry the output of ``prepare_triplets`` to skip the
    parameter-free setup on repeated calls.
    """
    plan.check(dataset)
    params.check(dataset.spec)
    if plan.kind == "ar1_triplets":
        return _stack_ar1(plan, dataset, params, prepare_triplets(plan, dataset) if prepared is None else prepared)
    return _stack_ar2(plan, dataset, params)


def _stack_ar1(plan, dataset, params, prepared: PreparedTriplets) -> np.ndarray:
    n, K = dataset.n, dataset.spec.K
    out = np.zeros((n, plan.initial_conditions(), 2, 1 + 3 * K))
    if prepared.prev.size == 0:
        return out.reshape(n, -1)
    for j, variant in enumerate(("A", "B")):
        m = ar1_triplet_moment(variant, CANONICAL_TRIPLE, prepared.prev, prepared.y, prepared.x, params)
        if plan.rescale:
            m = m / ar1_rescale_denominator(variant, CANONICAL_TRIPLE, prepared.prev, prepared.x, params)
        contributions = m[:, None] * prepared.instruments
        for b, total in enumerate(prepared.sums):
            out[:, b, j] = total @ contributions
    return out.reshape(n, -1)


def _stack_ar2(plan, dataset, params) -> np.ndarray:
    n, K = dataset.n, dataset.spec.K
    blocks = plan.initial_conditions()
    out = np.zeros((n, 4, blocks + 3 * K))
    complete = dataset.observed.all(axis=1)
    y = dataset.y
    in_support = np.zeros(dataset.n, dtype=bool)
    for variant in P2_T4_VARIANTS:
        for pattern in p2_t4_support(variant):
            in_support |= match(y, pattern)
    rows = np.flatnonzero(complete & in_support)
    if rows.size == 0:
        return out.reshape(n, -1)
    y0, y, x = dataset.y0[rows], y[rows], dataset.x[rows]
    m = np.empty((rows.size, 4))
    for j, variant in enumerate(P2_T4_VARIANTS):
        m[:, j] = moment_p2_t4(variant, y0, y, x, params)
        if plan.rescale:
            m[:, j] /= p2_t4_scale(variant, y0, x, params)
    code = initial_pattern(y0) if blocks == 4 else np.zeros(rows.size, dtype=int)
    instruments = np.concatenate([np.eye(blocks)[code], np.diff(x, axis=1).reshape(rows.size, 3 * K)], axis=1)
    out[rows] = m[:, :, None] * instruments[:, None, :]
    return out.reshape(n, -1)


@dataclass(frozen=True)
class WeightMatrix:
    form: str
    values: np.ndarray

    def __post_init__(self):
        if self.form not in ("identity", "diagonal_inverse_variance", "user"):
            raise ValueError(f"unknown weight form {self.form!r}")
        W = np.asarray(self.values, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1] or not np.allclose(W, W.T):
            raise ValueError("weight matrix must be square and symmetric")
        if np.any(np.diag(W) <= 0):
            raise ValueError("weight matrix needs a strictly positive diagonal")
        if self.form == "user" and np.linalg.eigvalsh(W).min() <= 0:
            raise ValueError("user weight matrix must be positive definite")
        object.__setattr__(self, "values", W)

    @classmethod
    def identity(cls, dim: int) -> "WeightMatrix":
        return cls("identity", np.eye(dim))

    @classmethod
    def from_moments(cls, moments: np.ndarray, floor: float = 1e-8) -> "WeightMatrix":
        """Inverse uncentered second moments, floored relative to the largest."""
        second = np.mean(moments**2, axis=0)
        top = second.max() if second.size and second.max() > 0 else 1.0
        return cls("diagonal_inverse_variance", np.diag(1.0 / np.maximum(second, floor * top)))


def gmm_objective(plan: InstrumentPlan, dataset: PanelDataset, params: Parameters, W) -> float:
    """``(sum_i M_i)' W (sum_i M_i)``."""
    W = W.values if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)
    total = stack_moments(plan, dataset, params).sum(axis=0)
    if W.shape != (total.size, total.size):
        raise ValueError(f"weight matrix of shape {W.shape} does not match {total.size} moments")
    return float(total @ W @ total)


# ---------------------------------------------------------------------------
# Logit benchmarks


def _lagged_design(dataset: PanelDataset):
    """Rows ``(individual, modeled period)`` with regressors ``(x_t, y_{t-1}, ..., y_{t-p})``."""
    p, K = dataset.spec.p, dataset.spec.K
    obs = dataset.observed
    feats, outcome, who = [], [], []
    for c in range(p, dataset.spec.T_obs):
        ok = obs[:, c - p : c + 1].all(axis=1)
        if not ok.any():
            continue
        lags = dataset.outcomes[ok][:, c - p : c][:, ::-1].astype(float)
        feats.append(np.concatenate([dataset.regressors[ok, c], lags], axis=1))
        outcome.append(dataset.outcomes[ok, c].astype(float))
        who.append(np.flatnonzero(ok))
    if not feats:
        return np.zeros((0, K + p)), np.zeros(0), np.zeros(0, dtype=int)
    return np.concatenate(feats), np.concatenate(outcome), np.concatenate(who)


@dataclass
class LogitResult:
    params: Parameters
    intercept: Optional[float]
    loglik: float
    iterations: int
    n_rows: int
    n_dropped: int = 0


def _newton_logit(Z, y, tol=1e-8, maxiter=100):
    theta = np.zeros(Z.shape[1])
    n = len(y)
    ll_old = -np.inf
    for it in range(1, maxiter + 1):
        eta = Z @ theta
        prob = expit(eta)
        grad = Z.T @ (y - prob) / n
        if np.max(np.abs(grad)) < tol:
            return theta, float(np.sum(log_expit((2 * y - 1) * eta))), it - 1
        if np.max(np.abs(eta)) > 35 or np.max(np.abs(theta)) > 1e3:
            raise SeparationError("pooled logit: separation detected (fitted probabilities reach 0 or 1)")
        H = (Z * (prob * (1 - prob))[:, None]).T @ Z / n
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise EstimationError("pooled logit: design matrix is not of full rank") from exc
        ll = np.sum(log_expit((2 * y - 1) * eta))
        scale = 1.0
        while scale > 1e-8:
            trial = theta + scale * step
            if np.sum(log_expit((2 * y - 1) * (Z @ trial))) >= ll - 1e-12:
                break
            scale /= 2
        theta = theta + scale * step
        ll_old = ll
    raise SeparationError(f"pooled logit: no convergence in {maxiter} Newton steps (last log-likelihood {ll_old:.6g})")


def pooled_logit_mle(dataset: PanelDataset, tol: float = 1e-8, maxiter: int = 100) -> LogitResult:
    """Logit of ``y_t`` on a constant, ``x_t`` and the lagged outcomes, ignoring the fixed effect."""
    Z, y, _ = _lagged_design(dataset)
    if y.size == 0:
        raise EstimationError("pooled logit: no usable observations")
    Z1 = np.concatenate([np.ones((y.size, 1)), Z], axis=1)
    if np.linalg.matrix_rank(Z1) < Z1.shape[1]:
        raise EstimationError("pooled logit: design matrix is not of full rank")
    theta, ll, it = _newton_logit(Z1, y, tol, maxiter)
    params = Parameters.from_vector(theta[1:], dataset.spec.K)
    return LogitResult(params, float(theta[0]), ll, it, y.size)


def fe_logit_mle(dataset: PanelDataset, tol: float = 1e-8, maxiter: int = 200) -> LogitResult:
    """Logit with one intercept per individual, by concentrated Newton steps.

    Individuals whose outcomes never vary are dropped, since their intercept
    runs off to infinity and they carry no information on the slopes.
    """
    Z, y, who = _lagged_design(dataset)
    if y.size == 0:
        raise EstimationError("fixed-effects logit: no usable observations")
    n = dataset.n
    ones = np.bincount(who, weights=y, minlength=n)
    rows_per = np.bincount(who, minlength=n)
    keep_ind = (ones > 0) & (ones < rows_per)
    keep = keep_ind[who]
    n_dropped = int(np.sum(rows_per > 0) - np.sum(keep_ind))
    if not keep.any():
        raise EstimationError("fixed-effects logit: no individual has outcome variation")
    Z, y = Z[keep], y[keep]
    _, who = np.unique(who[keep], return_inverse=True)
    m = int(who.max()) + 1
    N = y.size
    theta = np.zeros(Z.shape[1])
    alpha = np.zeros(m)

    def solve_alpha(theta, alpha):
        base = Z @ theta
        for _ in range(100):
            prob = expit(base + alpha[who])
            score = np.bincount(who, weights=y - prob, minlength=m)
            info = np.bincount(who, weights=prob * (1 - prob), minlength=m)
            if np.max(np.abs(score)) < 1e-12:
                break
            alpha = alpha + np.clip(score / np.maximum(info, 1e-300), -5, 5)
        return alpha

    for it in range(1, maxiter + 1):
        alpha = solve_alpha(theta, alpha)
        prob = expit(Z @ theta + alpha[who])
        wgt = prob * (1 - prob)
        grad = Z.T @ (y - prob) / N
        if np.max(np.abs(grad)) < tol:
            ll = float(np.sum(log_expit((2 * y - 1) * (Z @ theta + alpha[who]))))
            return LogitResult(Parameters.from_vector(theta, dataset.spec.K), None, ll, it - 1, N, n_dropped)
        h_aa = np.bincount(who, weights=wgt, minlength=m)
        h_ta = np.stack([np.bincount(who, weights=wgt * Z[:, k], minlength=m) for k in range(Z.shape[1])], axis=1)
        H = ((Z * wgt[:, None]).T @ Z - (h_ta / h_aa[:, None]).T @ h_ta) / N
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise EstimationError("fixed-effects logit: singular concentrated Hessian") from exc
        theta = theta + step
        if np.max(np.abs(theta)) > 1e3:
            raise SeparationError("fixed-effects logit: slope estimates diverge")
    raise EstimationError(f"fixed-effects logit: no convergence in {maxiter} iterations")


# ---------------------------------------------------------------------------
# GMM estimation


@dataclass(frozen=True)
class EstimationConfig:
    weighting: str = "diagonal"  # or "identity"
    gtol: float = 1e-8
    maxiter: int = 500
    restarts: int = 5
    jitter: float = 0.5
    seed: int = 0
    fd_step: float = 1e-5
    bootstrap: int = 0
    n_jobs: int = 1


@dataclass
class EstimationResult:
    theta_hat: Parameters
    objective_value: float
    vcov_sandwich: np.ndarray
    vcov_bootstrap: Optional[np.ndarray]
    converged: bool
    iterations: int
    moment_dimension: int
    weight: WeightMatrix = field(repr=False)
    jacobian: np.ndarray = field(repr=False)
    n: int = 0
    attempts: List[dict] = field(default_factory=list, repr=False)
    bootstrap_draws: Optional[np.ndarray] = field(default=None, repr=False)
    log: List[str] = field(default_factory=list, repr=False)

    @property
    def se_sandwich(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov_sandwich), 0, None))

    @property
    def se_bootstrap(self) -> Optional[np.ndarray]:
        if self.vcov_bootstrap is None:
            return None
        return np.sqrt(np.diag(self.vcov_bootstrap))


class _Problem:
    """Mean moments and objective for one dataset and weight matrix."""

    def __init__(self, plan, dataset, W):
        self.plan, self.dataset, self.W = plan, dataset, W
        self.K = dataset.spec.K
        self.terms = prepare_triplets(plan, dataset) if plan.kind == "ar1_triplets" else None

    def moments(self, theta):
        return stack_moments(self.plan, self.dataset, Parameters.from_vector(theta, self.K), self.terms)

    def mean(self, theta):
        return self.moments(theta).mean(axis=0)

    def objective(self, theta):
        g = self.mean(theta)
        return float(g @ self.W @ g)

    def gradient(self, theta, h=1e-6):
        grad = np.empty_like(theta)
        for k in range(theta.size):
            step = np.zeros_like(theta)
            step[k] = h * max(1.0, abs(theta[k]))
            grad[k] = (self.objective(theta + step) - self.objective(theta - step)) / (2 * step[k])
        return grad


def moment_jacobian(plan, dataset, theta, step: float = 1e-5, terms=None) -> np.ndarray:
    """Central-difference derivative of the mean moment vector, shape ``(D, P)``."""
    theta = np.asarray(theta, dtype=float)
    K = dataset.spec.K
    cols = []
    for k in range(theta.size):
        h = np.zeros_like(theta)
        h[k] = step * max(1.0, abs(theta[k]))
        up = stack_moments(plan, dataset, Parameters.from_vector(theta + h, K), terms).mean(axis=0)
        down = stack_moments(plan, dataset, Parameters.from_vector(theta - h, K), terms).mean(axis=0)
        cols.append((up - down) / (2 * h[k]))
    return np.stack(cols, axis=1)


def sandwich_vcov(G: np.ndarray, W: np.ndarray, moments: np.ndarray) -> np.ndarray:
    """``(G'WG)^{-1} G'W Omega W G (G'WG)^{-1} / n`` with ``Omega`` the mean outer product."""
    n = moments.shape[0]
    bread = G.T @ W @ G
    if np.linalg.cond(bread) > 1e12:
        raise EstimationError("G'WG is singular; the parameters are not identified by these moments in this sample")
    inv = np.linalg.inv(bread)
    omega = moments.T @ moments / n
    V = inv @ G.T @ W @ omega @ W @ G @ inv / n
    return (V + V.T) / 2


def _weight_for(plan, dataset, config: EstimationConfig, notes: List[str]):
    """Weight matrix and start vector from the pooled-logit pilot."""
    dim = plan.dimension(dataset.spec.K)
    try:
        pilot = pooled_logit_mle(dataset).params
    except EstimationError as exc:
        notes.append(f"pilot failed ({exc}); using identity weights and a zero start")
        return WeightMatrix.identity(dim), np.zeros(dataset.spec.n_params)
    if config.weighting == "identity":
        return WeightMatrix.identity(dim), pilot.vector()
    return WeightMatrix.from_moments(stack_moments(plan, dataset, pilot)), pilot.vector()


def _inverse_curvature(problem: _Problem, theta, step: float) -> Optional[np.ndarray]:
    """``(2 G'WG)^{-1}`` at ``theta``: the Gauss-Newton inverse Hessian used to seed BFGS."""
    G = moment_jacobian(problem.plan, problem.dataset, theta, step, problem.terms)
    H = 2 * G.T @ problem.W @ G
    if not np.all(np.isfinite(H)) or np.linalg.cond(H) > 1e10:
        return None
    inv = np.linalg.inv(H)
    return (inv + inv.T) / 2


def _minimize(problem: _Problem, start, config: EstimationConfig, hess_inv0=None):
    options = {"gtol": config.gtol, "maxiter": config.maxiter}
    if hess_inv0 is not None:
        options["hess_inv0"] = hess_inv0
    res = minimize(problem.objective, start, jac=problem.gradient, method="BFGS", options=options)
    grad = problem.gradient(res.x)
    ok = bool(res.success) or (np.all(np.isfinite(res.x)) and np.max(np.abs(grad)) < max(config.gtol, 1e-6))
    return {"theta": res.x, "value": float(res.fun), "converged": ok, "iterations": int(res.nit), "message": str(res.message)}


def estimate(plan: InstrumentPlan, dataset: PanelDataset, config: EstimationConfig = EstimationConfig()) -> EstimationResult:
    """GMM estimate with diagonal weights from the pooled-logit pilot.

    The first start is the pilot; ``config.restarts`` further starts add
    uniform noise of half-width ``config.jitter``.  The converged run with the
    smallest objective wins.
    """
    plan.check(dataset)
    if dataset.n < 1:
        raise EstimationError("empty dataset")
    notes: List[str] = []
    W, start = _weight_for(plan, dataset, config, notes)
    problem = _Problem(plan, dataset, W.values)
    if not np.any(problem.moments(start)):
        raise EstimationError("no individual contributes to any moment")
    rng = np.random.default_rng(config.seed)
    starts = [start] + [start + rng.uniform(-config.jitter, config.jitter, start.size) for _ in range(config.restarts)]
    attempts = [_minimize(problem, s, config, _inverse_curvature(problem, s, config.fd_step)) for s in starts]
    good = [a for a in attempts if a["converged"]]
    if not good:
        raise EstimationError(f"optimizer did not converge from any of {len(starts)} starts: {attempts[0]['message']}")
    best = min(good, key=lambda a: a["value"])
    theta = best["theta"]
    G = moment_jacobian(plan, dataset, theta, config.fd_step, problem.terms)
    V = sandwich_vcov(G, W.values, problem.moments(theta))
    result = EstimationResult(
        theta_hat=Parameters.from_vector(theta, dataset.spec.K),
        objective_value=best["value"],
        vcov_sandwich=V,
        vcov_bootstrap=None,
        converged=True,
        iterations=best["iterations"],
        moment_dimension=plan.dimension(dataset.spec.K),
        weight=W,
        jacobian=G,
        n=dataset.n,
        attempts=attempts,
        log=notes,
    )
    if config.bootstrap:
        boot = bootstrap_se(plan, dataset, config, config.bootstrap, config.seed, start=theta)
        result.vcov_bootstrap = np.diag(boot.se**2)
        result.bootstrap_draws = boot.draws
        result.log.append(f"bootstrap: {boot.failures} of {config.bootstrap} resamples failed")
    return result


@dataclass
class BootstrapResult:
    se: np.ndarray
    draws: np.ndarray  # (successful replications, P)
    failures: int


def _bootstrap_one(plan, dataset, config, start, seed):
    rng = np.random.default_rng(seed)
    sample = dataset.subset(rng.integers(0, dataset.n, dataset.n))
    try:
        W, _ = _weight_for(plan, sample, config, [])
        problem = _Problem(plan, sample, W.values)
        fit = _minimize(problem, start, config, _inverse_curvature(problem, start, config.fd_step))
    except (EstimationError, ValueError, np.linalg.LinAlgError):
        return None
    return fit["theta"] if fit["converged"] else None


def bootstrap_se(
    plan: InstrumentPlan,
    dataset: PanelDataset,
    config: EstimationConfig = EstimationConfig(),
    B: int = 1000,
    seed: int = 0,
    start=None,
) -> BootstrapResult:
    """Resample individuals with replacement; SE is the interquartile range over 1.35.

    Each resample recomputes the pilot weights and is started at ``start``
    (the full-sample estimate when omitted) without restarts.
    """
    if B < 2:
        raise ValueError("need at least two bootstrap replications")
    if start is None:
        start = estimate(plan, dataset, replace(config, bootstrap=0)).theta_hat.vector()
    seeds = np.random.SeedSequence([seed, 0xB007]).spawn(B)
    draws = Parallel(n_jobs=config.n_jobs)(
        delayed(_bootstrap_one)(plan, dataset, config, start, s) for s in seeds
    )
    ok = [d for d in draws if d is not None]
    if not ok:
        raise EstimationError("every bootstrap resample failed")
    draws = np.array(ok)
    q75, q25 = np.percentile(draws, [75, 25], axis=0)
    return BootstrapResult((q75 - q25) / IQR_TO_SD, draws, B - len(ok))
