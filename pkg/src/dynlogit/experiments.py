"""Monte Carlo designs for the dynamic logit estimators and their summaries."""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from joblib import Parallel, delayed

from .gmm import EstimationConfig, EstimationError, InstrumentPlan, estimate, fe_logit_mle, pooled_logit_mle, stack_moments
from .model import ModelSpec, Parameters, outcome_index, simulate_panel

log = logging.getLogger(__name__)

MODELS = ("AR1_T3", "AR2_T4")
FE_MODES = ("zero", "varies")
ESTIMATORS = ("logit", "fe_logit", "gmm")
MAX_FAILURE_RATE = 0.05
DESK_REPLICATIONS = 250
PAPER_REPLICATIONS = 2500
PAPER_N = 8000


class MonteCarloError(RuntimeError):
    """Too many replications failed."""


@dataclass(frozen=True)
class MCDesign:
    model: str = "AR1_T3"
    K: int = 3
    fe_mode: str = "zero"
    n: int = 2000
    replications: int = DESK_REPLICATIONS
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.K not in (3, 10):
            raise ValueError("designs use K = 3 or K = 10 regressors")
        if self.fe_mode not in FE_MODES:
            raise ValueError(f"unknown fixed-effect mode {self.fe_mode!r}")
        if self.n < 1 or self.replications < 1:
            raise ValueError("n and replications must be positive")

    @classmethod
    def from_name(cls, name: str, **overrides) -> "MCDesign":
        """Parse names like ``ar1-k3-nofe`` or ``ar2-k10-fe``."""
        match = re.fullmatch(r"ar([12])-k(3|10)-(nofe|fe)", name.strip().lower())
        if not match:
            raise ValueError(f"invalid design name {name!r}; expected e.g. 'ar1-k3-nofe' or 'ar2-k10-fe'")
        order, K, fe = match.groups()
        return cls(model="AR1_T3" if order == "1" else "AR2_T4", K=int(K), fe_mode="zero" if fe == "nofe" else "varies", **overrides)

    @property
    def name(self) -> str:
        return f"ar{self.spec.p}-k{self.K}-{'nofe' if self.fe_mode == 'zero' else 'fe'}"

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(1, 3, self.K) if self.model == "AR1_T3" else ModelSpec(2, 4, self.K)

    @property
    def truth(self) -> Parameters:
        beta = np.zeros(self.K)
        beta[:2] = 1.0
        gamma = [1.0] if self.model == "AR1_T3" else [1.0, 0.5]
        return Parameters(beta, gamma)

    @property
    def plan(self) -> InstrumentPlan:
        return InstrumentPlan("ar1_triplets" if self.model == "AR1_T3" else "ar2_t4")

    @property
    def effect_rule(self) -> str:
        return "zero" if self.fe_mode == "zero" else "half_sum"

    def simulate(self, seed, n: Optional[int] = None):
        return simulate_panel(self.spec, self.truth, self.effect_rule, "design", self.n if n is None else n, seed)

    def parameter_labels(self) -> List[str]:
        gammas = ["gamma"] if self.spec.p == 1 else [f"gamma{l}" for l in range(1, self.spec.p + 1)]
        return gammas + [f"beta{k}" for k in range(1, self.K + 1)]


def _reorder(theta: np.ndarray, K: int) -> np.ndarray:
    """``(beta, gamma)`` to ``(gamma, beta)``, the order of the summary tables."""
    return np.concatenate([theta[K:], theta[:K]])


def run_replication(design: MCDesign, replication: int, config: EstimationConfig = EstimationConfig()) -> Dict[str, object]:
    """Simulate one dataset and apply the three estimators.

    Failures are returned as ``(error class, message)`` so that aggregation can
    report them.
    """
    seed = np.random.SeedSequence([design.seed, replication])
    data = design.simulate(seed)
    out: Dict[str, object] = {"replication": replication}
    runners = {
        "logit": lambda: pooled_logit_mle(data).params,
        "fe_logit": lambda: fe_logit_mle(data).params,
        "gmm": lambda: estimate(design.plan, data, config).theta_hat,
    }
    for name, run in runners.items():
        try:
            out[name] = _reorder(run().vector(), design.K)
        except (EstimationError, ValueError, np.linalg.LinAlgError) as exc:
            out[name] = (type(exc).__name__, str(exc))
    return out


@dataclass
class MCSummary:
    design: MCDesign
    labels: List[str]
    draws: Dict[str, np.ndarray]  # estimator -> (successful replications, parameters)
    failures: Dict[str, List[tuple]] = field(default_factory=dict)

    def _columns(self):
        """Table columns; for K=10 the last eight coefficients are averaged."""
        truth = _reorder(self.design.truth.vector(), self.design.K)
        if self.design.K == 10:
            p = self.design.spec.p
            keep = list(range(p + 2))
            return [self.labels[i] for i in keep] + ["beta_k>=3"], truth, keep, list(range(p + 2, p + 10))
        return self.labels, truth, list(range(len(self.labels))), []

    def statistics(self) -> Dict[str, Dict[str, Dict[str, float]]]:
        """``estimator -> parameter -> {'true', 'bias', 'mae'}`` with median bias and median absolute error."""
        names, truth, keep, pooled = self._columns()
        table = {}
        for est, draws in self.draws.items():
            rows = {}
            if draws.size == 0:
                table[est] = rows
                continue
            err = draws - truth
            bias = np.median(err, axis=0)
            mae = np.median(np.abs(err), axis=0)
            for name, i in zip(names, keep):
                rows[name] = {"true": float(truth[i]), "bias": float(bias[i]), "mae": float(mae[i])}
            if pooled:
                rows[names[-1]] = {
                    "true": float(np.mean(truth[pooled])),
                    "bias": float(np.mean(bias[pooled])),
                    "mae": float(np.mean(mae[pooled])),
                }
            table[est] = rows
        return table

    def failure_rate(self, estimator: str) -> float:
        return len(self.failures.get(estimator, [])) / self.design.replications

    def write_csv(self, path) -> None:
        d = self.design
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["design", "n", "replications", "estimator", "parameter", "statistic", "value"])
            for est, rows in self.statistics().items():
                for param, stats in rows.items():
                    for stat in ("true", "bias", "mae"):
                        writer.writerow([d.name, d.n, d.replications, est, param, stat, f"{stats[stat]:.6f}"])
                writer.writerow([d.name, d.n, d.replications, est, "", "failure_rate", f"{self.failure_rate(est):.6f}"])

    def write_draws(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["estimator", "draw"] + self.labels)
            for est, draws in self.draws.items():
                for i, row in enumerate(draws):
                    writer.writerow([est, i] + [f"{v:.8g}" for v in row])

    def write_failures(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["estimator", "replication", "error", "message"])
            for est, items in self.failures.items():
                for rep, kind, message in items:
                    writer.writerow([est, rep, kind, message])


def run_design(design: MCDesign, n_jobs: int = 1, config: EstimationConfig = EstimationConfig(), strict: bool = True) -> MCSummary:
    """Run every replication and aggregate medians.

    With ``strict`` an estimator failing in more than 5% of replications raises
    ``MonteCarloError``; otherwise failed replications are dropped and counted.
    """
    results = Parallel(n_jobs=n_jobs)(delayed(run_replication)(design, r, config) for r in range(design.replications))
    results.sort(key=lambda r: r["replication"])
    P = design.spec.n_params
    draws, failures = {}, {}
    for est in ESTIMATORS:
        ok = [r[est] for r in results if isinstance(r[est], np.ndarray)]
        failures[est] = [(r["replication"],) + r[est] for r in results if not isinstance(r[est], np.ndarray)]
        draws[est] = np.array(ok).reshape(-1, P)
    summary = MCSummary(design, design.parameter_labels(), draws, failures)
    for est in ESTIMATORS:
        rate = summary.failure_rate(est)
        if rate > 0:
            log.warning("%s: %s failed in %d of %d replications", design.name, est, len(failures[est]), design.replications)
        if strict and rate > MAX_FAILURE_RATE:
            first = failures[est][0]
            raise MonteCarloError(f"{est} failed in {rate:.1%} of replications (first: replication {first[0]}, {first[1]}: {first[2]})")
    return summary


def sequence_frequencies(design: MCDesign, draws: int = 100_000, seed=None) -> Dict[str, float]:
    """Empirical frequency of each four-period outcome sequence.

    First-order designs report ``(y0, y1, y2, y3)``; second-order designs
    report ``(y1, y2, y3, y4)``.
    """
    data = design.simulate(design.seed if seed is None else seed, n=draws)
    path = data.outcomes if design.spec.p == 1 else data.y
    counts = np.bincount(outcome_index(path), minlength=16)
    return {format(i, "04b"): counts[i] / draws for i in range(16)}


def noninformative_share(design: MCDesign, draws: int = 100_000, seed=None) -> float:
    """Share of individuals whose outcomes make every moment in the design's plan zero.

    Whether a moment vanishes depends only on the outcome path, so it is
    checked at the true parameters.
    """
    data = design.simulate(design.seed if seed is None else seed, n=draws)
    moments = stack_moments(design.plan, data, design.truth)
    return float(np.mean(~np.any(np.abs(moments) > 1e-12, axis=1)))
