from itertools import combinations
from math import comb

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import log_expit

from dynlogit.experiments import MCDesign
from dynlogit.gmm import (
    EstimationConfig,
    EstimationError,
    InstrumentPlan,
    SeparationError,
    WeightMatrix,
    bootstrap_se,
    estimate,
    fe_logit_mle,
    gmm_objective,
    moment_jacobian,
    pooled_logit_mle,
    sandwich_vcov,
    stack_moments,
    triplet_expand,
)
from dynlogit.model import ModelSpec, PanelDataset, Parameters, simulate_panel
from dynlogit.moments_ar1 import ar1_rescale_denominator, ar1_triplet_moment
from dynlogit.moments_arp import initial_pattern, moment_p2_t4, p2_t4_scale

TRUTH1 = Parameters([1.0, 1.0, 0.0], [1.0])


def _unbalanced(n=300, seed=4, T=5, missing=0.2):
    data = simulate_panel(ModelSpec(1, T, 3), TRUTH1, "half_sum", "design", n, seed)
    data.observed = np.random.default_rng(seed + 1).random(data.observed.shape) > missing
    return data


def test_plan_dimensions():
    assert InstrumentPlan("ar1_triplets").dimension(3) == 40
    assert InstrumentPlan("ar1_triplets").dimension(10) == 124
    assert InstrumentPlan("ar2_t4").dimension(3) == 52
    assert InstrumentPlan("ar2_t4").dimension(10) == 136
    assert InstrumentPlan("ar1_triplets", initial_condition_split=False).dimension(3) == 20
    with pytest.raises(ValueError):
        InstrumentPlan("bogus")
    with pytest.raises(ValueError):
        InstrumentPlan(triplet_periods="sometimes")


def test_plan_rejects_mismatched_dataset():
    data = simulate_panel(ModelSpec(2, 4, 1), Parameters([1.0], [1.0, 0.5]), n=10, seed=0)
    with pytest.raises(ValueError, match="order"):
        InstrumentPlan("ar1_triplets").check(data)
    short = simulate_panel(ModelSpec(2, 3, 1), Parameters([1.0], [1.0, 0.5]), n=10, seed=0)
    with pytest.raises(ValueError, match="four"):
        InstrumentPlan("ar2_t4").check(short)


def test_triplet_weights_balanced_and_gapped():
    data = simulate_panel(ModelSpec(1, 5, 1), Parameters([1.0], [1.0]), n=3, seed=0)
    terms = triplet_expand(InstrumentPlan(), data)
    assert len(terms) == 10
    np.testing.assert_allclose(terms[0].weights, 4 / comb(5, 3))
    data.observed[1, 3] = False  # period 3 missing for individual 1
    terms = {t.periods: t.weights for t in triplet_expand(InstrumentPlan(), data)}
    # four modeled periods remain: weight 3 / C(4, 3)
    assert terms[(1, 2, 5)][1] == pytest.approx(3 / 4)
    assert terms[(1, 2, 5)][0] == pytest.approx(4 / comb(5, 3))
    assert terms[(1, 2, 4)][1] == 0.0  # y_3 is the lag of period 4
    assert terms[(1, 3, 5)][1] == 0.0
    observed_rule = {t.periods: t.weights for t in triplet_expand(InstrumentPlan(triplet_periods="observed"), data)}
    assert observed_rule[(1, 2, 5)][1] == pytest.approx(4 / comb(5, 3))


def _naive_ar1(plan, data, params):
    """Per-individual loop over triples, straight from the definitions."""
    K, T = data.spec.K, data.spec.T
    out = np.zeros((data.n, 2, 2, 1 + 3 * K))
    for i in range(data.n):
        obs = data.observed[i]
        count = obs.sum() - (1 if plan.triplet_periods == "modeled" else 0)
        if count < 3:
            continue
        w = (count - 1) / comb(int(count), 3)
        for t, s, r in combinations(range(1, T + 1), 3):
            if not obs[[t - 1, t, s - 1, s, r - 1, r]].all():
                continue
            y, x = data.outcomes[i], data.regressors[i]
            prev = y[t - 1]
            inst = np.concatenate([[1.0], x[t] - x[s], x[s] - x[r], x[t] - x[r]])
            for j, v in enumerate("AB"):
                m = ar1_triplet_moment(v, (t, s, r), y[0], y[1:], x[1:], params)
                m = m / ar1_rescale_denominator(v, (t, s, r), prev, x[1:], params)
                out[i, prev, j] += w * m * inst
    return out.reshape(data.n, -1)


def test_first_order_stack_matches_direct_loop():
    data = _unbalanced(n=120, seed=9)
    plan = InstrumentPlan()
    params = Parameters([0.7, 1.2, -0.3], [0.8])
    np.testing.assert_allclose(stack_moments(plan, data, params), _naive_ar1(plan, data, params), atol=1e-12)


def test_second_order_stack_matches_direct_formula():
    design = MCDesign.from_name("ar2-k3-fe")
    data = design.simulate(1, n=200)
    plan = design.plan
    params = Parameters([0.9, 1.1, 0.1], [0.8, 0.4])
    M = stack_moments(plan, data, params).reshape(200, 4, 4 + 9)
    i = int(np.flatnonzero(np.abs(M).sum(axis=(1, 2)) > 0)[0])
    y0, y, x = data.y0[i], data.y[i], data.x[i]
    code = int(initial_pattern(y0))
    inst = np.concatenate([np.eye(4)[code], np.diff(x, axis=0).reshape(-1)])
    for j, v in enumerate("ABCD"):
        expect = moment_p2_t4(v, y0, y, x, params) / p2_t4_scale(v, y0, x, params) * inst
        np.testing.assert_allclose(M[i, j], expect, atol=1e-13)


def test_moments_centre_near_zero_at_truth():
    data = MCDesign.from_name("ar1-k3-fe").simulate(11, n=4000)
    M = stack_moments(InstrumentPlan(), data, TRUTH1)
    z = M.mean(axis=0) / (M.std(axis=0, ddof=1) / np.sqrt(data.n) + 1e-300)
    assert np.max(np.abs(z[M.std(axis=0) > 0])) < 4.0


def test_weight_matrix_validation_and_objective():
    with pytest.raises(ValueError):
        WeightMatrix("identity", np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        WeightMatrix("user", np.array([[1.0, 2.0], [2.0, 1.0]]))
    W = WeightMatrix.from_moments(np.array([[1.0, 0.0], [3.0, 0.0]]))
    np.testing.assert_allclose(np.diag(W.values), [1 / 5, 1 / (5e-8)])
    data = _unbalanced(n=100)
    plan = InstrumentPlan()
    total = stack_moments(plan, data, TRUTH1).sum(axis=0)
    assert gmm_objective(plan, data, TRUTH1, WeightMatrix.identity(40)) == pytest.approx(total @ total)
    with pytest.raises(ValueError):
        gmm_objective(plan, data, TRUTH1, np.eye(3))


def _lagged_rows(data):
    Z, y = [], []
    for i in range(data.n):
        for t in range(1, data.spec.T_obs):
            if data.observed[i, t - 1 : t + 1].all():
                Z.append(np.concatenate([data.regressors[i, t], [data.outcomes[i, t - 1]]]))
                y.append(data.outcomes[i, t])
    return np.array(Z), np.array(y, dtype=float)


def test_pooled_logit_matches_generic_optimizer():
    data = _unbalanced(n=400, seed=2)
    Z, y = _lagged_rows(data)
    Z1 = np.column_stack([np.ones(len(y)), Z])
    nll = lambda th: -np.sum(log_expit((2 * y - 1) * (Z1 @ th)))  # noqa: E731
    ref = minimize(nll, np.zeros(Z1.shape[1]), method="BFGS", options={"gtol": 1e-9}).x
    fit = pooled_logit_mle(data)
    np.testing.assert_allclose(np.concatenate([[fit.intercept], fit.params.vector()]), ref, atol=1e-5)
    assert fit.loglik == pytest.approx(-nll(ref), abs=1e-6)


def test_fixed_effect_logit_matches_joint_optimizer():
    data = simulate_panel(ModelSpec(1, 5, 1), Parameters([1.0], [0.5]), "half_sum", "normal", 60, 3)
    fit = fe_logit_mle(data)
    Z, y = _lagged_rows(data)
    who = np.repeat(np.arange(data.n), data.spec.T)
    movers = np.array([0 < y[who == i].sum() < (who == i).sum() for i in range(data.n)])
    keep = movers[who]
    Z, y, who = Z[keep], y[keep], np.unique(who[keep], return_inverse=True)[1]
    m = who.max() + 1
    nll = lambda th: -np.sum(log_expit((2 * y - 1) * (Z @ th[:2] + th[2:][who])))  # noqa: E731
    ref = minimize(nll, np.zeros(2 + m), method="BFGS", options={"gtol": 1e-8, "maxiter": 5000}).x
    np.testing.assert_allclose(fit.params.vector(), ref[:2], atol=1e-4)
    assert fit.n_dropped == data.n - m


def test_pooled_logit_reports_separation():
    x = np.linspace(-1, 1, 40)
    outcomes = np.stack([np.arange(40) % 2, (x > 0).astype(int)], axis=1)
    data = PanelDataset(outcomes, x[:, None, None].repeat(2, axis=1), np.ones((40, 2)), ModelSpec(1, 1, 1))
    with pytest.raises(SeparationError):
        pooled_logit_mle(data)


def test_sandwich_reduces_to_inverse_jacobian_when_just_identified():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(3, 3))
    M = rng.normal(size=(500, 3))
    V = sandwich_vcov(G, np.diag([1.0, 2.0, 3.0]), M)
    Ginv = np.linalg.inv(G)
    np.testing.assert_allclose(V, Ginv @ (M.T @ M / 500) @ Ginv.T / 500, rtol=1e-10)
    with pytest.raises(EstimationError):
        sandwich_vcov(np.zeros((3, 2)), np.eye(3), M)


def test_jacobian_matches_finite_difference_of_objective_scale():
    data = _unbalanced(n=150, seed=6)
    plan = InstrumentPlan()
    theta = TRUTH1.vector()
    G = moment_jacobian(plan, data, theta)
    h = 1e-4
    up = stack_moments(plan, data, Parameters.from_vector(theta + [0, 0, 0, h], 3)).mean(axis=0)
    down = stack_moments(plan, data, Parameters.from_vector(theta - [0, 0, 0, h], 3)).mean(axis=0)
    np.testing.assert_allclose(G[:, 3], (up - down) / (2 * h), atol=1e-7)


def test_first_order_estimate_frozen_and_within_three_se():
    design = MCDesign.from_name("ar1-k3-nofe")
    data = design.simulate(3)
    fit = estimate(design.plan, data)
    assert fit.converged and fit.moment_dimension == 40
    np.testing.assert_allclose(fit.theta_hat.vector(), [0.768, 1.004, 0.253, 1.271], atol=2e-3)
    assert np.all(np.abs(fit.theta_hat.vector() - TRUTH1.vector()) < 3 * fit.se_sandwich)
    assert len(fit.attempts) == 6


def test_identity_weighting_runs():
    data = _unbalanced(n=800, seed=12)
    fit = estimate(InstrumentPlan(), data, EstimationConfig(weighting="identity", restarts=0))
    assert fit.weight.form == "identity" and fit.converged


def test_estimate_fails_without_informative_individuals():
    data = simulate_panel(ModelSpec(1, 3, 1), Parameters([1.0], [1.0]), n=50, seed=0)
    data.outcomes[:] = 1
    with pytest.raises(EstimationError):
        estimate(InstrumentPlan(), data, EstimationConfig(restarts=0))


def test_bootstrap_is_seeded_and_positive():
    data = _unbalanced(n=500, seed=5)
    config = EstimationConfig(restarts=0)
    a = bootstrap_se(InstrumentPlan(), data, config, B=8, seed=3)
    b = bootstrap_se(InstrumentPlan(), data, config, B=8, seed=3)
    np.testing.assert_array_equal(a.draws, b.draws)
    assert np.all(a.se > 0) and a.draws.shape == (8 - a.failures, 4)
    with pytest.raises(ValueError):
        bootstrap_se(InstrumentPlan(), data, config, B=1)
