"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line that is printed in the terminal summary.
Criteria 5 and 8 run full Monte Carlo and bootstrap loops and take several
minutes; set DYNLOGIT_PAPER_SCALE=1 to add the full-scale replication check.
"""

import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from dynlogit.experiments import MCDesign, run_design, sequence_frequencies
from dynlogit.gmm import EstimationConfig, InstrumentPlan, estimate
from dynlogit.identification import identification_diag_ar1, identification_diag_arp
from dynlogit.model import ModelSpec, Parameters, simulate_panel
from dynlogit.verification import ORACLE_TOL, ORTHOGONALITY_TOL, IDENTITY_TOL, moment_count_table, run_suites


def record(key, passed, detail):
    ACCEPTANCE[str(key)] = (passed, detail)
    return passed


def _worst(checks):
    return max(checks, key=lambda c: c.value / c.tolerance)


# ---------------------------------------------------------------------------
# 1-4: exact algebra


def test_criterion_1_orthogonality_suite():
    start = time.perf_counter()
    checks = run_suites(["ar1", "arp"], draws=200, seed=0)
    elapsed = time.perf_counter() - start
    failed = [c for c in checks if not c.passed]
    worst = _worst(checks)
    ok = not failed and elapsed < 60 and all(c.tolerance == ORTHOGONALITY_TOL for c in checks)
    record(1, ok, f"{len(checks)} families x 200 draws, max |E m| = {worst.value:.2e} (tol 1e-10), {elapsed:.1f} s (limit 60 s)")
    assert not failed, [f"{c.suite}:{c.name}" for c in failed]
    assert elapsed < 60


COUNT_TARGETS = {
    (1, 3, ""): 2,
    (1, 4, ""): 8,
    (1, 5, ""): 22,
    (2, 4, ""): 4,
    (2, 5, ""): 16,
    (3, 5, ""): 8,
    (1, 2, "gamma != 0"): 0,
    (1, 2, "gamma = 0"): 1,
    (2, 4, "gamma2 = 0"): 8,
    (2, 4, "gamma1 = 0"): 9,
}


def test_criterion_2_moment_counts():
    rows = moment_count_table(seed=0)
    measured = {(r.p, r.T, r.label): r.measured for r in rows}
    mismatches = {k: (measured.get(k), v) for k, v in COUNT_TARGETS.items() if measured.get(k) != v}
    record(2, not mismatches, f"{len(COUNT_TARGETS)} (p,T) cases, exact integer match; mismatches: {mismatches or 'none'}")
    assert not mismatches


def test_criterion_3_oracle_equivalence():
    checks = run_suites(["discovery"], draws=200, seed=0)
    failed = [c for c in checks if not c.passed]
    worst = _worst(checks)
    ok = not failed and all(c.tolerance == ORACLE_TOL for c in checks)
    record(3, ok, f"{len(checks)} systems x 20 points, max entrywise gap {worst.value:.2e} (tol 1e-9)")
    assert ok, [c.name for c in failed]


def test_criterion_4_equivalence_identities():
    checks = run_suites(["identities"], draws=200, seed=0)
    failed = [c for c in checks if not c.passed]
    worst = _worst(checks)
    ok = not failed and all(c.tolerance == IDENTITY_TOL for c in checks)
    record(4, ok, f"{len(checks)} identities x 200 draws, max residual {worst.value:.2e} (tol 1e-10)")
    assert ok, [c.name for c in failed]


# ---------------------------------------------------------------------------
# 5: Monte Carlo

# gamma rows of the first-order K=3 tables: (median bias, median absolute error)
DESK_TARGETS = {
    "ar1-k3-nofe": {"gmm": (-0.001, 0.127), "fe_logit": (-2.201, 2.201)},
    "ar1-k3-fe": {"gmm": (0.027, 0.157), "logit": (0.746, 0.746), "fe_logit": (-2.382, 2.382)},
}
FULL_SCALE_TARGETS = {
    "ar1-k3-nofe": {"gmm": (0.001, 0.065), "logit": (0.001, 0.023), "fe_logit": (-2.193, 2.193)},
    "ar1-k3-fe": {"gmm": (0.002, 0.077), "logit": (0.745, 0.745), "fe_logit": (-2.368, 2.368)},
}


def _desk_checks(name, stats):
    gamma = {est: stats[est]["gamma"] for est in stats}
    out = []
    bias, mae = gamma["gmm"]["bias"], gamma["gmm"]["mae"]
    target_bias, target_mae = DESK_TARGETS[name]["gmm"]
    out.append((f"{name} gmm bias {bias:+.3f} vs {target_bias:+.3f}+-0.05", abs(bias - target_bias) <= 0.05))
    out.append((f"{name} gmm mae {mae:.3f} vs {target_mae:.3f}+-50%", abs(mae - target_mae) <= 0.5 * target_mae))
    fe_bias = gamma["fe_logit"]["bias"]
    if name == "ar1-k3-fe":
        # the logit bands are stated for the design with varying effects
        out.append((f"{name} fe-logit bias {fe_bias:+.3f} in [-2.6,-2.2]", -2.6 <= fe_bias <= -2.2))
        pooled = gamma["logit"]["bias"]
        out.append((f"{name} logit bias {pooled:+.3f} in [0.6,0.9]", 0.6 <= pooled <= 0.9))
    else:
        target = DESK_TARGETS[name]["fe_logit"][0]
        out.append((f"{name} fe-logit bias {fe_bias:+.3f} (reference {target:+.3f}, not gated)", True))
    return out


@pytest.mark.slow
def test_criterion_5_monte_carlo_desk_scale():
    start = time.perf_counter()
    results = []
    for name in DESK_TARGETS:
        design = MCDesign.from_name(name, n=2000, replications=250, seed=0)
        summary = run_design(design, n_jobs=-1)
        results += _desk_checks(name, summary.statistics())
    elapsed = time.perf_counter() - start
    cores = os.cpu_count() or 1
    ok = all(passed for _, passed in results)
    parts = "; ".join(text + ("" if passed else " [FAIL]") for text, passed in results)
    # the runtime target assumes 8 cores; report it rather than gate on it
    record(5, ok, f"{parts}; runtime {elapsed / 60:.1f} min on {cores} core(s) (target 15 min on 8)")
    assert ok, parts


@pytest.mark.slow
@pytest.mark.skipif(not os.environ.get("DYNLOGIT_PAPER_SCALE"), reason="set DYNLOGIT_PAPER_SCALE=1 for n=8000, 2500 replications")
def test_criterion_5_monte_carlo_full_scale():
    # a median over R draws has SE about 1.2533 * sd / sqrt(R); sd is about MAE / 0.6745
    results = []
    for name, targets in FULL_SCALE_TARGETS.items():
        design = MCDesign.from_name(name, n=8000, replications=2500, seed=0)
        stats = run_design(design, n_jobs=-1).statistics()
        for est, (target_bias, target_mae) in targets.items():
            g = stats[est]["gamma"]
            spread = g["mae"] if est == "gmm" else max(g["mae"] - abs(g["bias"]), 0.01)
            tol = 3 * 1.2533 * (spread / 0.6745) / np.sqrt(2500)
            good = abs(g["bias"] - target_bias) <= tol and abs(g["mae"] - target_mae) <= tol
            results.append((f"{name} {est} bias {g['bias']:+.3f}/{target_bias:+.3f} mae {g['mae']:.3f}/{target_mae:.3f} tol {tol:.3f}", good))
    ok = all(passed for _, passed in results)
    record("5b", ok, "; ".join(text + ("" if passed else " [FAIL]") for text, passed in results))
    assert ok


# ---------------------------------------------------------------------------
# 6: sequence frequencies


def _table(*pairs):
    return dict(zip([format(i, "04b") for i in range(16)], [p / 100 for p in pairs]))


SEQUENCE_TABLES = {
    "ar1-k3-nofe": _table(6.266, 6.273, 4.305, 8.175, 4.316, 4.314, 5.656, 10.661, 4.331, 4.323, 3.000, 5.657, 5.621, 5.671, 7.464, 13.967),
    "ar1-k3-fe": _table(13.974, 5.763, 4.323, 5.780, 4.334, 2.997, 4.030, 8.764, 4.367, 3.018, 2.120, 4.526, 4.018, 4.544, 5.741, 21.701),
    "ar2-k3-nofe": _table(4.330, 4.349, 2.996, 5.657, 2.929, 4.013, 3.626, 9.521, 3.980, 3.959, 3.784, 7.156, 5.086, 6.981, 8.717, 22.916),
    "ar2-k3-fe": _table(13.351, 4.519, 3.476, 3.853, 3.419, 2.731, 2.599, 6.536, 4.267, 2.621, 2.605, 5.029, 3.532, 4.929, 6.028, 30.505),
}


def test_criterion_6_sequence_frequencies():
    draws = 100_000
    worst, bad = 0.0, []
    for name, table in SEQUENCE_TABLES.items():
        freq = sequence_frequencies(MCDesign.from_name(name), draws=draws, seed=0)
        for seq, p in table.items():
            z = abs(freq[seq] - p) / np.sqrt(p * (1 - p) / draws)
            worst = max(worst, z)
            if z > 3:
                bad.append(f"{name}:{seq} z={z:.2f}")
    record(6, not bad, f"4 designs x 16 sequences, 100000 draws, max |z| = {worst:.2f} (limit 3); outside: {bad or 'none'}")
    assert not bad


# ---------------------------------------------------------------------------
# 7: identification diagnostics

# coordinate directions that are pinned down explicitly (label -> +1 increasing, -1 decreasing)
STATED_DIRECTIONS = {
    "B0 s=+ gamma": 1,
    "B0 s=- gamma": 1,
    "B0 s=+ beta1": 1,
    "B0 s=- beta1": -1,
    "01 gamma2": 1,
    "10 gamma2": 1,
    "C_alt (0,1,0) gamma2": -1,
}


def test_criterion_7_identification_diagnostics():
    reports = {}
    for variant in "AB":
        for initial in (0, 1):
            reports.update(identification_diag_ar1(variant, initial, draws=20000, seed=0))
    for theorem in ("T2i", "T2ii", "T4"):
        reports.update(identification_diag_arp(theorem, draws=20000, seed=0))
    problems = [k for k, r in reports.items() if not (r.strictly_monotone and r.root_at_truth)]
    problems += [f"{k} direction" for k, d in STATED_DIRECTIONS.items() if reports[k].direction != d]
    # on the two sign regions the beta slope must flip
    for k, r in reports.items():
        if " s=+ beta" in k and reports[k.replace("s=+", "s=-")].direction != -r.direction:
            problems.append(f"{k} sign flip")
    resolution = max(r.resolution for r in reports.values())
    record(7, not problems, f"{len(reports)} scans strictly monotone with a single root within {resolution:.2f} of truth; problems: {problems or 'none'}")
    assert not problems


# ---------------------------------------------------------------------------
# 8: unbalanced panel


@pytest.mark.slow
def test_criterion_8_unbalanced_panel_bootstrap():
    truth = Parameters([1.0, 1.0, 0.0], [1.0])
    data = simulate_panel(ModelSpec(1, 5, 3), truth, "half_sum", "design", 2000, seed=9)
    # cells go missing at random, independently of outcomes, regressors and effects
    data.observed = np.random.default_rng(1).random(data.observed.shape) >= 0.2
    share_missing = 1 - data.observed.mean()
    result = estimate(InstrumentPlan("ar1_triplets"), data, EstimationConfig(bootstrap=1000, seed=0, n_jobs=-1))
    theta, target = result.theta_hat.vector(), truth.vector()
    se_boot, se_sand = result.se_bootstrap, result.se_sandwich
    z = np.abs(theta - target) / se_boot
    ratio = se_boot / se_sand
    within = bool(np.all(z <= 3))
    agree = bool(np.all(np.abs(ratio - 1) <= 0.3))
    record(
        8,
        within and agree,
        f"missing {share_missing:.1%}; |theta - truth| / se_boot = {np.round(z, 2).tolist()} (limit 3); "
        f"se_boot / se_sandwich = {np.round(ratio, 3).tolist()} (limit 1 +- 0.3)",
    )
    assert within and agree
