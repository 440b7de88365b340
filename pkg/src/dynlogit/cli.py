"""Command-line entry point: ``dynlogit verify|estimate|simulate|discover|montecarlo``.

Exit codes: 0 success, 1 a check or estimation failed, 2 usage or parse error.
"""

from __future__ import annotations

import csv
import io
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import click
import numpy as np
from joblib import cpu_count

from .config import DOCUMENTATION, ConfigError, RunConfig, parse_pairs
from .discovery import AmbiguousSpectrumError, build_probability_matrix, moment_count_formula, nullspace, DEFAULT_DIGITS
from .experiments import MCDesign, MonteCarloError, PAPER_N, PAPER_REPLICATIONS, run_design
from .gmm import EstimationError, estimate
from .model import ModelSpec, Parameters, all_outcomes, simulate_panel
from .moments_ar1 import moment_ar1_t3
from .moments_arp import moment_p2_t4, P2_T4_VARIANTS
from .panel_io import PanelFormatError, read_panel_csv, write_panel_csv
from .verification import SUITES, run_suites

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("dynlogit")


def _die(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _floats(text: Optional[str], what: str) -> Optional[np.ndarray]:
    if text is None:
        return None
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()], dtype=float)
    except ValueError:
        raise click.BadParameter(f"{what} must be a comma-separated list of numbers") from None


def _write_log(path: Path, header: str, config_lines: Sequence[str], body: Sequence[str] = ()):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {header}\n[configuration]\n")
        for line in config_lines:
            fh.write(line + "\n")
        if body:
            fh.write("[log]\n")
            for line in body:
                fh.write(line + "\n")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Fixed-effect dynamic logit: moment checks, simulation and GMM estimation."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# verify


@main.command()
@click.option("--suite", "suites", multiple=True, type=click.Choice(SUITES + ("all",)), help="Suite to run; repeatable. Default: all.")
@click.option("--draws", default=200, show_default=True, help="Random draws per orthogonality or identity check.")
@click.option("--seed", default=0, show_default=True)
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), help="Also write the CSV report here, with a .log beside it.")
def verify(suites, draws, seed, report):
    """Run orthogonality, identity, oracle and moment-count checks.

    Prints one CSV row per check: suite, check, value, tolerance, status, detail.
    """
    chosen = [] if not suites or "all" in suites else list(suites)
    if draws < 1:
        raise click.BadParameter("draws must be positive", param_hint="--draws")
    checks = run_suites(chosen, draws=draws, seed=seed)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["suite", "check", "value", "tolerance", "status", "detail"])
    for c in checks:
        writer.writerow([c.suite, c.name, f"{c.value:.6g}", f"{c.tolerance:g}", "pass" if c.passed else "fail", c.detail])
    click.echo(buf.getvalue(), nl=False)
    failed = [c for c in checks if not c.passed]
    config = [f"suites = {','.join(chosen) or 'all'}", f"draws = {draws}", f"seed = {seed}"]
    if report:
        report.write_text(buf.getvalue(), encoding="utf-8")
        _write_log(report.with_suffix(".log"), "verify", config, [f"{len(checks)} checks, {len(failed)} failed"])
    click.echo(f"{len(checks)} checks, {len(failed)} failed", err=True)
    if failed:
        first = failed[0]
        _die(f"{first.suite}: {first.name}: value {first.value:.3g} exceeds tolerance {first.tolerance:g} {first.detail}".rstrip(), EXIT_FAILURE)


# ---------------------------------------------------------------------------
# estimate


def _parameter_labels(K: int, p: int) -> List[str]:
    return [f"beta{k}" for k in range(1, K + 1)] + [f"gamma{l}" for l in range(1, p + 1)]


def _config_help() -> str:
    defaults = dict(line.split(" = ", 1) for line in RunConfig().lines())
    keys = "; ".join(f"{k} (default {defaults[k]}): {text}" for k, text in DOCUMENTATION.items())
    return f"Configuration keys: {keys}."


@main.command(name="estimate", epilog=_config_help())
@click.argument("data", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="key = value file.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override one configuration key; repeatable.")
@click.option("--seed", type=int, help="Overrides the seed key.")
@click.option("--threads", default=cpu_count(), show_default=True, help="Workers for the bootstrap.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Estimates CSV; a .log is written beside it.")
def estimate_cmd(data, config_path, overrides, seed, threads, out):
    """GMM estimate from a long-format panel CSV (id, t, y, x1..xK)."""
    try:
        values = {}
        if config_path:
            values = parse_pairs(config_path.read_text(encoding="utf-8"))
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not KEY=VALUE")
            k, v = item.split("=", 1)
            values[k.strip()] = v.strip()
        if seed is not None:
            values["seed"] = str(seed)
        config = RunConfig.from_mapping(values)
        read = read_panel_csv(data, config.order)
    except (ConfigError, PanelFormatError) as exc:
        _die(str(exc), EXIT_USAGE)
    dataset = read.dataset
    plan = config.instrument_plan()
    try:
        result = estimate(plan, dataset, config.estimation(n_jobs=threads))
    except (EstimationError, ValueError, np.linalg.LinAlgError) as exc:
        _die(str(exc), EXIT_FAILURE)

    labels = _parameter_labels(dataset.spec.K, dataset.spec.p)
    theta = result.theta_hat.vector()
    se = result.se_sandwich
    se_boot = result.se_bootstrap
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["parameter", "estimate", "se_sandwich", "se_bootstrap"])
    for i, name in enumerate(labels):
        writer.writerow([name, f"{theta[i]:.8g}", f"{se[i]:.8g}", "" if se_boot is None else f"{se_boot[i]:.8g}"])
    body = [
        f"data = {data}",
        f"individuals = {dataset.n} (skipped {len(read.skipped)})",
        f"periods = {dataset.periods[0]}..{dataset.periods[-1]}",
        f"balanced = {dataset.balanced}",
        f"moments = {result.moment_dimension}",
        f"objective = {result.objective_value:.10g}",
        f"converged = {result.converged}",
        f"iterations = {result.iterations}",
    ]
    body += [f"start {i}: value {a['value']:.10g}, iterations {a['iterations']}, converged {a['converged']}" for i, a in enumerate(result.attempts)]
    body += list(result.log) + [f"warning: {w}" for w in read.warnings]
    if out:
        out.write_text(buf.getvalue(), encoding="utf-8")
        _write_log(out.with_suffix(".log"), "estimate", config.lines() + [f"threads = {threads}"], body)
    click.echo(buf.getvalue(), nl=False)
    for line in body:
        log.info(line)
    if not result.converged:
        _die("optimizer did not converge", EXIT_FAILURE)


# ---------------------------------------------------------------------------
# simulate


@main.command()
@click.option("--design", help="Named design such as ar1-k3-nofe or ar2-k10-fe (default ar1-k3-nofe).")
@click.option("--order", type=int, help="Lags p for a custom specification.")
@click.option("--periods", "T", type=int, help="Modeled periods T for a custom specification.")
@click.option("--beta", help="Comma-separated regressor coefficients (custom specification).")
@click.option("--gamma", help="Comma-separated lag coefficients (custom specification).")
@click.option("--effects", default="zero", show_default=True, help="zero, half_sum or a constant (custom specification).")
@click.option("--regressors", default="design", show_default=True, type=click.Choice(["design", "normal"]))
@click.option("--n", "n", default=1000, show_default=True, help="Individuals.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Output CSV (default stdout).")
def simulate(design, order, T, beta, gamma, effects, regressors, n, seed, out):
    """Simulate a balanced panel and write it as CSV."""
    custom = any(v is not None for v in (order, T, beta, gamma))
    if design and custom:
        raise click.UsageError("give either --design or a custom specification, not both")
    if n < 1:
        raise click.BadParameter("must be positive", param_hint="--n")
    if custom:
        b, g = _floats(beta, "--beta"), _floats(gamma, "--gamma")
        if b is None or g is None or T is None:
            raise click.UsageError("a custom specification needs --periods, --beta and --gamma")
        if order is not None and order != g.size:
            raise click.UsageError("--order must equal the number of --gamma values")
        try:
            spec = ModelSpec(g.size, T, b.size)
            rule = float(effects) if effects not in ("zero", "half_sum") else effects
        except ValueError as exc:
            raise click.UsageError(str(exc)) from None
        params = Parameters(b, g)
        config = [f"order = {g.size}", f"periods = {T}", f"beta = {beta}", f"gamma = {gamma}", f"effects = {effects}"]
    else:
        try:
            d = MCDesign.from_name(design or "ar1-k3-nofe")
        except ValueError as exc:
            raise click.BadParameter(str(exc), param_hint="--design") from None
        spec, params, rule = d.spec, d.truth, d.effect_rule
        config = [f"design = {d.name}"]
    data = simulate_panel(spec, params, rule, regressors, n, seed)
    if out:
        write_panel_csv(data, out)
        _write_log(out.with_suffix(".log"), "simulate", config + [f"regressors = {regressors}", f"n = {n}", f"seed = {seed}"])
    else:
        write_panel_csv(data, click.get_text_stream("stdout"))


# ---------------------------------------------------------------------------
# discover


def _closed_forms(p: int, T: int, y0, x, params) -> dict:
    if (p, T) == (1, 3):
        return {v: moment_ar1_t3(v, y0[0], all_outcomes(3), x, params) for v in ("A", "B")}
    if (p, T) == (2, 4):
        return {v: moment_p2_t4(v, np.asarray(y0), all_outcomes(4), x, params) for v in P2_T4_VARIANTS}
    return {}


@main.command()
@click.option("--p", "p", default=1, show_default=True, help="Lags.")
@click.option("--T", "T", default=3, show_default=True, help="Modeled periods.")
@click.option("--beta", default="1", show_default=True, help="Comma-separated regressor coefficients.")
@click.option("--gamma", default=None, help="Comma-separated lag coefficients (default 1, then 0.5 for further lags).")
@click.option("--y0", "y0_text", default=None, help="Comma-separated initial outcomes, oldest first (default zeros).")
@click.option("--x", "x_text", default=None, help="Regressors, T*K comma-separated values period by period (default random).")
@click.option("--seed", default=0, show_default=True, help="Seed for random regressors.")
@click.option("--digits", default=DEFAULT_DIGITS, show_default=True, help="Working precision of the nullspace computation.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Write basis vectors as CSV here.")
def discover(p, T, beta, gamma, y0_text, x_text, seed, digits, out):
    """Numerically find all valid moment functions at one regressor and parameter value."""
    if p < 1 or T < 1:
        raise click.BadParameter("p and T must be positive")
    if p + T > 12:
        raise click.BadParameter("2**T outcome paths with p + T > 12 is too large")
    b = _floats(beta, "--beta")
    g = _floats(gamma, "--gamma") if gamma is not None else np.array([1.0] + [0.5] * (p - 1))
    if g.size != p:
        raise click.BadParameter(f"need {p} lag coefficients", param_hint="--gamma")
    K = b.size
    y0 = np.zeros(p, dtype=int) if y0_text is None else np.array([int(v) for v in y0_text.split(",")])
    if y0.size != p or not set(y0.tolist()) <= {0, 1}:
        raise click.BadParameter(f"need {p} binary values", param_hint="--y0")
    if x_text is None:
        x = np.random.default_rng(seed).standard_normal((T, K))
    else:
        xv = _floats(x_text, "--x")
        if xv.size != T * K:
            raise click.BadParameter(f"need {T * K} values", param_hint="--x")
        x = xv.reshape(T, K)
    params = Parameters(b, g)
    spec = ModelSpec(p, T, K)
    try:
        basis = nullspace(build_probability_matrix(spec, params, y0, x, digits=digits), digits=digits)
    except AmbiguousSpectrumError as exc:
        _die(str(exc), EXIT_FAILURE)
    labels = ["".join(map(str, y)) for y in all_outcomes(T)]
    click.echo(f"p = {p}, T = {T}, beta = {b.tolist()}, gamma = {g.tolist()}, y0 = {y0.tolist()}")
    click.echo(f"dimension = {basis.dimension}")
    click.echo(f"generic count 2^T - (T+1-p) 2^p = {moment_count_formula(p, T)}")
    if basis.dimension == 0:
        if p == 1 and T == 2:
            click.echo("note: with two periods and gamma != 0 no function of the outcomes has mean zero for every fixed effect;")
            click.echo("      at least three periods are needed (at gamma = 0 the static conditional-logit moment appears).")
        else:
            click.echo("note: no valid moment function exists at these values; more periods are needed.")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["vector"] + labels)
    for i, v in enumerate(basis.vectors):
        writer.writerow([i + 1] + [f"{c:.12g}" if abs(c) > 1e-14 else "0" for c in v])
    if basis.dimension:
        click.echo(buf.getvalue(), nl=False)
    for name, m in _closed_forms(p, T, y0, x, params).items():
        resid = m - basis.vectors.T @ (basis.vectors @ m) if basis.dimension else m
        click.echo(f"closed form {name}: distance to the basis span relative to its norm = {np.linalg.norm(resid) / np.linalg.norm(m):.3g}")
    if out:
        out.write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------------------
# montecarlo


@main.command()
@click.option("--design", required=True, help="ar1-k3-nofe, ar1-k3-fe, ar1-k10-nofe, ar1-k10-fe or the ar2 equivalents.")
@click.option("--n", "n", type=int, default=None, help="Individuals per replication (default 2000, 8000 with --paper-scale).")
@click.option("--reps", type=int, default=None, help="Replications (default 250, 2500 with --paper-scale).")
@click.option("--paper-scale", is_flag=True, help="Use the full-scale sample size and replication count.")
@click.option("--seed", default=0, show_default=True)
@click.option("--threads", default=cpu_count(), show_default=True)
@click.option("--strict/--no-strict", default=True, show_default=True, help="Fail when an estimator fails in more than 5% of replications.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=Path("mc_out"), show_default=True)
def montecarlo(design, n, reps, paper_scale, seed, threads, strict, out):
    """Replicate a simulation design with the pooled logit, fixed-effect logit and GMM estimators."""
    n = n if n is not None else (PAPER_N if paper_scale else 2000)
    reps = reps if reps is not None else (PAPER_REPLICATIONS if paper_scale else 250)
    try:
        d = MCDesign.from_name(design, n=n, replications=reps, seed=seed)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--design") from None
    try:
        summary = run_design(d, n_jobs=threads, strict=strict)
    except MonteCarloError as exc:
        _die(str(exc), EXIT_FAILURE)
    out.mkdir(parents=True, exist_ok=True)
    summary.write_csv(out / "summary.csv")
    summary.write_draws(out / "draws.csv")
    summary.write_failures(out / "failures.csv")
    body = [f"{est}: {len(summary.draws[est])} successful, failure rate {summary.failure_rate(est):.4f}" for est in summary.draws]
    config = [f"design = {d.name}", f"n = {n}", f"replications = {reps}", f"seed = {seed}", f"threads = {threads}", f"strict = {strict}"]
    _write_log(out / "run.log", "montecarlo", config, body)
    click.echo(f"{'estimator':<10} {'parameter':<11} {'true':>7} {'bias':>8} {'mae':>7}")
    for est, rows in summary.statistics().items():
        for name, st in rows.items():
            click.echo(f"{est:<10} {name:<11} {st['true']:7.3f} {st['bias']:8.3f} {st['mae']:7.3f}")
    click.echo(f"wrote {out / 'summary.csv'}")


if __name__ == "__main__":
    main()
