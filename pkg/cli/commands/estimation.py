"""
Monte Carlo estimation subcommands: coalesce, drift, rescale.
"""

import argparse
import math
from typing import Optional

import numpy as np

from app.combinatorics.drift import (
    SubsetFunction,
    closed_form_drifts,
    dge3_drift,
    exhaustive_detpi,
    linear_weights,
    standard_weight_functions,
)
from app.config import parse_vectors
from app.errors import BoundViolated, CheckFailed, InequalityViolated
from app.lattice.kernels import Neighbourhood, origin
from app.lattice.perturbation import asymptotic_rates
from app.logging_config import get_logger
from app.services.coalescing import (
    escape_probability,
    estimate_dge3_tables,
    estimate_Kn,
    estimate_theta23,
    estimate_theta_tables,
    f_prime_from_tables,
    kernel_averaged_survival,
    sample_histograms,
)
from app.services.rescale import (
    constant_phi,
    decompose_rescaled_rates,
    finite_n_drifts,
    initial_block,
    k_n_constant,
    martingale_decomposition,
    mass_moment_trend,
    sbm_drift_diagnostic,
    scaling_params,
    solve_n,
    unscaled_horizon,
)
from app.services.rng import PURPOSE_INITIAL, stream
from app.services.simulator import run
from cli.context import (
    float_list,
    family_from_config,
    kernel_from_config,
    neighbourhood_from_config,
    run_context,
)

logger = get_logger(__name__)

ESTIMATE_COLUMNS = ["name", "value", "std_error", "samples", "horizon", "log_power"]

COALESCE_TASKS = ("theta", "kn", "k2", "escape", "dge3")
RESCALE_TASKS = ("params", "decompose", "martingale", "moments", "kn", "finite")

COMMON = {
    "horizon": ("experiment", "horizon"),
    "replicates": ("experiment", "replicates"),
}


def _estimate_rows(estimates) -> list[dict]:
    return [{column: getattr(e, column) for column in ESTIMATE_COLUMNS} for e in estimates]


def _subset_label(nbhd: Neighbourhood, mask: int) -> str:
    return " ".join(str(z) for z in nbhd.subset(mask))


def _blocks(raw: Optional[str], dim: int) -> list[list[tuple[int, ...]]]:
    """'(0,0) | (1,0) (2,0)' -> [[(0,0)], [(1,0), (2,0)]]; default {0}, {e_1}."""
    if not raw:
        e1 = tuple(1 if i == 0 else 0 for i in range(dim))
        return [[origin(dim)], [e1]]
    return [parse_vectors(part) for part in raw.split("|")]


def _identities(tables) -> dict:
    histogram = tables.histogram
    forms = closed_form_drifts(
        histogram.n, histogram.three_cell(), histogram.two_cell(), histogram.samples, tables.log_norm
    )
    return {
        "kappa": tables.kappa.value,
        "linear_residual": tables.linear_residual,
        "constant_residual": tables.constant_residual,
        "affine_minus_kappa": str(forms.affine_minus_kappa),
        "geometric_minus_scaled_lv": str(forms.geometric_minus_scaled_lv),
        "theta3_standard": forms.theta3,
    }


def _check_identities(identities: dict) -> None:
    nonzero = {
        key: identities[key]
        for key in ("linear_residual", "constant_residual", "affine_minus_kappa", "geometric_minus_scaled_lv")
        if identities[key] not in (0, "0")
    }
    if nonzero:
        raise CheckFailed("Pathwise partition identities do not hold", witness=nonzero)


def _theta_table_rows(nbhd: Neighbourhood, tables) -> list[dict]:
    return [
        {
            "mask": a,
            "subset": _subset_label(nbhd, a),
            "theta_plus": tables.theta_plus[a],
            "theta_minus": tables.theta_minus[a],
            "k2": tables.k2[a],
        }
        for a in range(1, nbhd.full_mask + 1)
    ]


def coalesce(args: argparse.Namespace) -> int:
    """Coalescing-walk estimators."""
    overrides = {**COMMON, "t_grid": ("experiment", "t_grid")}
    with run_context("coalesce", args, overrides=overrides) as ctx:
        nbhd = neighbourhood_from_config(ctx.config)
        kernel = kernel_from_config(ctx.config, nbhd)
        replicates = ctx.experiment_int("replicates", 10_000)
        task = args.task
        payload: dict = {"task": task, "replicates": replicates}

        if task == "theta":
            horizon = ctx.require_float("horizon")
            tables = estimate_theta_tables(nbhd, kernel, horizon, replicates, ctx.seed, ctx.workers)
            ctx.csv("theta_tables.csv", _theta_table_rows(nbhd, tables), ["mask", "subset", "theta_plus", "theta_minus", "k2"])
            identities = _identities(tables)
            _check_identities(identities)
            ctx.record([tables.kappa])
            payload.update(identities)
        elif task in ("kn", "k2"):
            grid = float_list(ctx.config.get("experiment", "t_grid")) or [ctx.require_float("horizon")]
            if task == "kn":
                blocks = _blocks(ctx.config.get("experiment", "blocks"), nbhd.dim)
                result = estimate_Kn(blocks, kernel, grid, replicates, ctx.seed, ctx.workers)
                estimates = result.estimates
                payload.update({"blocks": [list(b) for b in blocks], "limit": result.limit, "limit_error": result.limit_error})
            else:
                estimates = [
                    kernel_averaged_survival(kernel, t, replicates, ctx.seed, workers=ctx.workers) for t in grid
                ]
                reference = 2 * math.pi * float(kernel.sigma2)
                payload.update(
                    {
                        "reference": reference,
                        "relative_gaps": [abs(e.value - reference) / reference for e in estimates],
                    }
                )
            ctx.csv("estimates.csv", _estimate_rows(estimates), ESTIMATE_COLUMNS)
            ctx.record(estimates)
        elif task == "escape":
            horizon = ctx.require_float("horizon")
            escape = escape_probability(kernel, horizon, replicates, ctx.seed, ctx.workers)
            estimates = [escape.at_horizon, escape.at_double]
            ctx.csv("estimates.csv", _estimate_rows(estimates), ESTIMATE_COLUMNS)
            ctx.record(estimates)
            payload.update({"bracket": list(escape.bracket), "branching_rate": escape.branching_rate})
        else:
            horizon = ctx.require_float("horizon")
            tables = estimate_dge3_tables(nbhd, kernel, horizon, replicates, ctx.seed, ctx.workers)
            rows = []
            for which, histogram in (("horizon", tables.at_horizon), ("double", tables.at_double)):
                inside, with_origin = tables.probabilities(which)
                rows += [
                    {
                        "horizon": histogram.horizon,
                        "mask": a,
                        "subset": _subset_label(nbhd, a),
                        "tau_a_not_origin": inside[a],
                        "tau_a_origin": with_origin[a],
                    }
                    for a in range(1, nbhd.full_mask + 1)
                ]
            ctx.csv("dge3_tables.csv", rows, ["horizon", "mask", "subset", "tau_a_not_origin", "tau_a_origin"])
        ctx.summary(payload)
    return 0


def _count_weights(r_s: np.ndarray, n: int) -> Optional[list[float]]:
    """r_0..r_n when r^s depends on |A| only."""
    sizes = np.array([bin(a).count("1") for a in range(1 << n)])
    counts = [0.0] * (n + 1)
    for k in range(1, n + 1):
        values = r_s[sizes == k]
        if np.ptp(values) > 1e-12:
            return None
        counts[k] = float(values[0])
    return counts


def _detpi_rows(n: int, extra: Optional[SubsetFunction]) -> list[dict]:
    functions = list(standard_weight_functions(n).values()) + [linear_weights(n)]
    if extra is not None:
        functions.append(extra)
    rows = []
    for r in functions:
        report = exhaustive_detpi(n, r)
        if not report.ok:
            raise InequalityViolated(f"Partition inequality fails for {r.name}", witness=report.violations[0])
        rows.append(
            {
                "function": r.name,
                "partitions": report.partitions,
                "strict": report.strict,
                "equalities": report.equalities,
                "strictly_subadditive": r.strictly_subadditive(),
            }
        )
    return rows


def drift(args: argparse.Namespace) -> int:
    """Theta_2, Theta_3 (d = 2) or f'(0) and the bracketed drift (d >= 3)."""
    with run_context("drift", args, overrides=COMMON) as ctx:
        nbhd = neighbourhood_from_config(ctx.config)
        kernel = kernel_from_config(ctx.config, nbhd)
        family = family_from_config(ctx.config, kernel)
        rates = asymptotic_rates(family)
        n = len(nbhd)
        horizon = ctx.require_float("horizon")
        replicates = ctx.experiment_int("replicates", 10_000)
        payload: dict = {"family": family.name, "dim": nbhd.dim}
        if args.detpi:
            rows = _detpi_rows(n, SubsetFunction.from_array(rates.r_s, name=family.name))
            ctx.csv("detpi.csv", rows, ["function", "partitions", "strict", "equalities", "strictly_subadditive"])
        if nbhd.dim == 2:
            tables = estimate_theta_tables(nbhd, kernel, horizon, replicates, ctx.seed, ctx.workers)
            theta2, theta3 = estimate_theta23(rates, tables)
            estimates = [theta2, theta3, tables.kappa]
            identities = _identities(tables)
            _check_identities(identities)
            payload.update(identities)
            payload["theta3_z"] = theta3.z_score()
        else:
            tables = estimate_dge3_tables(nbhd, kernel, horizon, replicates, ctx.seed, ctx.workers)
            f_prime = f_prime_from_tables(rates.r_s, tables)
            estimates = [f_prime.at_horizon, f_prime.at_double]
            payload["f_prime_truncation_gap"] = f_prime.truncation_gap
            payload["f_prime_z"] = f_prime.at_horizon.z_score()
            counts = _count_weights(rates.r_s, n)
            if counts is not None:
                result = dge3_drift(
                    n,
                    counts,
                    dict(tables.at_horizon.counts),
                    tables.at_horizon.samples,
                    bracket=dict(tables.at_double.counts),
                    bracket_samples=tables.at_double.samples,
                )
                payload.update(
                    {
                        "theta": result.theta,
                        "theta_std_error": result.std_error,
                        "theta_bracket": [result.theta_lower, result.theta_upper],
                    }
                )
        ctx.csv("drift.csv", _estimate_rows(estimates), ESTIMATE_COLUMNS)
        ctx.record(estimates)
        ctx.summary(payload)
    return 0


def _martingale_trace(ctx, family, n_scale: float, horizon: float, mass: float) -> dict:
    rates = decompose_rescaled_rates(family, n_scale)
    initial = initial_block(rates.params, stream(ctx.seed, PURPOSE_INITIAL, 0), mass, family.kernel.dim)
    trajectory = run(rates.model, initial, horizon, ctx.seed, 0)
    diag = martingale_decomposition(trajectory, constant_phi(), rates)
    ctx.csv(
        "martingale.csv",
        [
            {
                "time": diag.times[i],
                "mass": diag.mass[i],
                "d1": diag.d1[i],
                "d2": diag.d2[i],
                "d3": diag.d3[i],
                "martingale": diag.martingale[i],
                "residual": diag.residual[i],
            }
            for i in range(len(diag.times))
        ],
        ["time", "mass", "d1", "d2", "d3", "martingale", "residual"],
    )
    if diag.window_violations or diag.functional_violations:
        raise BoundViolated(
            "Drift bounds violated along the trajectory",
            witness={"window": diag.window_violations, "functional": diag.functional_violations},
        )
    if not diag.residual_ok:
        raise CheckFailed("Semimartingale decomposition does not close", witness=float(np.max(np.abs(diag.residual))))
    return {"events": diag.events, "max_residual": float(np.max(np.abs(diag.residual)))}


def rescale(args: argparse.Namespace) -> int:
    """Scaling parameters, rate decomposition and the super-Brownian diagnostics."""
    overrides = {**COMMON, "n_grid": ("experiment", "n_grid"), "t": ("experiment", "t")}
    with run_context("rescale", args, overrides=overrides) as ctx:
        nbhd = neighbourhood_from_config(ctx.config)
        kernel = kernel_from_config(ctx.config, nbhd)
        family = family_from_config(ctx.config, kernel)
        n_grid = float_list(ctx.config.get("experiment", "n_grid"))
        if not n_grid:
            raise ctx.config.error("experiment", "n_grid", "required")
        replicates = ctx.experiment_int("replicates", 1000)
        horizon = ctx.experiment_float("horizon", 0.5)
        mass = ctx.experiment_float("mass", 1.0)
        task = args.task
        payload: dict = {"task": task, "family": family.name, "n_grid": n_grid}

        if task == "params":
            rows = [
                {"N": p.n_scale, "eps_N": p.eps_n, "N_prime": p.n_prime, "spacing": p.spacing, "t_N": p.t_n}
                for p in (scaling_params(n) for n in n_grid)
            ]
            eps = ctx.experiment_float("eps")
            if eps is not None:
                p = solve_n(eps)
                rows.append({"N": p.n_scale, "eps_N": p.eps_n, "N_prime": p.n_prime, "spacing": p.spacing, "t_N": p.t_n})
            ctx.csv("scaling.csv", rows, ["N", "eps_N", "N_prime", "spacing", "t_N"])
        elif task == "decompose":
            rows = []
            residuals = {}
            for n_scale in n_grid:
                split = decompose_rescaled_rates(family, n_scale)
                total = split.reconstruct()
                residuals[str(n_scale)] = split.residual
                rows += [
                    {
                        "N": n_scale,
                        "center": center,
                        "mask": mask,
                        "c_vm": split.c_vm[center, mask],
                        "c_a": split.c_a[center, mask],
                        "c_s": split.c_s[center, mask],
                        "total": total[center, mask],
                    }
                    for center in (0, 1)
                    for mask in range(nbhd.full_mask + 1)
                ]
                payload.setdefault("norm", {})[str(n_scale)] = split.norm
            ctx.csv("rescaled_rates.csv", rows, ["N", "center", "mask", "c_vm", "c_a", "c_s", "total"])
            payload["residuals"] = residuals
        elif task == "martingale":
            payload["trace"] = _martingale_trace(ctx, family, n_grid[-1], horizon, mass)
            report = sbm_drift_diagnostic(
                family, n_grid, replicates, horizon, mass, ctx.seed, ctx.experiment_float("theta_reference"), ctx.workers
            )
            ctx.csv(
                "sbm_drift.csv",
                [
                    {
                        "N": p.n_scale,
                        "theta": p.theta,
                        "theta_error": p.theta_error,
                        "mass_increment": p.mass_increment.value,
                        "mass_increment_error": p.mass_increment.std_error,
                        "qv_ratio": p.qv_ratio,
                        "residual": p.residual,
                        "violations": p.violations,
                    }
                    for p in report.points
                ],
                ["N", "theta", "theta_error", "mass_increment", "mass_increment_error", "qv_ratio", "residual", "violations"],
            )
            ctx.record(p.mass_increment for p in report.points)
            payload.update({"trend": report.trend, "notes": report.notes})
        elif task == "moments":
            points = mass_moment_trend(family, n_grid, replicates, horizon, mass, ctx.seed, ctx.workers)
            ctx.csv(
                "moments.csv",
                [
                    {
                        "N": p.n_scale,
                        "first": p.first.value,
                        "first_error": p.first.std_error,
                        "second": p.second.value,
                        "second_error": p.second.std_error,
                    }
                    for p in points
                ],
                ["N", "first", "first_error", "second", "second_error"],
            )
        else:
            t = ctx.experiment_float("t")
            estimates = []
            for n_scale in n_grid:
                walk_time = unscaled_horizon(family, n_scale, t)
                if task == "kn":
                    comparison = k_n_constant(kernel, n_scale, walk_time, replicates, ctx.seed, ctx.workers)
                    estimates += [comparison.weighted, comparison.sampled]
                    payload.setdefault("z_scores", {})[str(n_scale)] = comparison.z_score
                else:
                    (histogram,) = sample_histograms(nbhd, kernel, [walk_time], replicates, ctx.seed, workers=ctx.workers)
                    estimates += list(finite_n_drifts(family, n_scale, histogram))
            ctx.csv("estimates.csv", _estimate_rows(estimates), ESTIMATE_COLUMNS)
            ctx.record(estimates)
        ctx.summary(payload)
    return 0


def register(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("coalesce", parents=[common], help="coalescing random walk estimators")
    parser.add_argument("--task", choices=COALESCE_TASKS, default="theta")
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--replicates", type=int)
    parser.add_argument("--t-grid", dest="t_grid", help="horizons, e.g. '1e3 1e4 1e5'")
    parser.set_defaults(handler=coalesce)

    parser = subparsers.add_parser("drift", parents=[common], help="drift constants of the configured family")
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--replicates", type=int)
    parser.add_argument("--detpi", action="store_true", help="also run the exhaustive partition inequality")
    parser.set_defaults(handler=drift)

    parser = subparsers.add_parser("rescale", parents=[common], help="rescaled process diagnostics")
    parser.add_argument("--task", choices=RESCALE_TASKS, default="params")
    parser.add_argument("--n-grid", dest="n_grid", help="values of N, e.g. '1e3 1e4'")
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--replicates", type=int)
    parser.add_argument("--t", type=float, help="rescaled time for kn/finite (default t_N)")
    parser.set_defaults(handler=rescale)
