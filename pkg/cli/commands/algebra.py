"""
Exact algebra subcommands: validate, cancellative, qc, golden.
"""

import argparse

import numpy as np

from app.combinatorics.cancellative import (
    alpha_curve,
    alpha_prime_at_1,
    alpha_prime_exact,
    certify,
    find_qc,
    reconstruct_rates,
    rep_from_alpha,
)
from app.combinatorics.golden import golden_suite
from app.lattice.perturbation import (
    asymptotic_rates,
    check_r_eps_bound,
    find_eps0,
    kernel_support_sign_check,
    lotka_volterra_monotone,
    lv_alpha,
    monotonicity_check,
    subadditivity_check,
)
from app.lattice.rates import complement_symmetric
from app.logging_config import get_logger
from app.services.rng import purpose_tag, stream
from cli.context import family_from_config, float_list, kernel_from_config, neighbourhood_from_config, run_context

logger = get_logger(__name__)

# eps values at which the rate-level checks run
DEFAULT_EPS_GRID = "0.5 0.1 0.01 0.001"


def _subset_label(nbhd, mask: int) -> str:
    return " ".join(str(z) for z in nbhd.subset(mask)) or "{}"


def validate(args: argparse.Namespace) -> int:
    """Kernel axioms, eps0 and the rate-level checks of the configured family."""
    with run_context("validate", args) as ctx:
        nbhd = neighbourhood_from_config(ctx.config, required=True)
        kernel = kernel_from_config(ctx.config, nbhd)
        ctx.csv(
            "neighbourhood.csv",
            [{"site": str(z), "weight": float(kernel.weight(z))} for z in nbhd.sites],
            ["site", "weight"],
        )
        payload = {
            "dim": nbhd.dim,
            "sites": len(nbhd),
            "sigma2": str(kernel.sigma2),
            "min_weight": kernel.min_weight,
        }
        if ctx.config.get("family", "name"):
            family = family_from_config(ctx.config, kernel)
            eps0 = find_eps0(family)
            grid = [e for e in float_list(ctx.config.get("experiment", "eps_grid", DEFAULT_EPS_GRID)) if e <= eps0]
            monotone, monotone_witness = monotonicity_check(family.model(eps0))
            rates = asymptotic_rates(family, eps0)
            subadditive, sub_witness = subadditivity_check(rates.r_s, len(nbhd))
            sign = kernel_support_sign_check(family, grid)
            ctx.csv(
                "limit_weights.csv",
                [
                    {"mask": a, "subset": _subset_label(nbhd, a), "r_s": rates.r_s[a], "r_a": rates.r_a[a]}
                    for a in range(1, nbhd.full_mask + 1)
                ],
                ["mask", "subset", "r_s", "r_a"],
            )
            payload["family"] = {
                "name": family.name,
                "params": family.params,
                "eps0": eps0,
                "norm_r": rates.norm_r,
                "closed_form_limits": rates.closed_form,
                "complement_symmetric": complement_symmetric(family.model(eps0)),
                "monotone": monotone,
                "monotone_witness": monotone_witness,
                "subadditive": subadditive,
                "subadditive_witness": sub_witness,
                "sign_checks": sign.checked,
                "sign_min_value": sign.min_value,
            }
            if family.name == "lotka_volterra":
                alphas = [lv_alpha(eps0, family.params[key]) for key in ("beta0", "beta1")]
                payload["family"]["lv_monotone_sufficient"] = lotka_volterra_monotone(*alphas)
            if family.name == "qvoter" and grid:
                bound = check_r_eps_bound(len(nbhd), [e for e in grid if e < 1.0])
                payload["family"]["r_eps_max_deviation"] = bound.max_deviation
        ctx.summary(payload)
    return 0


def cancellative(args: argparse.Namespace) -> int:
    """alpha(q), the cancellative weights and optional random round trips."""
    with run_context("cancellative", args, overrides={"n": ("experiment", "n"), "q": ("experiment", "q")}) as ctx:
        n = ctx.experiment_int("n")
        if n is None:
            raise ctx.config.error("experiment", "n", "required")
        q = ctx.experiment_float("q", 1.0)
        certificate = certify(n, q)
        primes = alpha_prime_exact(n)
        numeric = alpha_prime_at_1(n)
        ctx.csv(
            "alpha.csv",
            [
                {
                    "ell": ell,
                    "alpha": certificate.alpha[ell - 1],
                    "alpha_prime_1": numeric[ell - 1],
                    "log_form": f"-(1/{form.denominator}) log({form.numerator_int}/{form.denominator_int})",
                }
                for ell, form in enumerate(primes, start=1)
            ],
            ["ell", "alpha", "alpha_prime_1", "log_form"],
        )
        if certificate.beta0:
            ctx.csv(
                "beta0.csv",
                [{"subset": subset, "beta0": value} for subset, value in sorted(certificate.beta0.items())],
                ["subset", "beta0"],
            )
        trials = args.roundtrip or 0
        rows = []
        for trial in range(trials):
            alpha = stream(ctx.seed, purpose_tag("roundtrip"), n, trial).random(n)
            rep = rep_from_alpha(alpha, n)
            a = reconstruct_rates(rep, n)
            rows.append({"trial": trial, "k0": rep.k0, "a_sum": float(a.sum())})
        if rows:
            ctx.csv("roundtrip.csv", rows, ["trial", "k0", "a_sum"])
        ctx.summary(
            {
                "n": n,
                "q": q,
                "cancellative": certificate.cancellative,
                "k0": certificate.k0,
                "residual": certificate.residual,
                "roundtrips": trials,
            }
        )
    return 0


def qc(args: argparse.Namespace) -> int:
    """q_c(n) for each n, and alpha(q) on a grid when a single n is asked for."""
    overrides = {"n": ("experiment", "n"), "n_max": ("experiment", "n_max")}
    with run_context("qc", args, overrides=overrides) as ctx:
        n = ctx.experiment_int("n")
        n_max = ctx.experiment_int("n_max")
        if n is None and n_max is None:
            raise ctx.config.error("experiment", "n", "give n or n_max")
        sizes = [n] if n is not None else list(range(2, n_max + 1))
        ctx.csv("qc.csv", [{"n": k, "q_c": find_qc(k)} for k in sizes], ["n", "q_c"])
        if len(sizes) == 1:
            qs = np.linspace(0.0, 1.0, ctx.experiment_int("grid", 101))
            curve = alpha_curve(sizes[0], qs)
            columns = ["q"] + [f"alpha_{ell}" for ell in range(1, sizes[0] + 1)]
            ctx.csv(
                "alpha_curve.csv",
                [dict(zip(columns, [q, *row])) for q, row in zip(qs, curve)],
                columns,
            )
        ctx.summary({"sizes": sizes})
    return 0


def golden(args: argparse.Namespace) -> int:
    """Recompute the printed matrices and derivative forms."""
    with run_context("golden", args, needs_config=False) as ctx:
        report = golden_suite()
        ctx.csv("golden.csv", [{"check": name, "passed": True} for name in report.checks], ["check", "passed"])
        ctx.csv(
            "alpha_prime.csv",
            [{"ell": ell, "alpha_prime_1": value} for ell, value in sorted(report.alpha_prime.items())],
            ["ell", "alpha_prime_1"],
        )
        ctx.summary({"checks": len(report.checks)})
    return 0


def register(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("validate", parents=[common], help="validate neighbourhood, kernel and family")
    parser.set_defaults(handler=validate)

    parser = subparsers.add_parser("cancellative", parents=[common], help="cancellative certificate for n, q")
    parser.add_argument("--n", type=int, help="neighbourhood size")
    parser.add_argument("--q", type=float, help="q-voter exponent")
    parser.add_argument("--roundtrip", type=int, metavar="TRIALS", help="random alpha round trips")
    parser.set_defaults(handler=cancellative)

    parser = subparsers.add_parser("qc", parents=[common], help="smallest q keeping alpha nonnegative")
    parser.add_argument("--n", type=int)
    parser.add_argument("--n-max", dest="n_max", type=int)
    parser.set_defaults(handler=qc)

    parser = subparsers.add_parser("golden", parents=[common], help="printed matrices and closed forms")
    parser.set_defaults(handler=golden)
