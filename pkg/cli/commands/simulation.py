"""
Spin-system subcommands: simulate, duality.
"""

import argparse
import dataclasses
from functools import partial
from typing import Optional

from app.config import settings
from app.errors import ConfigError
from app.lattice.kernels import WalkKernel
from app.lattice.perturbation import PerturbationFamily
from app.lattice.rates import RateModel, voter
from app.logging_config import get_logger
from app.services.duality import duality_check, random_cases
from app.services.replicates import run_batches
from app.services.rng import PURPOSE_INITIAL, stream
from app.services.simulator import (
    CouplingSpec,
    KillSpec,
    SpinState,
    comparison_spec,
    killing_spec,
    random_torus_state,
    rescaled_model,
    run,
    run_coupled,
)
from cli.context import family_from_config, kernel_from_config, neighbourhood_from_config, run_context

logger = get_logger(__name__)

MODES = ("single", "comparison", "killing")

RUN_COLUMNS = ["replicate", "component", "events", "proposals", "final_ones", "events_checked"]


def _model(config, kernel: WalkKernel, family: Optional[PerturbationFamily]) -> RateModel:
    """c_eps at experiment.eps, N c_{eps_N} when experiment.N is set, else the voter model."""
    if family is None:
        return voter(kernel)
    n_scale = config.get_float("experiment", "n_scale")
    if n_scale is not None:
        return rescaled_model(family, n_scale)
    eps = config.get_float("experiment", "eps")
    if eps is None:
        raise config.error("experiment", "eps", "give eps or n_scale for a perturbation family")
    return family.model(eps)


def _initial(torus: Optional[int], block: int, density: float, dim: int, seed: int, replicate: int) -> SpinState:
    """Bernoulli(density) on the torus, or the all-ones box (-block, block)^d on Z^d."""
    rng = stream(seed, PURPOSE_INITIAL, replicate)
    if torus:
        return random_torus_state(torus, density, rng, dim)
    return SpinState.sparse(_box(block, dim), dim)


def _box(half_width: int, dim: int) -> list[tuple[int, ...]]:
    axes = range(-half_width + 1, half_width)
    sites = [()]
    for _ in range(dim):
        sites = [x + (c,) for x in sites for c in axes]
    return sites


def _spec(mode: str, model: RateModel, family, n_scale, kill, initial: SpinState) -> CouplingSpec:
    if mode == "comparison":
        return comparison_spec(family, n_scale, initial)
    return killing_spec(model, kill, initial)


def _simulate_batch(mode, model, family, n_scale, kill, torus, block, density, horizon, seed, start, stop) -> list[dict]:
    rows = []
    dim = model.neighbourhood.dim
    for replicate in range(start, stop):
        initial = _initial(torus, block, density, dim, seed, replicate)
        if mode == "single":
            trajectory = run(model, initial, horizon, seed, replicate, cap=settings.ACTIVE_SET_CAP)
            rows.append(
                {
                    "replicate": replicate,
                    "component": "xi",
                    "events": len(trajectory.events),
                    "proposals": trajectory.proposals,
                    "final_ones": len(trajectory.final.ones),
                    "events_checked": 0,
                }
            )
            continue
        spec = _spec(mode, model, family, n_scale, kill, initial)
        result = run_coupled(spec, horizon, seed, replicate, cap=settings.ACTIVE_SET_CAP)
        for name, trajectory in sorted(result.trajectories.items()):
            rows.append(
                {
                    "replicate": replicate,
                    "component": name,
                    "events": len(trajectory.events),
                    "proposals": result.proposals,
                    "final_ones": len(trajectory.final.ones),
                    "events_checked": result.events_checked,
                }
            )
    return rows


def simulate(args: argparse.Namespace) -> int:
    """Single, comparison-coupled or killed runs with per-replicate counts and one event log."""
    overrides = {
        "horizon": ("experiment", "horizon"),
        "replicates": ("experiment", "replicates"),
        "torus": ("experiment", "torus"),
        "n_scale": ("experiment", "n_scale"),
        "eps": ("experiment", "eps"),
    }
    with run_context("simulate", args, overrides=overrides) as ctx:
        mode = args.mode
        nbhd = neighbourhood_from_config(ctx.config)
        kernel = kernel_from_config(ctx.config, nbhd)
        family = family_from_config(ctx.config, kernel) if ctx.config.get("family", "name") else None
        n_scale = ctx.experiment_float("n_scale")
        if mode == "comparison" and (family is None or n_scale is None):
            raise ConfigError("comparison mode needs [family] name and experiment n_scale")
        model = _model(ctx.config, kernel, family)
        horizon = ctx.require_float("horizon")
        replicates = ctx.experiment_int("replicates", 1)
        torus = ctx.experiment_int("torus")
        block = ctx.experiment_int("block", 3)
        density = ctx.experiment_float("density", 0.5)
        kill = KillSpec(ctx.experiment_int("kill", block + 2)) if mode == "killing" else None

        task = partial(
            _simulate_batch, mode, model, family, n_scale, kill, torus, block, density, horizon, ctx.seed
        )
        rows = [row for batch in run_batches(task, replicates, ctx.workers) for row in batch]
        ctx.csv("runs.csv", rows, RUN_COLUMNS)

        first = _initial(torus, block, density, nbhd.dim, ctx.seed, 0)
        if mode == "single":
            log = run(model, first, horizon, ctx.seed, 0, cap=settings.ACTIVE_SET_CAP).events
        else:
            coupled = run_coupled(_spec(mode, model, family, n_scale, kill, first), horizon, ctx.seed, 0)
            log = coupled.trajectories["xi" if mode == "comparison" else "killed"].events
        if nbhd.dim == 2:
            ctx.events("events.bin", log)
        checked = sum(row["events_checked"] for row in rows if row["component"] in ("xi", "killed"))
        ctx.summary(
            {
                "mode": mode,
                "model": model.family,
                "horizon": horizon,
                "replicates": replicates,
                "events_checked": checked,
                "ordering_violations": 0,
            }
        )
    return 0


def duality(args: argparse.Namespace) -> int:
    """Forward against dual expectations over random (xi0, A, B, t) cases."""
    overrides = {
        "torus": ("experiment", "torus"),
        "t": ("experiment", "t"),
        "cases": ("experiment", "cases"),
        "replicates": ("experiment", "replicates"),
    }
    with run_context("duality", args, overrides=overrides) as ctx:
        nbhd = neighbourhood_from_config(ctx.config)
        kernel = kernel_from_config(ctx.config, nbhd)
        side = ctx.experiment_int("torus", 3)
        count = ctx.experiment_int("cases", 50)
        fixed_t = ctx.experiment_float("t")
        cases = random_cases(count, side=side, max_time=ctx.experiment_float("max_time", 2.0), seed=ctx.seed)
        if fixed_t is not None:
            cases = [dataclasses.replace(case, t=fixed_t) for case in cases]
        rows = []
        for k, case in enumerate(cases):
            report = duality_check(
                kernel,
                case.xi0,
                case.ones_at,
                case.zeros_at,
                case.t,
                mode=args.mode,
                replicates=ctx.experiment_int("replicates", 10_000),
                seed=ctx.seed + k,
                workers=ctx.workers,
            )
            rows.append(
                {
                    "case": k,
                    "t": case.t,
                    "ones": len(case.ones_at),
                    "zeros": len(case.zeros_at),
                    "forward": report.forward,
                    "dual": report.dual,
                    "discrepancy": report.discrepancy,
                    "tolerance": report.tolerance,
                }
            )
        ctx.csv("duality.csv", rows, ["case", "t", "ones", "zeros", "forward", "dual", "discrepancy", "tolerance"])
        ctx.summary(
            {
                "mode": args.mode,
                "torus": side,
                "cases": len(rows),
                "max_discrepancy": max((row["discrepancy"] for row in rows), default=0.0),
            }
        )
    return 0


def register(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("simulate", parents=[common], help="graphical-construction runs")
    parser.add_argument("--mode", choices=MODES, default="single")
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--replicates", type=int)
    parser.add_argument("--torus", type=int, help="torus side (default: block initial state on Z^d)")
    parser.add_argument("--N", dest="n_scale", type=float, help="rescaling parameter N")
    parser.add_argument("--eps", type=float)
    parser.set_defaults(handler=simulate)

    parser = subparsers.add_parser("duality", parents=[common], help="voter duality on a small torus")
    parser.add_argument("--mode", choices=("exact", "mc"), default="exact")
    parser.add_argument("--torus", type=int)
    parser.add_argument("--t", type=float)
    parser.add_argument("--cases", type=int)
    parser.add_argument("--replicates", type=int)
    parser.set_defaults(handler=duality)
