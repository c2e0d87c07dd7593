"""
Run context shared by every subcommand.

Builds lattice objects from the experiment config, owns the run's output
directory, registers the run in the database and writes the manifest.
"""

import argparse
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import pandas as pd

from app.config import ExperimentConfig, load_experiment_config, parse_vectors, parse_weights, settings
from app.database.connection import get_db_session, init_db
from app.errors import ConfigError
from app.lattice.kernels import (
    Neighbourhood,
    WalkKernel,
    kernel_uniform,
    neighbourhood_from_preset,
    validate_kernel,
    validate_neighbourhood,
)
from app.lattice.perturbation import PerturbationFamily, build_family
from app.logging_config import attach_run_log, detach_run_log, get_logger
from app.services.estimators import DriftEstimate
from app.services.outputs import SUMMARY_NAME, RunManifest, write_csv, write_event_log, write_summary
from app.services.runs import RunService, new_run_id
from app.services.simulator import EventLog

logger = get_logger(__name__)

TRUE_VALUES = ("1", "true", "yes", "on")

# flag dest -> (section, key) written into the config when the flag is given
COMMON_OVERRIDES = {
    "seed": ("experiment", "seed"),
    "preset": ("neighbourhood", "preset"),
    "dim": ("neighbourhood", "dim"),
    "family": ("family", "name"),
}


# Config -> lattice objects


def neighbourhood_from_config(config: ExperimentConfig, required: bool = False) -> Neighbourhood:
    """[neighbourhood] sites = (...) or preset = nn|moore; NN in d=2 when absent and not required."""
    dim = config.get_int("neighbourhood", "dim", 2)
    sites = config.get("neighbourhood", "sites")
    if sites:
        return validate_neighbourhood(dim, parse_vectors(sites))
    preset = config.get("neighbourhood", "preset")
    if preset is None and required:
        raise config.error("neighbourhood", "sites", "give sites or a preset")
    return neighbourhood_from_preset(preset or "nn", dim)


def kernel_from_config(config: ExperimentConfig, nbhd: Neighbourhood) -> WalkKernel:
    """[kernel] weights = (z):w ... or uniform = true (the default)."""
    weights = config.get("kernel", "weights")
    uniform = str(config.get("kernel", "uniform", "true")).lower() in TRUE_VALUES
    if weights:
        return validate_kernel(nbhd.dim, parse_weights(weights), nbhd)
    if not uniform:
        raise config.error("kernel", "uniform", "uniform = false needs weights")
    return kernel_uniform(nbhd)


def family_from_config(config: ExperimentConfig, kernel: WalkKernel, default: str = "qvoter") -> PerturbationFamily:
    name = config.get("family", "name", default)
    params = {k: float(v) for k, v in config.sections.get("family", {}).items() if k != "name"}
    return build_family(kernel, name, params)


def float_list(raw: Optional[str]) -> list[float]:
    """'1e4, 1e5 1e6' -> [1e4, 1e5, 1e6]."""
    if raw is None:
        return []
    try:
        return [float(part) for part in str(raw).replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"Expected a list of numbers, got {raw!r}")


# Run bookkeeping


@dataclass
class RunContext:
    command: str
    config: ExperimentConfig
    seed: int
    workers: int
    out_dir: Path
    run_id: str
    manifest: RunManifest
    estimates: list[DriftEstimate] = field(default_factory=list)

    def experiment_float(self, key: str, default: Optional[float] = None) -> Optional[float]:
        return self.config.get_float("experiment", key, default)

    def experiment_int(self, key: str, default: Optional[int] = None) -> Optional[int]:
        return self.config.get_int("experiment", key, default)

    def require_float(self, key: str) -> float:
        value = self.experiment_float(key)
        if value is None or not math.isfinite(value):
            raise self.config.error("experiment", key, "required")
        return value

    def csv(self, name: str, rows: pd.DataFrame | Sequence[dict], columns: Sequence[str]) -> Path:
        path = write_csv(rows, self.out_dir / name, columns)
        self.manifest.add_output(path)
        return path

    def events(self, name: str, log: EventLog, dim: int = 2) -> Path:
        path = write_event_log(log, self.out_dir / name, dim)
        self.manifest.add_output(path)
        return path

    def summary(self, payload: dict) -> Path:
        document = {"command": self.command, "seed": self.seed, **payload}
        if self.estimates:
            document["estimates"] = [e.as_dict() for e in self.estimates]
        path = write_summary(document, self.out_dir / SUMMARY_NAME)
        self.manifest.add_output(path)
        return path

    def record(self, estimates: Iterable[DriftEstimate]) -> None:
        self.estimates.extend(estimates)


def build_config(args: argparse.Namespace, overrides: dict[str, tuple[str, str]]) -> ExperimentConfig:
    """Load --config and apply every flag that was given on top of it."""
    config = load_experiment_config(getattr(args, "config", None))
    for dest, (section, key) in {**COMMON_OVERRIDES, **overrides}.items():
        value = getattr(args, dest, None)
        if value is not None and value is not False:
            config.set(section, key, value)
    return config


@contextmanager
def run_context(
    command: str,
    args: argparse.Namespace,
    overrides: Optional[dict[str, tuple[str, str]]] = None,
    needs_config: bool = True,
) -> Iterator[RunContext]:
    """
    Open a registered run.

    On success the manifest is written and the run completed in the
    registry with the output digests; any exception marks it failed and
    propagates.

    Raises:
        ConfigError: empty configuration for a command that needs one
    """
    config = build_config(args, overrides or {})
    if needs_config and config.is_empty():
        raise ConfigError(f"{command}: empty configuration; pass --config or override flags")
    seed = config.get_int("experiment", "seed", settings.DEFAULT_SEED)
    workers = args.workers or settings.WORKERS
    run_id = new_run_id(command)
    out_dir = Path(args.out) if args.out else settings.OUTPUT_DIR / run_id
    manifest = RunManifest(command=command, seed=seed, config=config.snapshot(), workers=workers)
    handler = attach_run_log(out_dir)
    init_db()
    with get_db_session() as db:
        RunService(db).start_run(command, seed, config.snapshot(), manifest.code_version, str(out_dir), run_id)
    context = RunContext(
        command=command,
        config=config,
        seed=seed,
        workers=workers,
        out_dir=out_dir,
        run_id=run_id,
        manifest=manifest,
    )
    try:
        yield context
    except BaseException as exc:
        with get_db_session() as db:
            RunService(db).fail_run(run_id, str(exc) or type(exc).__name__)
        raise
    finally:
        detach_run_log(handler)
    manifest.finish()
    manifest.write(out_dir)
    with get_db_session() as db:
        service = RunService(db)
        if context.estimates:
            service.record_estimates(run_id, context.estimates)
        service.complete_run(run_id, dict(manifest.outputs))
    logger.info(f"{command}: outputs in {out_dir}")
