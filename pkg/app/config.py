"""
Application configuration.

Process-wide settings come from environment variables (a local .env file is
loaded first). Experiment parameters come from a structured text file with
sections and key/value pairs; command-line flags override individual fields.
"""

import configparser
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from dotenv import load_dotenv

from app.errors import ConfigError

# Load .env file
load_dotenv()

# Base directory
BASE_DIR = Path(__file__).resolve().parent.parent


class Settings:
    """Application settings from environment variables."""

    DEBUG: bool = os.getenv("DEBUG", "false").lower() == "true"

    # Run registry
    DATABASE_URL: str = os.getenv("DATABASE_URL", f"sqlite:///{BASE_DIR}/data/runs.db")

    # Output and log locations
    OUTPUT_DIR: Path = Path(os.getenv("OUTPUT_DIR", str(BASE_DIR / "output")))
    LOG_DIR: Path = Path(os.getenv("LOG_DIR", str(BASE_DIR / "logs")))

    # Parallel replicates (0 means "all available cores")
    WORKERS: int = int(os.getenv("WORKERS", "0")) or (os.cpu_count() or 1)

    # Reproducibility
    DEFAULT_SEED: int = int(os.getenv("DEFAULT_SEED", "20240607"))

    # Upper bound on the simulator's active set (sites)
    ACTIVE_SET_CAP: int = int(os.getenv("ACTIVE_SET_CAP", "2000000"))

    @classmethod
    def validate(cls) -> list[str]:
        """Validate settings. Returns list of problems (empty when valid)."""
        problems = []
        if cls.WORKERS < 1:
            problems.append("WORKERS must be >= 1")
        if cls.ACTIVE_SET_CAP < 1:
            problems.append("ACTIVE_SET_CAP must be >= 1")
        if cls.DEFAULT_SEED < 0:
            problems.append("DEFAULT_SEED must be nonnegative")
        return problems


settings = Settings()


# Experiment configuration

# Recognised sections of an experiment file
CONFIG_SECTIONS = ("neighbourhood", "kernel", "family", "experiment")

_VECTOR_RE = re.compile(r"\(\s*(-?\d+(?:\s*,\s*-?\d+)*)\s*\)")
_WEIGHT_RE = re.compile(r"\(\s*(-?\d+(?:\s*,\s*-?\d+)*)\s*\)\s*:\s*([0-9.eE+\-/]+)")


@dataclass
class ExperimentConfig:
    """Parsed experiment file: one flat key/value map per section."""

    sections: dict[str, dict[str, str]] = field(default_factory=dict)
    source: Optional[Path] = None
    # section -> key -> line number in the source file
    lines: dict[str, dict[str, int]] = field(default_factory=dict)

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """Return the raw string value of section.key, or default."""
        return self.sections.get(section, {}).get(key, default)

    def get_float(self, section: str, key: str, default: Optional[float] = None) -> Optional[float]:
        """Return section.key parsed as float."""
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise self.error(section, key, f"expected a number, got {raw!r}")

    def get_int(self, section: str, key: str, default: Optional[int] = None) -> Optional[int]:
        """Return section.key parsed as int (accepts 1e6 style)."""
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            value = float(raw)
        except ValueError:
            raise self.error(section, key, f"expected an integer, got {raw!r}")
        if value != int(value):
            raise self.error(section, key, f"expected an integer, got {raw!r}")
        return int(value)

    def set(self, section: str, key: str, value: Any) -> None:
        """Override a field (used for command-line flags)."""
        self.sections.setdefault(section, {})[key] = str(value)

    def is_empty(self) -> bool:
        return not any(self.sections.values())

    def error(self, section: str, key: str, problem: str) -> ConfigError:
        """Build a ConfigError that names the field and its line."""
        line = self.lines.get(section, {}).get(key)
        where = f"[{section}] {key}"
        if line is not None and self.source is not None:
            where = f"{self.source}:{line}: {where}"
        return ConfigError(f"{where}: {problem}")

    def snapshot(self) -> dict[str, dict[str, str]]:
        """Plain-dict copy for manifests."""
        return {name: dict(values) for name, values in sorted(self.sections.items())}


def _line_numbers(text: str) -> dict[str, dict[str, int]]:
    """Map section -> key -> 1-based line number for diagnostics."""
    result: dict[str, dict[str, int]] = {}
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            result.setdefault(current, {})
        elif current is not None and ("=" in line or ":" in line):
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            result[current].setdefault(key, number)
    return result


def parse_experiment_text(text: str, source: Optional[Path] = None) -> ExperimentConfig:
    """
    Parse experiment configuration text.

    Args:
        text: File contents (INI-style sections with key = value lines)
        source: Path used in error messages

    Returns:
        ExperimentConfig

    Raises:
        ConfigError: On syntax errors or unknown sections
    """
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        parser.read_string(text, source=str(source) if source else "<config>")
    except configparser.Error as e:
        raise ConfigError(f"Config parse error: {e}")

    config = ExperimentConfig(source=source, lines=_line_numbers(text))
    for section in parser.sections():
        name = section.strip().lower()
        if name not in CONFIG_SECTIONS:
            raise ConfigError(
                f"Unknown config section [{section}]"
                + (f" in {source}" if source else "")
                + f"; expected one of {', '.join(CONFIG_SECTIONS)}"
            )
        config.sections[name] = {k: v.strip() for k, v in parser.items(section)}
    return config


def load_experiment_config(path: Optional[Path]) -> ExperimentConfig:
    """Load an experiment file; a missing path gives an empty config."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    return parse_experiment_text(path.read_text(encoding="utf-8"), source=path)


def parse_vectors(raw: str) -> list[tuple[int, ...]]:
    """Parse '(1,0) (-1,0) ...' into integer tuples."""
    vectors = [tuple(int(c) for c in m.group(1).split(",")) for m in _VECTOR_RE.finditer(raw)]
    if not vectors:
        raise ConfigError(f"No lattice vectors found in {raw!r}")
    return vectors


def parse_weights(raw: str) -> dict[tuple[int, ...], float]:
    """Parse '(1,0):0.25 (-1,0):1/4 ...' into a weight map."""
    weights: dict[tuple[int, ...], float] = {}
    for m in _WEIGHT_RE.finditer(raw):
        vector = tuple(int(c) for c in m.group(1).split(","))
        value = m.group(2)
        if "/" in value:
            num, den = value.split("/", 1)
            weights[vector] = float(num) / float(den)
        else:
            weights[vector] = float(value)
    if not weights:
        raise ConfigError(f"No weighted vectors found in {raw!r}")
    return weights
