# Subcommand groups; each module exposes register(subparsers, common)
from . import algebra, estimation, runs, simulation

GROUPS = (algebra, simulation, estimation, runs)
