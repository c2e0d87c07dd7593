"""
Shared test setup: point the run registry, outputs and logs at a scratch directory.

Settings are read when app.config is imported, so the environment is set
here before any test module imports the package.
"""

import os
import tempfile

_SCRATCH = tempfile.mkdtemp(prefix="vmp-tests-")

os.environ["DATABASE_URL"] = f"sqlite:///{_SCRATCH}/runs.db"
os.environ["OUTPUT_DIR"] = os.path.join(_SCRATCH, "output")
os.environ["LOG_DIR"] = os.path.join(_SCRATCH, "logs")
os.environ["WORKERS"] = "1"
