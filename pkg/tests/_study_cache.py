"""Run an experiment once per source revision and reuse its CSV.

The cache key hashes the experiment spec and every source file that affects simulation
results (everything except reporting, statistics and the CLI), so a cached
table can only be reused by the exact simulator code that produced it.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import simfidelity
from simfidelity.harness.experiment import ExperimentSpec, read_csv, run_experiment, write_csv

CACHE_DIR = Path(__file__).resolve().parent.parent / ".study_cache"
NOT_SIMULATION = {"metrics.py", "harness/reports.py", "harness/svg.py", "harness/cli.py"}


def source_digest() -> str:
    h = hashlib.sha256()
    root = Path(simfidelity.__file__).parent
    for p in sorted(root.rglob("*.py")):
        if p.relative_to(root).as_posix() in NOT_SIMULATION:
            continue
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def cached_rows(spec: ExperimentSpec, progress=None) -> list:
    key = hashlib.sha256((json.dumps(spec.to_dict(), sort_keys=True) + source_digest()).encode())
    path = CACHE_DIR / f"{spec.name}-{key.hexdigest()[:16]}.csv"
    if not path.exists():
        write_csv(run_experiment(spec, progress=progress), path)
    return read_csv(path)
