"""Experiment specs, the run grid of the three studies, and the result CSV.

A run is one (workload, model, policy, predictor, core count, seed) cell.
Runs share nothing, so they may execute in a process pool; rows are always
merged in run-key order, which keeps the CSV byte-identical across runs and
job counts.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..config import POLICIES, ConfigError, MachineConfig, load_mapping
from ..core.system import DEFAULT_JITTER, DEFAULT_WARMUP, MODELS, run_workload
from ..isa import apps as app_lib
from ..isa.generators import (FORK_JOIN_THREADS, BandwidthBound, Independent, SharedReadMostly,
                              gen_fork_join)
from ..isa.trace import WorkloadKind
from ..isa.traceio import read_workload

STUDIES = ("llc", "scaling", "brpred")
OUTPUT_ENV = "SIM_OUTPUT_DIR"
BASELINE_PREFIX = "single:"
BASELINE_L2_BYTES = 512 * 1024
SCALING_L2_PER_CORE = 512 * 1024

KERNELS = {
    "independent": Independent(),
    "shared_read_mostly": SharedReadMostly(0.5),
    "bandwidth_bound": BandwidthBound(),
}

CSV_COLUMNS = ("workload_id", "model", "policy", "seed", "core", "cycles", "instrs", "l2_misses",
               "study", "predictor", "n_cores", "app", "branches", "mispredicts",
               "l1i_misses", "l1d_misses", "l2_accesses")

_DEFAULT_WORKLOADS = {
    "llc": [f"mix{i}" for i in app_lib.llc_mixes()],
    "scaling": list(KERNELS),
    "brpred": list(app_lib.BRPRED_WORKLOADS),
}


@dataclass
class MeasurementWindow:
    """When statistics are collected.

    The window opens once every core has passed its begin marker and closes
    when every core has completed its trace at least once.  With ``restart``
    a core that finishes early starts over so that contention persists.
    """

    restart: bool = True
    warmup_branches: int = DEFAULT_WARMUP
    jitter_cycles: int = DEFAULT_JITTER


@dataclass
class ExperimentSpec:
    study: str
    name: str = ""
    machine: dict = field(default_factory=dict)
    workloads: list = field(default_factory=list)
    models: list = field(default_factory=lambda: ["acc", "oneipc"])
    policies: list = field(default_factory=lambda: list(POLICIES))
    predictors: list = field(default_factory=lambda: ["tournament", "path_neural", "tage"])
    core_counts: list = field(default_factory=lambda: list(FORK_JOIN_THREADS))
    repetitions: int = 7
    base_seed: int = 1
    slot_instrs: int = app_lib.DEFAULT_SLOT_INSTRS
    n_branches: int = 100_000
    scaling_work: int = 2_000_000
    scaling_barriers: int = 8
    window: MeasurementWindow = field(default_factory=MeasurementWindow)
    jobs: int = 1
    output_dir: str = "results"

    def __post_init__(self):
        if not self.name:
            self.name = self.study
        if not self.workloads and self.study in _DEFAULT_WORKLOADS:
            self.workloads = list(_DEFAULT_WORKLOADS[self.study])

    # --- validation -----------------------------------------------------------------

    def validate(self) -> "ExperimentSpec":
        if self.study not in STUDIES:
            raise ConfigError(f"study: must be one of {STUDIES}, got {self.study!r}")
        if not isinstance(self.repetitions, int) or self.repetitions < 1:
            raise ConfigError(f"repetitions: must be an integer >= 1, got {self.repetitions!r}")
        if not isinstance(self.base_seed, int) or self.base_seed < 0:
            raise ConfigError("base_seed: must be a non-negative integer")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            raise ConfigError("jobs: must be a positive integer")
        for i, m in enumerate(self.models):
            if m not in MODELS:
                raise ConfigError(f"models[{i}]: unknown model {m!r}; expected one of {sorted(MODELS)}")
        if not self.models:
            raise ConfigError("models: at least one model is required")
        for i, p in enumerate(self.policies):
            if p not in POLICIES:
                raise ConfigError(f"policies[{i}]: unknown policy {p!r}")
        self.machine_config()
        for i, kind in enumerate(self.predictors):
            try:
                self.machine_config().with_overrides({"predictor": {"kind": kind}})
            except ConfigError as exc:
                raise ConfigError(f"predictors[{i}]: {exc}") from None
        if not self.workloads:
            raise ConfigError("workloads: at least one workload is required")
        for i, w in enumerate(self.workloads):
            self._check_workload(i, w)
        if self.study == "llc":
            if "lru" not in self.policies:
                raise ConfigError("policies: the llc study needs 'lru' as the baseline policy")
            if not isinstance(self.slot_instrs, int) or self.slot_instrs < 1:
                raise ConfigError("slot_instrs: must be a positive integer")
        if self.study == "scaling":
            for i, n in enumerate(self.core_counts):
                if n not in FORK_JOIN_THREADS:
                    raise ConfigError(f"core_counts[{i}]: must be one of {FORK_JOIN_THREADS}, got {n!r}")
            if 1 not in self.core_counts:
                raise ConfigError("core_counts: the single-core run is the speedup reference")
            if self.scaling_work < 16 * (self.scaling_barriers + 1):
                raise ConfigError("scaling_work: too small for the barrier count")
        if self.study == "brpred" and self.n_branches < 1:
            raise ConfigError("n_branches: must be positive")
        w = self.window
        if w.warmup_branches < 0 or w.jitter_cycles < 0:
            raise ConfigError("window: warmup_branches and jitter_cycles must be non-negative")
        return self

    def _check_workload(self, i: int, w) -> None:
        where = f"workloads[{i}]"
        if not isinstance(w, str):
            raise ConfigError(f"{where}: expected a string, got {w!r}")
        if _is_trace_file(w):
            if not Path(w).exists():
                raise ConfigError(f"{where}: trace file {w!r} not found")
            return
        if self.study == "llc":
            if w not in _DEFAULT_WORKLOADS["llc"] and w not in app_lib.APPS:
                raise ConfigError(f"{where}: unknown llc workload {w!r} (mix1..mix15 or an app name)")
        elif self.study == "scaling":
            if w not in KERNELS:
                raise ConfigError(f"{where}: unknown kernel {w!r}; expected one of {sorted(KERNELS)}")
        elif w not in app_lib.BRPRED_WORKLOADS:
            raise ConfigError(f"{where}: unknown branch workload {w!r}")

    def machine_config(self, **over) -> MachineConfig:
        try:
            cfg = MachineConfig().with_overrides(self.machine)
        except ConfigError as exc:
            raise ConfigError(f"machine.{exc}") from None
        return cfg.with_overrides(over) if over else cfg

    # --- (de)serialisation ---------------------------------------------------------------

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentSpec":
        if not isinstance(data, Mapping):
            raise ConfigError("<root>: expected a table")
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in names:
                raise ConfigError(f"{key}: unknown field")
            kwargs[key] = value
        if "study" not in kwargs:
            raise ConfigError("study: required")
        if "window" in kwargs:
            win = kwargs["window"]
            wnames = {f.name for f in dataclasses.fields(MeasurementWindow)}
            if not isinstance(win, Mapping):
                raise ConfigError("window: expected a table")
            for key in win:
                if key not in wnames:
                    raise ConfigError(f"window.{key}: unknown field")
            kwargs["window"] = MeasurementWindow(**win)
        for key in ("workloads", "models", "policies", "predictors", "core_counts"):
            if key in kwargs:
                if not isinstance(kwargs[key], (list, tuple)):
                    raise ConfigError(f"{key}: expected a list")
                kwargs[key] = list(kwargs[key])
        return cls(**kwargs).validate()

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            data = load_mapping(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)


def _is_trace_file(name: str) -> bool:
    return name.endswith(".trace") or name.endswith(".trace.gz")


# --- run grid -----------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class RunKey:
    workload_id: str
    model: str
    policy: str
    predictor: str
    n_cores: int
    seed: int


def _llc_workload(name: str, slot_instrs: int):
    if name.startswith(BASELINE_PREFIX):
        return app_lib.single_app_workload(name[len(BASELINE_PREFIX):], slot_instrs)
    if _is_trace_file(name):
        return read_workload(name)
    if name in app_lib.APPS:
        return app_lib.single_app_workload(name, slot_instrs)
    return app_lib.mix_workload(int(name[3:]), slot_instrs)


def build_workload(spec: ExperimentSpec, key: RunKey):
    if key.workload_id.startswith(BASELINE_PREFIX) or spec.study == "llc":
        return _llc_workload(key.workload_id, spec.slot_instrs)
    if _is_trace_file(key.workload_id):
        return read_workload(key.workload_id)
    if spec.study == "scaling":
        kernel = KERNELS[key.workload_id]
        return gen_fork_join(key.n_cores, kernel, spec.scaling_work // key.n_cores,
                             spec.scaling_barriers, seed=spec.base_seed)
    return app_lib.brpred_workload(key.workload_id, spec.n_branches)


def run_keys(spec: ExperimentSpec, baselines: bool = True) -> list:
    """Every run of ``spec`` in canonical order (single-core WSU baselines included for llc)."""
    seeds = [spec.base_seed + i for i in range(spec.repetitions)]
    default_pred = spec.machine_config().predictor.kind
    keys = []
    if spec.study == "llc":
        cores = spec.machine_config().n_cores
        for w in spec.workloads:
            for m in spec.models:
                for p in spec.policies:
                    keys += [RunKey(w, m, p, default_pred, cores, s) for s in seeds]
        if baselines:
            for app in sorted(_apps_of(spec)):
                for m in spec.models:
                    keys += [RunKey(BASELINE_PREFIX + app, m, "lru", default_pred, 1, s) for s in seeds]
    elif spec.study == "scaling":
        for w in spec.workloads:
            for m in spec.models:
                for n in spec.core_counts:
                    keys += [RunKey(w, m, "lru", default_pred, n, s) for s in seeds]
    else:
        for w in spec.workloads:
            for m in spec.models:
                for pr in spec.predictors:
                    keys += [RunKey(w, m, "lru", pr, 1, s) for s in seeds]
    return sorted(keys)


def _apps_of(spec: ExperimentSpec) -> set:
    apps = set()
    for w in spec.workloads:
        if _is_trace_file(w):
            wl = read_workload(w)
            if wl.apps is None:
                raise ConfigError(f"workload {w!r}: trace file names no apps, so WSU has no baseline")
            apps.update(wl.apps)
        elif w in app_lib.APPS:
            apps.add(w)
        else:
            apps.update(app_lib.llc_mixes()[int(w[3:])])
    unknown = apps - set(app_lib.APPS)
    if unknown:
        raise ConfigError(f"no single-core baseline for apps {sorted(unknown)}")
    return apps


def machine_for(spec: ExperimentSpec, key: RunKey) -> MachineConfig:
    over = {"replacement": {"policy": key.policy}, "predictor": {"kind": key.predictor}}
    if key.workload_id.startswith(BASELINE_PREFIX):
        over["n_cores"] = 1
        over["memory"] = {"l2": {"size_bytes": BASELINE_L2_BYTES}}
    elif spec.study == "scaling":
        over["n_cores"] = key.n_cores
        over["memory"] = {"l2": {"size_bytes": SCALING_L2_PER_CORE * key.n_cores}}
    elif spec.study == "brpred":
        over["n_cores"] = 1
    return spec.machine_config(**over)


def run_one(spec: ExperimentSpec, key: RunKey) -> list:
    """Simulate one run and return its per-core CSV rows."""
    cfg = machine_for(spec, key)
    wl = build_workload(spec, key)
    if wl.n_threads > cfg.n_cores:
        raise ConfigError(f"workload {key.workload_id!r} needs {wl.n_threads} cores, machine has {cfg.n_cores}")
    win = spec.window
    multi = wl.kind == WorkloadKind.MULTIPROGRAMMED
    res = run_workload(cfg, wl, key.model, seed=key.seed, warmup=win.warmup_branches,
                       jitter_max=win.jitter_cycles if multi else 0)
    if key.workload_id.startswith(BASELINE_PREFIX):
        apps = [key.workload_id[len(BASELINE_PREFIX):]]
    else:
        apps = wl.apps or [""] * wl.n_threads
    rows = []
    for c, st in enumerate(res.cores):
        rows.append({
            "workload_id": key.workload_id, "model": key.model, "policy": key.policy,
            "seed": key.seed, "core": c, "cycles": st.cycles, "instrs": st.instrs_committed,
            "l2_misses": st.l2_misses, "study": spec.study, "predictor": key.predictor,
            "n_cores": cfg.n_cores, "app": apps[c], "branches": st.branches,
            "mispredicts": st.mispredicts, "l1i_misses": st.l1i_misses,
            "l1d_misses": st.l1d_misses, "l2_accesses": st.l2_accesses,
        })
    return rows


def _run_batch(args):
    spec, key = args
    return key, run_one(spec, key)


def run_experiment(spec: ExperimentSpec, jobs: int = None, progress=None) -> list:
    """Run every cell of ``spec``; returns CSV rows in run-key order."""
    spec.validate()
    keys = run_keys(spec)
    jobs = jobs or spec.jobs
    results = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, rows in pool.map(_run_batch, [(spec, k) for k in keys]):
                results[key] = rows
                if progress:
                    progress(key, len(results), len(keys))
    else:
        for key in keys:
            results[key] = run_one(spec, key)
            if progress:
                progress(key, len(results), len(keys))
    return [row for key in sorted(results) for row in results[key]]


def single_core_baselines(apps, model: str, spec: ExperimentSpec = None, rows=None) -> dict:
    """Mean single-core IPC per app (512KB L2, LRU) for one core model.

    Uses the baseline rows of ``rows`` when given, otherwise runs them.
    """
    if spec is None:
        spec = ExperimentSpec(study="llc", workloads=list(apps) or ["bzip2"])
    if rows is None:
        keys = [RunKey(BASELINE_PREFIX + a, model, "lru", spec.machine_config().predictor.kind, 1,
                       spec.base_seed + i)
                for a in apps for i in range(spec.repetitions)]
        for a in apps:
            if a not in app_lib.APPS:
                raise KeyError(f"no baseline for unknown app {a!r}")
        rows = [r for k in keys for r in run_one(spec, k)]
    out = {}
    for a in apps:
        ipcs = [int(r["instrs"]) / int(r["cycles"]) for r in rows
                if r["workload_id"] == BASELINE_PREFIX + a and r["model"] == model and int(r["cycles"]) > 0]
        if not ipcs:
            raise KeyError(f"missing single-core baseline for app {a!r} on model {model!r}")
        out[a] = sum(ipcs) / len(ipcs)
    return out


# --- CSV -----------------------------------------------------------------------------------

def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in CSV_COLUMNS})
    return buf.getvalue()


def write_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows))
    return path


_INT_COLUMNS = {"seed", "core", "cycles", "instrs", "l2_misses", "n_cores", "branches",
                "mispredicts", "l1i_misses", "l1d_misses", "l2_accesses"}


def read_csv(path) -> list:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(CSV_COLUMNS[:8]) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = []
        for r in reader:
            rows.append({k: (int(v) if k in _INT_COLUMNS and v != "" else v) for k, v in r.items()})
        return rows
