"""One test per acceptance criterion; each prints a single PASS/FAIL line."""
import time
from pathlib import Path

import numpy as np

from _study_cache import cached_rows
from oracles import stack_lru_misses
from simfidelity.config import CacheGeometry, MachineConfig
from simfidelity.core.system import System, run_core, run_workload
from simfidelity.harness.experiment import ExperimentSpec, rows_to_csv, run_experiment
from simfidelity.harness.reports import report_brpred, report_llc, report_scaling
from simfidelity.isa.apps import BRPRED_WORKLOADS
from simfidelity.isa.trace import Kind, Trace, TraceInstr, Workload, WorkloadKind
from simfidelity.mem import MemoryHierarchy
from simfidelity.metrics import NormalDist, geomean_dist, ratio_dist, variation_range
from simfidelity.repl import PolicyState

SPECS = Path(__file__).resolve().parent.parent / "scripts" / "specs"
PC0 = 0x400000
KiB = 1024
MODELS = ("acc", "oneipc")


def machine(n_cores=1, ideal=False, **mem):
    cfg = MachineConfig(n_cores=n_cores)
    cfg.memory.ideal = ideal
    for k, v in mem.items():
        setattr(cfg.memory, k, v)
    return cfg.validate()


# --- C1 ----------------------------------------------------------------------------------------

def test_c1_oneipc_definition(criterion):
    alus = Trace(kind=np.zeros(10**5, np.int8), pc=PC0 + 4 * (np.arange(10**5) % 16),
                 addr=np.zeros(10**5, np.int64), taken=np.zeros(10**5, np.int8),
                 target=np.zeros(10**5, np.int64))
    run_core(alus[:100], machine(ideal=True), model="acc", warmup=0)  # compile outside the timing
    run_core(alus[:100], machine(ideal=True), model="oneipc", warmup=0)
    t0 = time.perf_counter()
    one = run_core(alus, machine(ideal=True), model="oneipc", warmup=0)
    acc = run_core(alus, machine(ideal=True), model="acc", warmup=0)
    dt = time.perf_counter() - t0
    ok = one.ipc == 1.0 and acc.ipc >= 0.999 and dt < 1.0
    criterion("C1", ok, f"1-IPC IPC={one.ipc:.6f}, ACC IPC={acc.ipc:.6f}, {dt:.2f}s")


# --- C2 ----------------------------------------------------------------------------------------

def _load(i, addr):
    return TraceInstr(Kind.LOAD, PC0 + 4 * i, mem_addr=addr)


def _probe_latency(prefix, addr, model):
    """Latency of one load after ``prefix``: its cost over an Alu in the same slot, plus 1."""
    n = len(prefix)
    with_load = Trace.from_instrs(prefix + [_load(n, addr)])
    with_alu = Trace.from_instrs(prefix + [TraceInstr(Kind.ALU, PC0 + 4 * n)])
    cfg = machine()
    a = run_core(with_load, cfg, model=model, warmup=0).cycles
    b = run_core(with_alu, cfg, model=model, warmup=0).cycles
    return a - b + 1


def test_c2_latency_ledger(criterion):
    a = 0x10000
    cases = {
        "L1 hit": ([_load(0, a)], a),
        # four more lines in the same 4-way L1 set evict the first; L2 keeps it
        "L2 hit": ([_load(i, a + i * 8 * KiB) for i in range(5)], a),
        "L2 miss": ([_load(0, a)], a + 64),
    }
    got = {(name, m): _probe_latency(p, x, m) for name, (p, x) in cases.items() for m in MODELS}
    mh = MemoryHierarchy(machine())
    direct = [mh.access(0, "load", a, now=0), mh.access(0, "load", a, now=1000)]
    want = {"L1 hit": 1, "L2 hit": 12, "L2 miss": 132}
    ok = all(got[(n, m)] == want[n] for n, m in got) and direct == [132, 1]
    detail = ", ".join(f"{n} {got[(n, 'acc')]}/{got[(n, 'oneipc')]}" for n in want)
    criterion("C2", ok, f"ACC/1-IPC latencies {detail}")


# --- C3 ----------------------------------------------------------------------------------------

def test_c3_lru_stack_oracle(criterion):
    bad = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        sets = int(rng.choice([1, 2, 4, 8, 16, 32, 64]))
        ways = int(rng.choice([1, 2, 4, 8]))
        n_lines = int(rng.integers(sets * ways // 2 + 1, 4 * sets * ways + 2))
        lines = rng.integers(0, n_lines, 10**4).tolist()
        l2_ways = ways * 2 if ways < 8 else ways
        l1 = MemoryHierarchy(machine(l1d=CacheGeometry(sets * ways * 64, ways)))
        # a one-line L1 forwards every new line, so L2 sees the raw stream
        l2 = MemoryHierarchy(machine(l1d=CacheGeometry(64, 1), l2=CacheGeometry(sets * l2_ways * 64, l2_ways)))
        for t, line in enumerate(lines):
            l1.access(0, "load", line * 64, now=200 * t)
            l2.access(0, "load", line * 64, now=200 * t)
        if l1.counters(0)["l1d_misses"] != stack_lru_misses(lines, sets, ways):
            bad.append(("L1", seed))
        if l2.counters(0)["l2_misses"] != stack_lru_misses(lines, sets, l2_ways):
            bad.append(("L2", seed))
    criterion("C3", not bad, f"100 traces x 10^4 accesses, L1 and L2; mismatches: {bad or 'none'}")


# --- C4 ----------------------------------------------------------------------------------------

def _shared_workload(rng, n_threads, n=6000):
    traces = []
    for _ in range(n_threads):
        kinds = rng.choice([Kind.ALU, Kind.LOAD, Kind.STORE], size=n, p=[0.3, 0.4, 0.3])
        is_mem = kinds != Kind.ALU
        addr = np.where(is_mem, rng.integers(0, 48, n) * 64 + 0x10000, 0)
        traces.append(Trace(kind=kinds.astype(np.int8), pc=PC0 + 4 * (np.arange(n) % 256),
                            addr=addr.astype(np.int64), taken=np.zeros(n, np.int8),
                            target=np.zeros(n, np.int64)))
    return Workload("stress", traces, kind=WorkloadKind.FORK_JOIN)


def test_c4_coherence_stress(criterion):
    steps, failures = 0, []
    for n_cores in (2, 3, 4):
        for seed in range(2):
            rng = np.random.default_rng(100 * n_cores + seed)
            cfg = machine(n_cores=n_cores, l1d=CacheGeometry(512, 2), l1i=CacheGeometry(512, 2),
                          l2=CacheGeometry(2048, 4))
            sysm = System(cfg, _shared_workload(rng, n_cores), "acc", seed)
            for _ in range(10**4):
                if not sysm.step():
                    break
                steps += 1
                try:
                    sysm.memory.check_invariants()
                except AssertionError as exc:
                    failures.append((n_cores, seed, str(exc)))
                    break
    criterion("C4", not failures, f"{steps} checked steps over 6 runs; violations: {failures or 'none'}")


# --- C5 ----------------------------------------------------------------------------------------

def test_c5_bimodal_epsilon(criterion):
    fills = 10**5
    fracs = {}
    for policy in ("dip", "drrip"):
        ps = PolicyState(4096, 8, policy, seed=5)
        s = int(np.flatnonzero(ps.leader == 1)[0])  # the bimodal leader of core 0
        if policy == "dip":
            fracs[policy] = sum(ps.dip_insert(s, 0) == "MRU" for _ in range(fills)) / fills
        else:
            fracs[policy] = sum(ps.drrip_insert_rrpv(s, 0) == 2 for _ in range(fills)) / fills
    ok = all(0.027 <= f <= 0.036 for f in fracs.values())
    criterion("C5", ok, f"BIP MRU fraction {fracs['dip']:.4f}, BRRIP RRPV=2 fraction {fracs['drrip']:.4f}")


# --- C6 ----------------------------------------------------------------------------------------

def _cyclic_thrash(n_sets, per_set, passes):
    lines = np.arange(n_sets * per_set)
    addr = np.tile(lines * 64 + 0x10000000, passes).astype(np.int64)
    n = len(addr)
    return Trace(kind=np.full(n, Kind.LOAD, np.int8), pc=PC0 + 4 * (np.arange(n) % 16), addr=addr,
                 taken=np.zeros(n, np.int8), target=np.zeros(n, np.int64)), len(lines)


def test_c6_dip_beats_lru_on_thrash(criterion):
    # 256 KB / 8-way L2 = 512 sets; nine lines per set cycle through it
    trace, per_pass = _cyclic_thrash(512, 9, 12)
    wl = Workload("thrash", [trace], begin=[4 * per_pass])
    hit = {}
    for policy in ("lru", "dip"):
        for model in MODELS:
            cfg = MachineConfig(n_cores=1)
            cfg.memory.l2 = CacheGeometry(256 * KiB, 8)
            cfg.replacement.policy = policy
            st = run_workload(cfg.validate(), wl, model, seed=1).cores[0]
            hit[(policy, model)] = 1 - st.l2_misses / st.l2_accesses
    ok = all(hit[("lru", m)] == 0 and hit[("dip", m)] > 0 for m in MODELS)
    detail = ", ".join(f"{p}/{m} {hit[(p, m)]:.3f}" for p, m in hit)
    criterion("C6", ok, f"steady-state L2 hit rates {detail}")


# --- C7 ----------------------------------------------------------------------------------------

def test_c7_statistics_vs_monte_carlo(criterion):
    t0 = time.perf_counter()
    n = 10**6
    rng = np.random.default_rng(7)
    x, y = NormalDist(1.0, 0.02), NormalDist(1.1, 0.05 * 1.1)
    mc_ratio = np.std(rng.normal(x.mu, x.sigma, n) / rng.normal(y.mu, y.sigma, n))
    err_r = abs(ratio_dist(x, y).sigma / mc_ratio - 1)

    mus = rng.uniform(0.8, 1.3, 15)
    sig = mus * rng.uniform(0.005, 0.05, 15)
    g = np.exp(np.log(rng.normal(mus, sig, size=(n, 15))).mean(axis=1))
    err_g = abs(geomean_dist([NormalDist(m, s) for m, s in zip(mus, sig)]).sigma / np.std(g) - 1)

    lo, hi = variation_range(NormalDist(0, 1))
    z = rng.standard_normal(n)
    cover = float(np.mean((z >= lo) & (z <= hi)))
    dt = time.perf_counter() - t0
    ok = err_r < 0.02 and err_g < 0.02 and 0.78 <= cover <= 0.82 and dt < 30
    criterion("C7", ok, f"ratio sigma err {err_r:.2%}, geomean sigma err {err_g:.2%}, "
                        f"coverage {cover:.4f}, {dt:.1f}s")


# --- C8 ----------------------------------------------------------------------------------------

def _metric_rows(table):
    rows = []
    for (w, m, p), misses in table.items():
        for seed, x in enumerate(misses, start=1):
            rows.append({"workload_id": w, "model": m, "policy": p, "seed": seed, "core": 0,
                         "cycles": 2000, "instrs": 1000, "l2_misses": x, "app": ""})
    return rows


def _count(rep, key):
    return sum(len(v[key]) for by_metric in rep["mismatches"].values() for v in by_metric.values())


def test_c8_pipeline_self_test(criterion):
    acc = {("w1", "acc", "lru"): [100, 102, 98], ("w1", "acc", "drrip"): [90, 91, 89],
           ("w2", "acc", "lru"): [50, 51, 49], ("w2", "acc", "drrip"): [60, 61, 59]}
    same = {(w, "oneipc", p): v for (w, _, p), v in acc.items()}
    self_rep = report_llc(_metric_rows({**acc, **same}))
    dists = [d["distance"] for d in self_rep["distances"] if d["distance"] is not None]
    self_ok = dists and max(dists) < 1e-12 and _count(self_rep, "mismatch") == 0

    # w1 flips side on 1-IPC while the ACC range (about 0.88..0.92) stays below 1
    flipped = dict(same)
    flipped[("w1", "oneipc", "drrip")] = [110, 110, 110]
    fix_rep = report_llc(_metric_rows({**acc, **flipped}))
    clear = _count(fix_rep, "clear_mismatch")
    ok = bool(self_ok) and clear == 1 and _count(fix_rep, "mismatch") == 1
    criterion("C8", ok, f"self-comparison max distance {max(dists):.1e}, "
                        f"{_count(self_rep, 'mismatch')} mismatches; fixture ClearMismatch count {clear}")


# --- C9 ----------------------------------------------------------------------------------------

def test_c9_trend_agreement(criterion, tmp_path):
    spec = ExperimentSpec.load(SPECS / "llc_full.toml")
    t0 = time.perf_counter()
    rows = cached_rows(spec)
    rep = report_llc(rows, tmp_path)
    v = rep["verdicts"]["drrip/lru"]["mpki"]
    files = ["llc_report.json", "llc_ratios.csv", "llc_geomeans.csv", "llc_distances.csv"]
    complete = all((tmp_path / f).exists() for f in files) and len(rep["workloads"]) == 15
    ok = complete and v["total"] == 15 and v["agree"] >= 13
    criterion("C9", ok, f"DRRIP vs LRU MPKI verdict agrees on {v['agree']}/{v['total']} mixes "
                        f"(report {'complete' if complete else 'incomplete'}, {time.perf_counter() - t0:.0f}s)")


# --- C10 ---------------------------------------------------------------------------------------

def test_c10_scaling_sanity(criterion):
    spec = ExperimentSpec.from_mapping({"study": "scaling", "workloads": ["independent"], "repetitions": 1})
    rep = report_scaling(run_experiment(spec))
    sp = {(s["model"], s["n_cores"]): s["speedup"] for s in rep["speedups"]}
    worst = max(d["rel_diff"] for d in rep["diffs"])
    ok = all(3.8 <= sp[(m, 4)] <= 4.0 for m in MODELS) and worst < 0.05
    criterion("C10", ok, f"4-core speedup ACC {sp[('acc', 4)]:.4f}, 1-IPC {sp[('oneipc', 4)]:.4f}; "
                         f"max curve difference {worst:.3%}")


# --- C11 ---------------------------------------------------------------------------------------

def test_c11_predictor_sanity(criterion):
    spec = ExperimentSpec.from_mapping({"study": "brpred", "workloads": list(BRPRED_WORKLOADS),
                                        "repetitions": 1})
    cells = report_brpred(run_experiment(spec))["cells"]
    by = {(c["workload_id"], c["predictor"]): c for c in cells}
    preds = spec.predictors
    const = all(by[(w, p)][m] == 0 for w in ("always_taken", "never_taken") for p in preds for m in MODELS)
    rnd = [by[("random_0.5", p)][m] for p in preds for m in MODELS]
    max_delta = max(c["delta"] for c in cells)
    ok = const and all(0.47 <= r <= 0.53 for r in rnd) and max_delta <= 0.01
    criterion("C11", ok, f"constant patterns all zero: {const}; random {min(rnd):.4f}..{max(rnd):.4f}; "
                         f"max |ACC-1IPC| {max_delta:.4f} over {len(cells)} cells")


# --- C12 ---------------------------------------------------------------------------------------

def test_c12_determinism(criterion):
    specs = [
        {"study": "llc", "workloads": ["mix5"], "repetitions": 2, "slot_instrs": 5000},
        {"study": "scaling", "workloads": ["shared_read_mostly"], "core_counts": [1, 4],
         "repetitions": 1, "scaling_work": 40000},
        {"study": "brpred", "workloads": ["branchy"], "repetitions": 2, "n_branches": 5000},
    ]
    same = []
    for d in specs:
        spec = ExperimentSpec.from_mapping(d)
        first = rows_to_csv(run_experiment(spec))
        same.append(first == rows_to_csv(run_experiment(spec)) == rows_to_csv(run_experiment(spec, jobs=2)))
    criterion("C12", all(same), f"byte-identical CSV on repeat and with 2 jobs: {same}")
