"""Turn result tables into comparison reports (CSV + JSON + SVG).

LLC report
    per (policy, metric): normalized distance between the per-workload mean
    vectors of the two models; per (policy pair, metric, workload): the
    accurate model's improvement ratio as N(mu, sigma) with its 80% range,
    the simplified model's ratio and the mismatch verdict; per (policy pair,
    metric): geometric means; lists of mismatching workloads.
Scaling report
    speedup over the single-core run per kernel, core count and model.
Branch-predictor report
    misprediction rate per workload, predictor and model.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from collections import defaultdict
from pathlib import Path

from .. import metrics
from ..metrics import MismatchVerdict, NormalDist
from . import svg
from .experiment import BASELINE_PREFIX, read_csv

LLC_METRICS = ("mpki", "ttp", "wsu")
POLICY_PAIRS = (("dip", "lru"), ("drrip", "lru"), ("drrip", "dip"))
ACC, ONEIPC = "acc", "oneipc"
REPORT_VERSION = 1


class ReportError(ValueError):
    pass


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (f"{v:.6g}" if isinstance(v, float) else v) for v in r])
    return buf.getvalue()


def _group_runs(rows):
    """{(workload, model, policy): {seed: [core rows]}}"""
    runs = defaultdict(lambda: defaultdict(list))
    for r in rows:
        runs[(r["workload_id"], r["model"], r["policy"])][int(r["seed"])].append(r)
    return runs


def _baselines(runs) -> dict:
    """{(model, app): (mean IPC, sigma)} from the single-core rows."""
    out = {}
    for (wid, model, _), seeds in runs.items():
        if not wid.startswith(BASELINE_PREFIX):
            continue
        ipcs = [int(c["instrs"]) / int(c["cycles"]) for cores in seeds.values() for c in cores
                if int(c["cycles"]) > 0]
        if ipcs:
            d = NormalDist.from_samples(ipcs)
            out[(model, wid[len(BASELINE_PREFIX):])] = (d.mu, d.sigma)
    return out


def _run_metric(cores, metric, model, baselines):
    cores = sorted(cores, key=lambda c: int(c["core"]))
    rm = metrics.RunMetrics(cores[0]["workload_id"], model, cores[0]["policy"], int(cores[0]["seed"]),
                            [int(c["cycles"]) for c in cores], [int(c["instrs"]) for c in cores],
                            [int(c["l2_misses"]) for c in cores])
    if metric == "mpki":
        return rm.mpki
    if metric == "ttp":
        return rm.ttp
    single = []
    for c in cores:
        b = baselines.get((model, c.get("app", "")))
        if b is None:
            return None
        single.append(b[0])
    return rm.wsu(single)


# --- LLC -------------------------------------------------------------------------------------

def llc_tables(rows) -> dict:
    """Per-seed metric samples: {(workload, model, policy, metric): {seed: value}}."""
    runs = _group_runs(rows)
    base = _baselines(runs)
    samples = {}
    for (wid, model, policy), seeds in runs.items():
        if wid.startswith(BASELINE_PREFIX):
            continue
        for metric in LLC_METRICS:
            vals = {}
            for seed, cores in seeds.items():
                v = _run_metric(cores, metric, model, base)
                if v is not None:
                    vals[seed] = v
            if vals:
                samples[(wid, model, policy, metric)] = vals
    return {"samples": samples, "baselines": base}


def _paired_geomean_ratio(new: dict, old: dict):
    seeds = sorted(set(new) & set(old))
    if not seeds or any(old[s] <= 0 or new[s] <= 0 for s in seeds):
        return None
    return math.exp(sum(math.log(new[s] / old[s]) for s in seeds) / len(seeds))


def _side(v) -> int:
    return (v > 1) - (v < 1)


def report_llc(rows, out_dir=None) -> dict:
    tables = llc_tables(rows)
    samples = tables["samples"]
    workloads = sorted({k[0] for k in samples}, key=_workload_order)
    policies = sorted({k[2] for k in samples})
    gaps = []

    def dist(w, m, p, metric):
        s = samples.get((w, m, p, metric))
        return NormalDist.from_samples(list(s.values())) if s else None

    # (a) normalized distances between the models' per-workload mean vectors
    distances = []
    for p in policies:
        for metric in LLC_METRICS:
            xs, ys, missing = [], [], []
            for w in workloads:
                a, b = dist(w, ACC, p, metric), dist(w, ONEIPC, p, metric)
                if a is None or b is None:
                    missing.append(w)
                    continue
                xs.append(a.mu)
                ys.append(b.mu)
            d = None
            if xs and not missing:
                try:
                    d = metrics.normalized_distance(xs, ys)
                except ValueError:
                    d = None
            if missing:
                gaps.append({"table": "distance", "policy": p, "metric": metric, "workloads": missing})
            distances.append({"policy": p, "metric": metric, "distance": d, "n_workloads": len(xs)})

    # (b) per-workload ratios, (c) geometric means, (d) mismatch lists, plus verdict agreement
    ratios, geomeans, mismatches, verdicts = [], [], {}, {}
    for new, old in POLICY_PAIRS:
        if new not in policies or old not in policies:
            continue
        pair = f"{new}/{old}"
        for metric in LLC_METRICS:
            acc_ratios, one_ratios, wl_used = [], [], []
            mism, clear = [], []
            agree, total, per_wl = 0, 0, {}
            for w in workloads:
                an, ao = dist(w, ACC, new, metric), dist(w, ACC, old, metric)
                on, oo = dist(w, ONEIPC, new, metric), dist(w, ONEIPC, old, metric)
                if None in (an, ao, on, oo) or ao.mu == 0 or oo.mu == 0:
                    gaps.append({"table": "ratio", "pair": pair, "metric": metric, "workloads": [w]})
                    continue
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always", metrics.ApproximationWarning)
                    r_acc = metrics.ratio_dist(an, ao)
                unreliable = any(issubclass(c.category, metrics.ApproximationWarning) for c in caught)
                r_one = on.mu / oo.mu
                verdict = metrics.classify(r_acc, r_one)
                lo, hi = metrics.variation_range(r_acc)
                ratios.append({"pair": pair, "metric": metric, "workload_id": w,
                               "acc_mu": r_acc.mu, "acc_sigma": r_acc.sigma, "acc_lo": lo, "acc_hi": hi,
                               "oneipc": r_one, "verdict": verdict.value, "approx_unreliable": unreliable})
                if verdict.is_mismatch:
                    mism.append(w)
                if verdict is MismatchVerdict.CLEAR_MISMATCH:
                    clear.append(w)
                acc_ratios.append(r_acc)
                one_ratios.append(r_one)
                wl_used.append(w)
                g_acc = _paired_geomean_ratio(samples[(w, ACC, new, metric)], samples[(w, ACC, old, metric)])
                g_one = _paired_geomean_ratio(samples[(w, ONEIPC, new, metric)],
                                              samples[(w, ONEIPC, old, metric)])
                if g_acc is not None and g_one is not None:
                    total += 1
                    same = _side(g_acc) == _side(g_one)
                    agree += same
                    per_wl[w] = {"acc": g_acc, "oneipc": g_one, "agree": same}
            mismatches.setdefault(pair, {})[metric] = {"mismatch": mism, "clear_mismatch": clear}
            verdicts.setdefault(pair, {})[metric] = {"agree": agree, "total": total, "workloads": per_wl}
            if acc_ratios and all(r.mu > 0 for r in acc_ratios) and all(r > 0 for r in one_ratios):
                g = metrics.geomean_dist(acc_ratios)
                g_one = math.exp(sum(math.log(r) for r in one_ratios) / len(one_ratios))
                geomeans.append({"pair": pair, "metric": metric, "acc_mu": g.mu, "acc_sigma": g.sigma,
                                 "oneipc": g_one, "n_workloads": len(acc_ratios)})

    baselines = [{"model": m, "app": a, "ipc": mu, "sigma": sd}
                 for (m, a), (mu, sd) in sorted(tables["baselines"].items())]
    report = {
        "study": "llc", "version": REPORT_VERSION, "workloads": workloads, "policies": policies,
        "distances": distances, "ratios": ratios, "geomeans": geomeans,
        "mismatches": mismatches, "verdicts": verdicts, "baselines": baselines, "gaps": gaps,
    }
    if out_dir is not None:
        _emit_llc(report, Path(out_dir))
    return report


def _workload_order(w: str):
    digits = "".join(ch for ch in w if ch.isdigit())
    return (w.rstrip("0123456789"), int(digits) if digits else -1, w)


def _emit_llc(report: dict, out: Path) -> None:
    _write(out / "llc_distances.csv", _csv_text(
        ["policy", "metric", "distance"],
        [(d["policy"], d["metric"], d["distance"]) for d in report["distances"]]))
    _write(out / "llc_ratios.csv", _csv_text(
        ["pair", "metric", "workload_id", "acc_mu", "acc_sigma", "acc_lo", "acc_hi", "oneipc", "verdict",
         "approx_unreliable"],
        [(r["pair"], r["metric"], r["workload_id"], r["acc_mu"], r["acc_sigma"], r["acc_lo"], r["acc_hi"],
          r["oneipc"], r["verdict"], int(r["approx_unreliable"])) for r in report["ratios"]]))
    _write(out / "llc_geomeans.csv", _csv_text(
        ["pair", "metric", "acc_mu", "acc_sigma", "oneipc", "n_workloads"],
        [(g["pair"], g["metric"], g["acc_mu"], g["acc_sigma"], g["oneipc"], g["n_workloads"])
         for g in report["geomeans"]]))
    write_report_json(report, out / "llc_report.json")
    pairs = sorted({r["pair"] for r in report["ratios"]})
    for pair in pairs:
        for metric in LLC_METRICS:
            rs = [r for r in report["ratios"] if r["pair"] == pair and r["metric"] == metric]
            if not rs:
                continue
            text = svg.ratio_chart(
                f"{pair} improvement ratio ({metric.upper()})", [r["workload_id"] for r in rs],
                {"ACC": [r["acc_mu"] for r in rs], "1-IPC": [r["oneipc"] for r in rs]},
                ranges=[(r["acc_lo"], r["acc_hi"]) for r in rs])
            _write(out / f"llc_ratio_{pair.replace('/', '_vs_')}_{metric}.svg", text)
    gs = report["geomeans"]
    if gs:
        text = svg.ratio_chart(
            "Geometric means of improvement ratios", [f"{g['pair']} {g['metric']}" for g in gs],
            {"ACC": [g["acc_mu"] for g in gs], "1-IPC": [g["oneipc"] for g in gs]},
            ranges=[(g["acc_mu"] - g["acc_sigma"], g["acc_mu"] + g["acc_sigma"]) for g in gs])
        _write(out / "llc_geomeans.svg", text)


# --- scaling ----------------------------------------------------------------------------------

def report_scaling(rows, out_dir=None) -> dict:
    cyc = defaultdict(list)
    for r in rows:
        if int(r["core"]) == 0:
            cyc[(r["workload_id"], r["model"], int(r["n_cores"]))].append(int(r["cycles"]))
    kernels = sorted({k[0] for k in cyc})
    models = sorted({k[1] for k in cyc})
    counts = sorted({k[2] for k in cyc})
    speedups = []
    for w in kernels:
        for m in models:
            single = cyc.get((w, m, 1))
            if not single:
                raise ReportError(f"scaling: missing single-core run for {w!r} on {m!r}")
            base = sum(single) / len(single)
            for n in counts:
                c = cyc.get((w, m, n))
                if c:
                    speedups.append({"workload_id": w, "model": m, "n_cores": n,
                                     "cycles": sum(c) / len(c), "speedup": base / (sum(c) / len(c))})
    lookup = {(s["workload_id"], s["model"], s["n_cores"]): s["speedup"] for s in speedups}
    diffs = []
    if ACC in models and ONEIPC in models:
        for w in kernels:
            for n in counts:
                a, b = lookup.get((w, ACC, n)), lookup.get((w, ONEIPC, n))
                if a is None or b is None:
                    continue
                diffs.append({"workload_id": w, "n_cores": n, "acc": a, "oneipc": b,
                              "abs_diff": abs(a - b), "rel_diff": abs(a - b) / a})
    report = {"study": "scaling", "version": REPORT_VERSION, "speedups": speedups, "diffs": diffs}
    if out_dir is not None:
        out = Path(out_dir)
        _write(out / "scaling_speedups.csv", _csv_text(
            ["workload_id", "model", "n_cores", "cycles", "speedup"],
            [(s["workload_id"], s["model"], s["n_cores"], s["cycles"], s["speedup"]) for s in speedups]))
        _write(out / "scaling_diffs.csv", _csv_text(
            ["workload_id", "n_cores", "acc", "oneipc", "abs_diff", "rel_diff"],
            [(d["workload_id"], d["n_cores"], d["acc"], d["oneipc"], d["abs_diff"], d["rel_diff"])
             for d in diffs]))
        write_report_json(report, out / "scaling_report.json")
        for w in kernels:
            series = {m: [lookup.get((w, m, n)) for n in counts] for m in models}
            _write(out / f"scaling_{w}.svg", svg.line_chart(
                f"Speedup of {w}", counts, series, x_label="cores", y_label="speedup"))
    return report


# --- branch predictors --------------------------------------------------------------------------

def report_brpred(rows, out_dir=None) -> dict:
    agg = defaultdict(lambda: [0, 0])
    for r in rows:
        a = agg[(r["workload_id"], r["predictor"], r["model"])]
        a[0] += int(r["mispredicts"])
        a[1] += int(r["branches"])
    cells = []
    keys = sorted({(w, p) for w, p, _ in agg})
    for w, p in keys:
        rates = {}
        for m in (ACC, ONEIPC):
            if (w, p, m) in agg:
                mis, br = agg[(w, p, m)]
                rates[m] = mis / br if br else None
        a, b = rates.get(ACC), rates.get(ONEIPC)
        cells.append({"workload_id": w, "predictor": p, "acc": a, "oneipc": b,
                      "delta": abs(a - b) if a is not None and b is not None else None})
    report = {"study": "brpred", "version": REPORT_VERSION, "cells": cells}
    if out_dir is not None:
        out = Path(out_dir)
        _write(out / "brpred_rates.csv", _csv_text(
            ["workload_id", "predictor", "acc", "oneipc", "delta"],
            [(c["workload_id"], c["predictor"], c["acc"], c["oneipc"], c["delta"]) for c in cells]))
        write_report_json(report, out / "brpred_report.json")
        labels = [f"{c['workload_id']} {c['predictor']}" for c in cells]
        _write(out / "brpred_rates.svg", svg.ratio_chart(
            "Conditional-branch misprediction rate", labels,
            {"ACC": [c["acc"] for c in cells], "1-IPC": [c["oneipc"] for c in cells]},
            ref=0.0, y_label="misprediction rate"))
    return report


# --- JSON ------------------------------------------------------------------------------------------

def write_report_json(report: dict, path) -> Path:
    return _write(Path(path), json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n")


def read_report(path) -> dict:
    report = json.loads(Path(path).read_text())
    if report.get("study") not in ("llc", "scaling", "brpred") or "version" not in report:
        raise ReportError(f"{path}: not a simulator report")
    return report


REPORTS = {"llc": report_llc, "scaling": report_scaling, "brpred": report_brpred}


def report_from_csv(csv_path, study: str, out_dir) -> dict:
    if study not in REPORTS:
        raise ReportError(f"unknown study {study!r}")
    try:
        rows = read_csv(csv_path)
    except ValueError as exc:
        raise ReportError(str(exc)) from None
    rows = [r for r in rows if r.get("study", study) in (study, "")]
    if not rows:
        raise ReportError(f"{csv_path}: no rows for study {study!r}")
    return REPORTS[study](rows, out_dir)
