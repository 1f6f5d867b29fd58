"""Run the full LLC study (criterion 9 grid) into the test cache, then report it."""
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from _study_cache import cached_rows  # noqa: E402
from simfidelity.harness.experiment import ExperimentSpec  # noqa: E402
from simfidelity.harness.reports import report_llc  # noqa: E402

spec = ExperimentSpec.load(Path(__file__).parent / "specs" / "llc_full.toml")
t0 = time.time()


def progress(key, done, total):
    if done % 20 == 0 or done == total:
        print(f"{done}/{total} {time.time() - t0:.0f}s", flush=True)


rows = cached_rows(spec, progress)
rep = report_llc(rows, spec.resolved_output_dir())
v = rep["verdicts"]["drrip/lru"]["mpki"]
print(f"DRRIP vs LRU MPKI verdict agreement: {v['agree']}/{v['total']} ({time.time() - t0:.0f}s)")
