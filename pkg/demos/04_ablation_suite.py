"""
Running an ablation suite
=========================

All configurations share one fold split, so their differences are paired.
Results land in OUT/reports/*.json plus three merged CSVs; ``state.json``
lets an interrupted run resume without recomputing finished configurations.

Run:  python demos/04_ablation_suite.py [DATA_DIR] [OUT_DIR]   (after demo 01)
"""
import sys
import warnings
from pathlib import Path

from avq.ablation import AblationSuite, builtin_presets, run_suite

data = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_data")
out = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_ablation")

# Four of the nine built-in presets, with 5-fold CV for speed.
presets = builtin_presets(cv_k=5, seed=0)
for c in presets.configs:
    print(f"  {c.name:9s} {c.label}")
suite = presets.subset(["Baseline", "Layers-0", "VF", "AF"])

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    result = run_suite(suite, data / "manifest.csv", out, workers=2)

for name, rep in result.reports.items():
    o = rep.overall
    print(f"{name:9s} PCC {o['pcc']:+.3f}  SCC {o['scc']:+.3f}  RMSE {o['rmse']:.3f}")
print((out / "table2.csv").read_text())

# A second call with resume=True finds every configuration already done.
again = run_suite(suite, data / "manifest.csv", out, resume=True)
print("reused:", again.skipped)
