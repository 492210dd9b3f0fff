"""
Config file, run directory and report
=====================================

Writes a small config, runs it twice with different epsilon through the
sweep driver, and builds the cross-run report.
"""

import tempfile
from pathlib import Path

from nullwave.runs import RunConfig, report, sweep

text = """
run.preset = nullform
grid.T = 30
grid.h = 0.05
diagnostics.fit_window = 10, 25
"""
cfg = RunConfig.parse(text)
print(cfg.serialize())

out = Path(tempfile.mkdtemp(prefix="nullwave-demo-"))
rep = sweep(cfg, "problem.epsilon", [1e-3, 2e-3], out, workers=2)
for x, r in zip(rep.values, rep.runs):
    print("epsilon =", x, "->", r["data"]["status"], r["manifest"])
print("comparisons:", rep.comparisons)

path, failures = report([r["manifest"] for r in rep.runs], out / "report")
print("report written to", path)
print("acceptance failures:", failures or "none")
