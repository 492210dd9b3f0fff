"""
Null form versus the phi_t^2 nonlinearity
=========================================

Same data, two nonlinearities. With A = e00 (box phi = phi_t^2) the solution
blows up at a finite time that stays put under refinement; with the null
form Q0 the run reaches the final time.
"""

from nullwave.runs import RunConfig
from nullwave.solver import detect_blowup_time, evolve

cfg = RunConfig.from_preset("john_blowup").with_value("grid.T", 40.0)

study = detect_blowup_time(cfg.problem(), [0.08, 0.04, 0.02], T=40.0, R=cfg.radius())
for h, ts, st in zip(study.hs, study.t_stars, study.statuses):
    print(f"A = e00, h = {h:.2f}: {st}, t* = {ts}")
print("verdict:", study.verdict, " spread between the two finest grids:", round(study.spread, 4))

q0 = cfg.with_value("problem.A", "q0").with_value("grid.h", 0.04)
f = evolve(q0.problem(), q0.grid())
print("A = q0, h = 0.04:", f.status, "up to t =", q0["grid.T"])
