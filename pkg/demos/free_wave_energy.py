"""
Free wave: energy on the hybrid leaves
======================================

A compactly supported bump is evolved with no nonlinearity. The leaf energy
E(tau) stays put while the pulse is inside the disc r <= R, then drops to
zero once the pulse has crossed the outgoing null segment.
"""

import numpy as np

from nullwave import energetics as en
from nullwave.runs import RunConfig
from nullwave.solver import evolve

cfg = RunConfig.from_preset("freewave").with_value("grid.T", 20.0)
problem = cfg.problem()
field = evolve(problem, cfg.grid())
field.problem = problem
print("status:", field.status, " R =", cfg.radius())

s = en.energy_series(field, stride=1.0)
for tau, E, mor in zip(s.taus[::2], s.E[::2], s.morawetz_cum[::2]):
    print(f"tau = {tau:5.1f}   E = {E:.4e}   Morawetz bulk so far = {mor:.4e}")

# the energy identity with X = T between two leaves
r = en.identity_residual_energy(field, 2.0, 8.0, en.MultiplierSpec.T())
print("T-identity residual on [2, 8]:", r.residual, "terms:", r.terms)
