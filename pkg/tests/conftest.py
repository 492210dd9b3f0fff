import numpy as np
import pytest

from nullwave import profiles, solver
from nullwave.background import BackgroundSpec
from nullwave.coeffs import CoeffTensor
from nullwave.grid import build_grid

GAUSS = profiles.GaussOdd(1.0, 1.0, 0.0)


def manufactured_problem(a=GAUSS):
    """Free wave with exact solution psi = a(u) - a(v)."""
    data = solver.InitialData(profiles.CharData(a, 0), profiles.CharData(a, 1), None)
    return solver.ProblemSpec(data=data, epsilon=1.0)


def exact_psi(a, u, v):
    return a(u) - a(v)


def bump_problem(eps=1.0, A=None, B=None, background=None, ell=0, phi1=False):
    bump = profiles.Bump(2.0, 1.0, ell=ell)
    zero = profiles.RadialProfile()
    data = solver.InitialData(zero, bump, 2.0) if phi1 else solver.InitialData(bump, zero, 2.0)
    return solver.ProblemSpec(A=A or CoeffTensor.zero(), B=B or CoeffTensor.zero(),
                              background=background or BackgroundSpec(), data=data, epsilon=eps, ell=ell)


def nullform_problem(eps=1e-3, amp=0.1):
    bg = BackgroundSpec("free_wave", {"profile": "gauss", "amp": amp, "width": 1.0, "center": 0.0})
    return bump_problem(eps, CoeffTensor.q0(), CoeffTensor.q0(), bg)


def evolve(problem, T, h, R=4.0, **kw):
    g = build_grid(T, R, h, ell=problem.ell, R0=problem.data.R0, **kw)
    f = solver.evolve(problem, g)
    f.problem = problem
    return f


@pytest.fixture(scope="session")
def free_field():
    return evolve(bump_problem(1.0), 20.0, 0.05)


@pytest.fixture(scope="session")
def null_field():
    return evolve(nullform_problem(), 20.0, 0.05)


@pytest.fixture(scope="session")
def zero_field():
    return evolve(bump_problem(0.0), 10.0, 0.1)


@pytest.fixture(scope="session")
def manufactured_fields():
    p = manufactured_problem()
    out = {}
    for h in (0.04, 0.02):
        out[h] = evolve(p, 10.0, h, R=2.0)
    return out


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
