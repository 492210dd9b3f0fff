"""Weighted energies, null fluxes, multiplier currents and discrete identity checks.

Per-mode normalisation throughout: the sphere measure is 1, the angular
gradient obeys |ang grad phi|^2 = l(l+1) phi^2 / r^2 and the overall 4 pi is
dropped from every functional. Slices are integrated with the trapezoid rule,
spacetime regions with the midpoint rule on null cells.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import DomainError, OutOfRange
from .grid import CellPartition, psi_at, slice as leaf
from .solver import F_terms, Jet, NL_terms, _Center, _JetBackground, _bg_slice, _top, background_jet, cell_states
from .background import eval_background

NORMALIZATION = "per-mode: sphere measure 1, |ang grad phi|^2 = l(l+1) phi^2/r^2, overall 4 pi dropped"
_SERIES_SWITCH = 1e-2
_SERIES_TERMS = 14


# multipliers


@dataclass(frozen=True)
class MultiplierSpec:
    """Radial multiplier X = f(r) d_r with zeroth-order correction chi, or X = d_t.

    kind: "T" | "morawetz" | "linear" | "custom". The morawetz profile is
    f = beta - beta (1+r)^-alpha with beta = 2/alpha and chi = f/r; "linear" is
    f = r, chi = 0; "custom" takes polynomial coefficients for f and chi.
    modified=False drops the chi terms from the current.
    """

    kind: str = "morawetz"
    alpha: float = 0.25
    f_coeffs: tuple = ()
    chi_coeffs: tuple = ()
    modified: bool = True

    def __post_init__(self):
        if self.kind not in ("T", "morawetz", "linear", "custom"):
            raise ValueError(f"unknown multiplier '{self.kind}'")
        if self.kind == "morawetz" and not self.alpha > 0:
            raise DomainError("morawetz multiplier needs alpha > 0")

    @classmethod
    def T(cls):
        return cls("T")

    @classmethod
    def morawetz(cls, alpha=0.25, modified=True):
        return cls("morawetz", float(alpha), modified=modified)

    @classmethod
    def linear(cls):
        return cls("linear", modified=False)

    @classmethod
    def custom(cls, f_coeffs, chi_coeffs=()):
        return cls("custom", f_coeffs=tuple(float(c) for c in f_coeffs), chi_coeffs=tuple(float(c) for c in chi_coeffs))

    @property
    def beta(self):
        return 2.0 / self.alpha

    @property
    def is_T(self):
        return self.kind == "T"

    def _poly(self, which, m):
        c = self.f_coeffs if which == "f" else self.chi_coeffs
        p = np.polynomial.Polynomial(c if len(c) else [0.0])
        return p.deriv(m) if m else p

    def f(self, r, m=0):
        """m-th derivative of f (m <= 2)."""
        r = np.asarray(r, float)
        if self.kind == "morawetz":
            a, b = self.alpha, self.beta
            if m == 0:
                return -b * np.expm1(-a * np.log1p(r))
            if m == 1:
                return b * a * (1.0 + r) ** (-a - 1.0)
            return -b * a * (a + 1.0) * (1.0 + r) ** (-a - 2.0)
        if self.kind == "linear":
            return r if m == 0 else (np.ones_like(r) if m == 1 else np.zeros_like(r))
        if self.kind == "custom":
            return self._poly("f", m)(r)
        return np.zeros_like(r)

    def _morawetz_series(self, r, m):
        # chi = f/r = -beta sum_{n>=1} binom(-alpha, n) r^(n-1)
        out = np.zeros_like(r)
        for n in range(1 + m, _SERIES_TERMS + 1):
            c = _binom(-self.alpha, n)
            fall = 1.0
            for j in range(m):
                fall *= n - 1 - j
            out = out - self.beta * c * fall * r ** (n - 1 - m)
        return out

    def chi(self, r, m=0):
        """m-th derivative of chi (m <= 2)."""
        r = np.asarray(r, float)
        if self.kind == "morawetz":
            near = r < _SERIES_SWITCH
            rs = np.where(near, 1.0, r)
            f, f1, f2 = self.f(rs), self.f(rs, 1), self.f(rs, 2)
            if m == 0:
                out = f / rs
            elif m == 1:
                out = (f1 * rs - f) / rs**2
            else:
                out = (f2 * rs**2 - 2 * f1 * rs + 2 * f) / rs**3
            if np.any(near):
                out = np.where(near, self._morawetz_series(r, m), out)
            return out
        if self.kind == "custom":
            return self._poly("chi", m)(r)
        return np.zeros_like(r)

    def box_chi(self, r):
        """chi'' + 2 chi'/r; equals f''/r for the morawetz profile."""
        r = np.asarray(r, float)
        if self.kind == "morawetz":
            with np.errstate(divide="ignore", over="ignore"):
                return np.where(r > 0, self.f(r, 2) / np.where(r > 0, r, 1.0), -np.inf)
        c1, c2 = self.chi(r, 1), self.chi(r, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, c2 + 2 * c1 / np.where(r > 0, r, 1.0), np.where(c1 == 0, 3 * c2, np.inf))

    def as_dict(self):
        return {"kind": self.kind, "alpha": self.alpha, "f_coeffs": list(self.f_coeffs),
                "chi_coeffs": list(self.chi_coeffs), "modified": self.modified}


def _binom(x, n):
    out = 1.0
    for j in range(n):
        out *= (x - j) / (j + 1)
    return out


@dataclass
class MorawetzCoeffs:
    """Bulk coefficients of (phi_t)^2, (phi_r)^2, |ang grad phi|^2 and phi^2."""

    dt2: np.ndarray
    dr2: np.ndarray
    ang2: np.ndarray
    zeroth: np.ndarray


def _f_over_r(spec, r):
    if spec.kind == "morawetz":
        return spec.chi(r)
    rs = np.where(r > 0, r, 1.0)
    return np.where(r > 0, spec.f(rs) / rs, spec.f(np.zeros_like(r), 1))


def multiplier_coefficients(spec, r):
    """Coefficients of the modified deformation density at radius r.

    r = 0 returns the removable limits (zeroth order term +inf for morawetz);
    r < 0 raises DomainError.
    """
    if spec.is_T:
        raise DomainError("d_t is Killing; no deformation coefficients")
    r = np.asarray(r, float)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise DomainError("multiplier coefficients need r >= 0")
    f1 = spec.f(r, 1)
    fr = _f_over_r(spec, r)
    chi = spec.chi(r) if spec.modified else np.zeros_like(r)
    dt2 = fr + 0.5 * f1 - chi
    dr2 = chi - fr + 0.5 * f1
    ang2 = chi - 0.5 * f1
    zeroth = -0.5 * spec.box_chi(r) if spec.modified else np.zeros_like(r)
    return MorawetzCoeffs(dt2, dr2, ang2, zeroth)


def multiplier_bound_C1(spec, r_max=1e6):
    """Smallest C1 with |f| <= C1, |chi| <= C1/(1+r), |chi'| <= C1/(1+r)^2, sampled on [0, r_max]."""
    r = np.concatenate([np.linspace(0.0, 10.0, 4001), np.geomspace(10.0, r_max, 4001)])
    chi = spec.chi(r) if spec.modified else np.zeros_like(r)
    dchi = spec.chi(r, 1) if spec.modified else np.zeros_like(r)
    c = max(np.max(np.abs(spec.f(r))), np.max((1 + r) * np.abs(chi)), np.max((1 + r) ** 2 * np.abs(dchi)))
    if spec.kind == "morawetz":
        c = max(c, spec.beta)
    return float(c)


def deformation_density(point, X):
    """K^X = (f'/2 + f/r) phi_t^2 + (f'/2 - f/r) phi_r^2 - f'/2 |ang grad phi|^2 (plain current)."""
    if X.is_T:
        return np.zeros_like(np.asarray(point.phi_t, float))
    r = np.asarray(point.r, float)
    f1 = X.f(r, 1)
    fr = _f_over_r(X, r)
    ang2 = getattr(point, "ang2", 0.0)
    return (0.5 * f1 + fr) * point.phi_t**2 + (0.5 * f1 - fr) * point.phi_r**2 - 0.5 * f1 * ang2


@dataclass
class Point:
    r: object
    phi: object
    phi_t: object
    phi_r: object
    ang2: object = 0.0


# current components; a2 = |ang grad phi|^2


def current_t(X, r, phi, phi_t, phi_r, a2):
    if X.is_T:
        return 0.5 * (phi_t**2 + phi_r**2 + a2)
    out = X.f(r) * phi_t * phi_r
    if X.modified:
        out = out + X.chi(r) * phi * phi_t
    return out


def current_v(X, r, phi, phi_v, a2):
    if X.is_T:
        return 0.5 * (phi_v**2 + a2)
    out = 0.5 * X.f(r) * (phi_v**2 - a2)
    if X.modified:
        out = out - 0.5 * X.chi(r, 1) * phi**2 + X.chi(r) * phi * phi_v
    return out


def current_u(X, r, phi, phi_u, a2):
    if X.is_T:
        return 0.5 * (phi_u**2 + a2)
    out = 0.5 * X.f(r) * (a2 - phi_u**2)
    if X.modified:
        out = out + 0.5 * X.chi(r, 1) * phi**2 + X.chi(r) * phi * phi_u
    return out


# slice functionals


def _ext_phi_v(sl):
    return (sl.dvpsi - sl.phi_ex) / sl.r_ex


def energy(sl):
    """E(tau): disc gradient energy plus the outgoing null flux on S_tau."""
    r = sl.r_in
    a2r2 = sl.lam * sl.phi_in**2
    inner = trapezoid((sl.phi_t_in**2 + sl.phi_r_in**2) * r * r + a2r2, r) if len(r) > 1 else 0.0
    rv = sl.dvpsi - sl.phi_ex  # r * phi_v
    outer = trapezoid(rv**2 + sl.lam * sl.phi_ex**2, sl.v_ex) if len(sl.v_ex) > 1 else 0.0
    return float(inner + outer)


def interior_energy(sl, zeroth=0.0):
    """int_{r<=R} (|d phi|^2 + zeroth * phi^2) r^2 dr."""
    r = sl.r_in
    dens = (sl.phi_t_in**2 + sl.phi_r_in**2 + zeroth * sl.phi_in**2) * r * r + sl.lam * sl.phi_in**2
    return float(trapezoid(dens, r))


def _check_p(p):
    if not (0.0 <= p <= 2.0):
        raise DomainError(f"p={p} outside [0, 2]")


def p_flux(sl, p):
    """g(p, tau) = int_{S_tau} r^p (d_v psi)^2 dv."""
    _check_p(p)
    if len(sl.v_ex) < 2:
        return 0.0
    return float(trapezoid(sl.r_ex**p * sl.dvpsi**2, sl.v_ex))


def gbar_flux(sl, p):
    """g-bar(p, tau): p_flux with the angular part |ang grad psi|^2 = l(l+1) phi^2 added."""
    _check_p(p)
    if len(sl.v_ex) < 2:
        return 0.0
    return float(trapezoid(sl.r_ex**p * (sl.dvpsi**2 + sl.lam * sl.phi_ex**2), sl.v_ex))


def current_flux(sl, X):
    """Flux of the (modified) current J^X through the hybrid leaf."""
    r = sl.r_in
    a2 = sl.angphi_in**2
    jt = current_t(X, r, sl.phi_in, sl.phi_t_in, sl.phi_r_in, a2)
    inner = trapezoid(jt * r * r, r) if len(r) > 1 else 0.0
    re = sl.r_ex
    jv = current_v(X, re, sl.phi_ex, _ext_phi_v(sl), sl.lam * sl.phi_ex**2 / re**2)
    outer = trapezoid(jv * re * re, sl.v_ex) if len(re) > 1 else 0.0
    return float(inner + outer)


# the truncation surface v = v_cut


@dataclass
class CutLine:
    u: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    psi_u: np.ndarray
    lam: float

    @property
    def phi_u(self):
        return (self.psi_u + self.phi) / self.r


def cut_line(field, tau1, tau2):
    """psi data along j = j_max for u between the leaves tau1 <= tau2."""
    g = field.grid
    n1, n2 = g.diag_index(tau1), g.diag_index(tau2)
    if n2 < n1:
        raise OutOfRange("tau1 must be <= tau2")
    i1, i2 = (n1 - g.K_R) // 2, (n2 - g.K_R) // 2
    if i1 - 1 < g.i_min or i2 + 1 > g.i_max:
        raise OutOfRange("leaves outside the lattice")
    if i2 + 1 + g.j_max > field.n_done:
        raise OutOfRange(f"cut line needs rows up to {i2 + 1 + g.j_max}, field evolved to {field.n_done}")
    i = np.arange(i1, i2 + 1)
    j = g.j_max
    n, k = i + j, j - i
    psi = psi_at(field, n, k)
    du = (psi_at(field, n + 1, k - 1) - psi_at(field, n - 1, k + 1)) / (2 * g.h)
    r = k * g.h
    return CutLine(i * g.h, r, psi / r, du, float(g.ell * (g.ell + 1)))


def I_truncated(field, tau1, tau2, X=None):
    """Flux through v = v_cut between the leaves; energy normalisation for X = d_t (default)."""
    cl = cut_line(field, tau1, tau2)
    if len(cl.u) < 2:
        return 0.0
    a2 = cl.lam * cl.phi**2 / cl.r**2
    if X is None:
        return float(trapezoid((cl.psi_u + cl.phi) ** 2 + cl.lam * cl.phi**2, cl.u))
    ju = current_u(X, cl.r, cl.phi, cl.phi_u, a2)
    return float(trapezoid(ju * cl.r**2, cl.u))


# cell sums


@dataclass
class CellSample:
    """Midpoint values on one row of null cells."""

    t: float
    r: np.ndarray
    phi: np.ndarray
    phi_t: np.ndarray
    phi_r: np.ndarray
    psi_u: np.ndarray
    psi_v: np.ndarray
    ang2: np.ndarray
    weight: np.ndarray
    h: float
    F: object = None
    box: object = None
    F_levels: list = None

    @property
    def dvol(self):
        """r^2 dt dr measure of each (weighted) cell."""
        return self.weight * 2 * self.h * self.h * self.r**2

    @property
    def duv(self):
        return self.weight * self.h * self.h


def _problem_terms(problem, t, r, phi_t, phi_r):
    if problem is None:
        return None, None
    bgs = problem.background
    bg = None
    if bgs.has_phi or bgs.has_l or bgs.has_h:
        bg = eval_background(bgs, np.full(r.shape, t), r, 0)
    F = F_terms(problem, phi_t, phi_r, bg) if problem.has_F else np.zeros_like(r)
    F = np.broadcast_to(F, r.shape).astype(float)
    box = F - NL_terms(problem, phi_t, phi_r, bg)
    return F, np.broadcast_to(box, r.shape).astype(float)


def _F_levels(problem, fields, n, k, t, r, h):
    """F, d_t F, ... at the cell centres from the commuted companions."""
    cen = [_Center.from_corners(*cell_states(f, n + 2, k), r, h) for f in fields]
    top = len(fields) - 1
    bgs = problem.background
    bg = None
    if bgs.has_phi or bgs.has_l or bgs.has_h:
        jb = background_jet(bgs, np.full(r.shape, t), r, top)
        bg = _JetBackground([_bg_slice(jb, j) for j in range(top + 1)])
    jt = Jet([c[1] for c in cen])
    jr = Jet([c[2] for c in cen])
    Fj = F_terms(problem, jt, jr, bg)
    return [np.broadcast_to(_top(Fj, m) if isinstance(Fj, Jet) else (Fj if m == 0 else 0.0), r.shape) for m in range(top + 1)]


def cell_pass(field, part, integrands, problem=None, commuted=None):
    """Sum integrands (name -> fn(CellSample) -> per-cell values) into the partition's bins."""
    g = field.grid
    h = g.h
    lam = g.ell * (g.ell + 1)
    if problem is None:
        problem = field.problem
    acc = {name: np.zeros(part.nbins) for name in integrands}
    fields = [field] + list(commuted or [])
    for row in part.rows():
        n, k = row.n, row.k
        if n + 2 > field.n_done:
            raise OutOfRange(f"cells need rows up to {n + 2}, field evolved to {field.n_done}")
        S, W, E, N = cell_states(field, n + 2, k)
        r = k * h
        t = (n + 1) * h
        phi, phi_t, phi_r = _Center.from_corners(S, W, E, N, r, h)
        du = (N - E + W - S) / (2 * h)
        dv = (N - W + E - S) / (2 * h)
        F, box = _problem_terms(problem, t, r, phi_t, phi_r)
        cs = CellSample(t, r, phi, phi_t, phi_r, du, dv, lam * phi**2 / r**2, row.weight, h, F, box)
        if commuted:
            cs.F_levels = _F_levels(problem, fields, n, k, t, r, h)
        for name, fn in integrands.items():
            np.add.at(acc[name], row.bins, fn(cs))
    return acc


def gradient_density(alpha):
    """|d-bar phi|^2 / (1+r)^(1+alpha), d-bar phi = (d phi, phi/(1+r))."""

    def fn(cs):
        rr = 1.0 + cs.r
        return (cs.phi_t**2 + cs.phi_r**2 + cs.ang2 + (cs.phi / rr) ** 2) * rr ** (-1.0 - alpha) * cs.dvol

    return fn


def F_density(beta, level=0):
    """|F|^2 (1+r)^(beta+1)."""

    def fn(cs):
        F = cs.F if level == 0 and cs.F_levels is None else cs.F_levels[level]
        if F is None:
            return np.zeros_like(cs.r)
        return F**2 * (1.0 + cs.r) ** (beta + 1.0) * cs.dvol

    return fn


def bulk_weighted(field, tau1, tau2, weight_beta, integrand="F_total", alpha=0.25, problem=None, commuted=None, level=0):
    """D^beta[F], the Morawetz bulk or the G[beta, p] accumulator between two leaves.

    integrand: "F_total" (|F|^2 (1+r)^(beta+1)), "gradient_density"
    (|d-bar phi|^2/(1+r)^(1+alpha)) or ("g", p) for int (1+tau)^-beta g(p, tau) dtau.
    """
    if tau2 < tau1:
        raise OutOfRange("tau1 must be <= tau2")
    g = field.grid
    if isinstance(integrand, tuple) and integrand[0] == "g":
        p = float(integrand[1])
        _check_p(p)
        part = CellPartition(g, [tau1, tau2], region="exterior")
        R = part.R

        def fn(cs):
            tau = cs.t - (cs.r - R)
            return (1.0 + tau) ** (-weight_beta) * cs.r**p * cs.psi_v**2 * cs.duv * 2.0

        return float(cell_pass(field, part, {"x": fn}, problem)["x"].sum())
    part = CellPartition(g, [tau1, tau2])
    if integrand == "F_total":
        fn = F_density(weight_beta, level)
    elif integrand == "gradient_density":
        fn = gradient_density(alpha)
    else:
        raise ValueError(f"unknown integrand '{integrand}'")
    return float(cell_pass(field, part, {"x": fn}, problem, commuted if level else None)["x"].sum())


# identity residuals


@dataclass
class IdentityResidual:
    terms: dict
    lhs: float
    rhs: float

    @property
    def residual(self):
        return abs(self.lhs - self.rhs)

    @property
    def scale(self):
        return max(abs(v) for v in self.terms.values()) if self.terms else 0.0

    def as_dict(self):
        return {"terms": dict(self.terms), "lhs": self.lhs, "rhs": self.rhs, "residual": self.residual}


def identity_residual_energy(field, tau1, tau2, X=None, problem=None):
    """Flux(tau1) - Flux(tau2) - Flux(v_cut) against the bulk of box(phi) X(phi) + K^X."""
    X = MultiplierSpec.T() if X is None else X
    if tau2 < tau1:
        raise OutOfRange("tau1 must be <= tau2")
    s1, s2 = leaf(field, tau1), leaf(field, tau2)
    f1, f2 = current_flux(s1, X), current_flux(s2, X)
    I = I_truncated(field, tau1, tau2, X)
    part = CellPartition(field.grid, [tau1, tau2])

    if X.is_T:
        def dens(cs):
            return (cs.box * cs.phi_t if cs.box is not None else 0.0 * cs.r) * cs.dvol
    else:
        def dens(cs):
            c = multiplier_coefficients(X, cs.r)
            chi = X.chi(cs.r) if X.modified else 0.0
            out = c.dt2 * cs.phi_t**2 + c.dr2 * cs.phi_r**2 + c.ang2 * cs.ang2 + c.zeroth * cs.phi**2
            if cs.box is not None:
                out = out + (X.f(cs.r) * cs.phi_r + chi * cs.phi) * cs.box
            return out * cs.dvol

    bulk = float(cell_pass(field, part, {"b": dens}, problem)["b"].sum())
    terms = {"flux_tau1": f1, "flux_tau2": f2, "flux_vcut": I, "bulk": bulk}
    return IdentityResidual(terms, f1 - f2 - I, bulk)


def identity_residual_pweighted(field, tau1, tau2, p, problem=None):
    """r^p-weighted identity on the exterior region r >= R between two leaves.

    S2 + 2 int r^(p+1) box(phi) psi_v + int p r^(p-1) psi_v^2 + int (2-p) r^(p-1) |ang psi|^2 + I_p
      = S1 + int_{r=R} R^p (|ang psi|^2 - psi_v^2) du
    with box(phi) = F - N - L, du dv measure in the bulk.
    """
    _check_p(p)
    if tau2 < tau1:
        raise OutOfRange("tau1 must be <= tau2")
    g = field.grid
    h = g.h
    lam = g.ell * (g.ell + 1)
    s1, s2 = leaf(field, tau1), leaf(field, tau2)
    S1, S2 = p_flux(s1, p), p_flux(s2, p)
    cl = cut_line(field, tau1, tau2)
    Ip = float(trapezoid(cl.r**p * lam * cl.phi**2, cl.u)) if len(cl.u) > 1 else 0.0

    n = np.arange(g.diag_index(tau1), g.diag_index(tau2) + 1, 2)
    K = g.K_R
    R = K * h
    psi_R = psi_at(field, n, np.full(n.shape, K))
    dv_R = (psi_at(field, n + 1, np.full(n.shape, K + 1)) - psi_at(field, n - 1, np.full(n.shape, K - 1))) / (2 * h)
    bnd = float(trapezoid(R**p * (lam * (psi_R / R) ** 2 - dv_R**2), 0.5 * (n - K) * h)) if len(n) > 1 else 0.0

    part = CellPartition(g, [tau1, tau2], region="exterior")

    def q_term(cs):
        if cs.box is None:
            return np.zeros_like(cs.r)
        return 2.0 * cs.r ** (p + 1) * cs.box * cs.psi_v * cs.duv

    def p_term(cs):
        return p * cs.r ** (p - 1) * cs.psi_v**2 * cs.duv

    def a_term(cs):
        return (2.0 - p) * cs.r ** (p - 1) * lam * cs.phi**2 * cs.duv

    acc = cell_pass(field, part, {"q": q_term, "p": p_term, "a": a_term}, problem)
    terms = {
        "S_tau2": S2,
        "source": float(acc["q"].sum()),
        "p_bulk": float(acc["p"].sum()),
        "ang_bulk": float(acc["a"].sum()),
        "I_p": Ip,
        "S_tau1": S1,
        "boundary_R": bnd,
    }
    lhs = S2 + terms["source"] + terms["p_bulk"] + terms["ang_bulk"] + Ip
    return IdentityResidual(terms, lhs, S1 + bnd)


# Hardy-type checks


@dataclass
class CheckEntry:
    name: str
    lhs: float
    bound: float
    tolerance: float

    @property
    def margin(self):
        return self.bound + self.tolerance - self.lhs

    @property
    def passed(self):
        return bool(np.isfinite(self.lhs) and self.lhs <= self.bound + self.tolerance)

    def as_dict(self):
        return {"name": self.name, "lhs": self.lhs, "bound": self.bound, "tolerance": self.tolerance,
                "margin": self.margin, "passed": self.passed}


@dataclass
class CheckReport:
    entries: list = field(default_factory=list)
    truncated: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def failures(self):
        return [e for e in self.entries if not e.passed]

    def add(self, name, lhs, bound, tolerance):
        self.entries.append(CheckEntry(name, float(lhs), float(bound), float(tolerance)))

    def merge(self, other, prefix=""):
        for e in other.entries:
            self.entries.append(CheckEntry(prefix + e.name, e.lhs, e.bound, e.tolerance))
        self.truncated = self.truncated or other.truncated

    def as_dict(self):
        return {"passed": self.passed, "truncated": self.truncated, "entries": [e.as_dict() for e in self.entries],
                "meta": self.meta}


def hardy_checks(sl, Etilde, cut=None, multiplier=None, tol_factor=10.0):
    """Pointwise, Hardy, null-derivative and current-flux bounds on one leaf against E-tilde.

    cut: optional CutLine of v = v_cut for u <= u_tau, added to the pointwise check.
    multiplier: MultiplierSpec for the current-flux bound (default morawetz, alpha = 1/4).
    """
    X = multiplier or MultiplierSpec.morawetz(0.25)
    h = sl.h
    rep = CheckReport(truncated=sl.truncated, meta={"tau": sl.tau, "Etilde": float(Etilde)})

    def tol(lhs):
        return tol_factor * h * h * max(float(Etilde), abs(float(lhs)))

    rphi2 = np.concatenate([sl.r_ex * sl.phi_ex**2, cut.r * cut.phi**2 if cut is not None else []])
    lhs = float(np.max(rphi2)) if len(rphi2) else 0.0
    rep.add("pointwise_rphi2", lhs, Etilde, tol(lhs))

    r = sl.r_in
    inner = trapezoid((sl.phi_in / (1 + r)) ** 2 * r * r, r) if len(r) > 1 else 0.0
    re = sl.r_ex
    outer = trapezoid((sl.phi_ex / (1 + re)) ** 2 * re * re, sl.v_ex) if len(re) > 1 else 0.0
    lhs = float(inner + outer)
    rep.add("hardy_6E", lhs, 6.0 * Etilde, tol(lhs))

    if len(re) > 1:
        a = trapezoid(sl.dvpsi**2, sl.v_ex)
        b = trapezoid((sl.dvpsi - sl.phi_ex) ** 2, sl.v_ex)
        lhs = float(abs(a - b))
    else:
        lhs = 0.0
    rep.add("null_derivative_2E", lhs, 2.0 * Etilde, tol(lhs))

    C1 = multiplier_bound_C1(X)
    lhs = abs(current_flux(sl, X))
    rep.add("current_flux_6C1E", lhs, 6.0 * C1 * Etilde, tol(lhs))

    # E <= g-bar(0) + 2 int_{r<=R} (|d phi|^2 + phi^2), with the boundary-value step
    # R phi(R)^2 <= int_{r<=R} (phi_r^2 + 2 phi^2) r^2 dr for R >= 2
    E = energy(sl)
    rhs = gbar_flux(sl, 0.0) + 2.0 * interior_energy(sl, zeroth=1.0)
    rep.add("energy_vs_gbar0", E, rhs, tol(E))
    if sl.R >= 2.0 and len(r) > 1:
        lhs = sl.R * sl.phi_in[-1] ** 2
        bound = trapezoid((sl.phi_r_in**2 + 2 * sl.phi_in**2) * r * r, r)
        rep.add("boundary_value_R", lhs, bound, tol(lhs))
    return rep


def negative_control_slice(R=4.0, h=0.05, v_len=20.0):
    """Synthetic leaf with phi = 1 + r on the null segment: violates the Hardy bound for tiny E-tilde."""
    from .grid import FoliationSlice

    K = int(round(R / h))
    r_in = np.arange(K + 1) * h
    v = 0.5 * (0.0 + R) + np.arange(int(round(v_len / h)) + 1) * h
    r_ex = R + 2 * (v - v[0])
    phi_ex = 1.0 + r_ex
    dvpsi = np.gradient(r_ex * phi_ex, v)
    z = np.zeros_like(r_in)
    return FoliationSlice(0.0, R, h, 0, r_in, 1.0 + r_in, z, np.ones_like(r_in), v, r_ex, phi_ex, dvpsi,
                          np.zeros_like(v), True, {"synthetic": True})


# series along the foliation


SERIES_COLUMNS = ("tau", "E", "g1", "g1p2a", "gbar0", "morawetz_cum", "D2a_F_cum", "I_trunc")


@dataclass
class EnergySeries:
    taus: np.ndarray
    E: np.ndarray
    g1: np.ndarray
    g1p2a: np.ndarray
    gbar0: np.ndarray
    gbar2a: np.ndarray
    morawetz_cum: np.ndarray
    D2a_F_cum: np.ndarray
    Da_F_cum: np.ndarray
    I_trunc: np.ndarray
    alpha: float = 0.25
    h: float = None
    levels: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    increments: dict = field(default_factory=dict)

    @property
    def Etilde(self):
        return self.E + self.I_trunc

    def increment(self, name):
        """Per-bin increments of a cumulative column (stored ones avoid cancellation)."""
        if name in self.increments:
            return np.asarray(self.increments[name])
        return np.diff(self.select(name))

    def tail(self, name):
        """Remainder total - cumulative(tau), summed from the end; aligned with taus."""
        inc = self.increment(name)
        return np.concatenate([np.cumsum(inc[::-1])[::-1], [0.0]])

    def select(self, name):
        if name == "Etilde":
            return self.Etilde
        if name in ("tau", "taus"):
            return self.taus
        if isinstance(name, str) and hasattr(self, name):
            return np.asarray(getattr(self, name))
        raise KeyError(f"unknown series quantity '{name}'")

    def scaled(self, c):
        c2 = c * c
        keys = ("E", "g1", "g1p2a", "gbar0", "gbar2a", "morawetz_cum", "I_trunc")
        kw = {k: c2 * getattr(self, k) for k in keys}
        # F is quadratic or cubic in phi; only the quadratic-in-phi functionals scale exactly
        inc = {k: v.copy() if k.startswith("D") else c2 * v for k, v in self.increments.items()}
        return EnergySeries(self.taus.copy(), D2a_F_cum=self.D2a_F_cum.copy(), Da_F_cum=self.Da_F_cum.copy(),
                            alpha=self.alpha, h=self.h, meta=dict(self.meta), increments=inc, **kw)

    def write_csv(self, path):
        cols = [self.taus, self.E, self.g1, self.g1p2a, self.gbar0, self.morawetz_cum, self.D2a_F_cum, self.I_trunc]
        with open(path, "w") as fh:
            fh.write(",".join(SERIES_COLUMNS) + "\n")
            for row in zip(*[c.tolist() for c in cols]):
                fh.write(",".join(repr(float(x)) for x in row) + "\n")

    def sidecar(self):
        return {
            "columns": list(SERIES_COLUMNS),
            "alpha": self.alpha,
            "h": self.h,
            "normalization": NORMALIZATION,
            "extra": {
                "gbar2a": self.gbar2a.tolist(),
                "Da_F_cum": self.Da_F_cum.tolist(),
                "increments": {k: np.asarray(v).tolist() for k, v in self.increments.items()},
                "levels": {str(k): {n: v.tolist() for n, v in d.items()} for k, d in self.levels.items()},
            },
            **self.meta,
        }

    def write(self, csv_path, json_path):
        self.write_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)


def read_series_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    if data.dtype.names != SERIES_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {data.dtype.names}")
    z = np.zeros(len(data))
    return EnergySeries(
        np.asarray(data["tau"]), np.asarray(data["E"]), np.asarray(data["g1"]), np.asarray(data["g1p2a"]),
        np.asarray(data["gbar0"]), z.copy(), np.asarray(data["morawetz_cum"]), np.asarray(data["D2a_F_cum"]),
        z.copy(), np.asarray(data["I_trunc"]),
    )


def available_taus(field, stride=1.0, t_max=None):
    """Diagnostic leaf times whose slice and cut-line data exist in the (possibly partial) field."""
    g = field.grid
    taus = g.diagnostic_times(stride, t_max)
    ok = []
    for tau in taus:
        n = int(round(tau / g.h))
        i = (n - g.K_R) // 2
        if i + 1 <= g.i_max and i + 1 + g.j_max <= field.n_done and i - 1 >= g.i_min:
            ok.append(tau)
    return np.array(ok)


def energy_series(field, taus=None, alpha=0.25, stride=1.0, commuted=None, problem=None):
    """All leaf functionals and cumulative bulks on the diagnostic leaves."""
    if taus is None:
        taus = available_taus(field, stride)
    taus = np.asarray(taus, float)
    if len(taus) == 0:
        raise OutOfRange("no diagnostic leaves available")
    slices = [leaf(field, t) for t in taus]
    E = np.array([energy(s) for s in slices])
    g1 = np.array([p_flux(s, 1.0) for s in slices])
    g1p2a = np.array([p_flux(s, 1.0 + 2 * alpha) for s in slices])
    gbar0 = np.array([gbar_flux(s, 0.0) for s in slices])
    gbar2a = np.array([gbar_flux(s, 2 * alpha) for s in slices])

    cl = cut_line(field, 0.0, taus[-1])
    dens = (cl.psi_u + cl.phi) ** 2 + cl.lam * cl.phi**2
    cum = cumulative_trapezoid(dens, cl.u, initial=0.0) if len(cl.u) > 1 else np.zeros(1)
    u_tau = 0.5 * (taus - field.grid.R)
    I_trunc = np.interp(u_tau, cl.u, cum)

    zeros = np.zeros(len(taus))
    mor, D2a, Da = zeros.copy(), zeros.copy(), zeros.copy()
    levels = {}
    increments = {}
    if len(taus) > 1:
        part = CellPartition(field.grid, taus)
        integ = {"mor": gradient_density(alpha), "D2a": F_density(2 * alpha), "Da": F_density(alpha)}
        for lv in range(1, len(commuted or []) + 1):
            integ[f"D2a_{lv}"] = F_density(2 * alpha, lv)
            integ[f"Da_{lv}"] = F_density(alpha, lv)
        acc = cell_pass(field, part, integ, problem, commuted)
        mor = np.concatenate([[0.0], np.cumsum(acc["mor"])])
        D2a = np.concatenate([[0.0], np.cumsum(acc["D2a"])])
        Da = np.concatenate([[0.0], np.cumsum(acc["Da"])])
        increments = {"morawetz_cum": acc["mor"], "D2a_F_cum": acc["D2a"], "Da_F_cum": acc["Da"]}
        for lv in range(1, len(commuted or []) + 1):
            levels[lv] = {
                "D2a_F_cum": np.concatenate([[0.0], np.cumsum(acc[f"D2a_{lv}"])]),
                "Da_F_cum": np.concatenate([[0.0], np.cumsum(acc[f"Da_{lv}"])]),
            }
            increments[f"D2a_F_cum_{lv}"] = acc[f"D2a_{lv}"]
    meta = {"grid": field.grid.as_dict(), "field_sha256": field.content_hash()}
    return EnergySeries(taus, E, g1, g1p2a, gbar0, gbar2a, mor, D2a, Da, I_trunc, alpha, field.grid.h, levels, meta,
                        increments)


def series_hardy_checks(field, series, multiplier=None, tol_factor=10.0):
    """hardy_checks at every leaf of a series, with E-tilde = E + I_0^tau."""
    rep = CheckReport(truncated=True)
    for tau, Et in zip(series.taus, series.Etilde):
        sl = leaf(field, tau)
        cl = cut_line(field, 0.0, tau)
        r = hardy_checks(sl, Et, cl, multiplier, tol_factor)
        rep.merge(r, prefix=f"tau={tau:g}:")
    return rep
