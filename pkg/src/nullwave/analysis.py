"""Decay-rate fits, dyadic pigeonhole extraction and checks of two calculus lemmas.

Everything here is post-processing of frozen series and fields.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import cumulative_trapezoid

from .energetics import CheckReport
from .errors import HypothesisFails, InsufficientData, WindowError
from .solver import _Center, cell_states

FLOOR = 1e-300


@dataclass
class DecayFit:
    exponent: float
    amplitude: float
    window: tuple
    r_squared: float
    n_points: int
    floored: bool = False
    quantity: str = None

    def as_dict(self):
        return {"quantity": self.quantity, "window": list(self.window), "exponent": self.exponent,
                "amplitude": self.amplitude, "r2": self.r_squared, "n_points": self.n_points,
                "floored": self.floored}


def _series_values(series, quantity):
    """(taus, values) for a selector: column name, 'X_tail' / 'X_inc' of a cumulative column, or callable."""
    if isinstance(series, tuple):
        return np.asarray(series[0], float), np.asarray(series[1], float)
    taus = np.asarray(series.taus, float)
    if callable(quantity):
        return taus, np.asarray(quantity(series), float)
    if quantity.endswith("_tail"):
        return taus, series.tail(quantity[: -len("_tail")])
    if quantity.endswith("_inc"):
        inc = series.increment(quantity[: -len("_inc")])
        return taus[:-1], inc
    return taus, np.asarray(series.select(quantity), float)


def default_window(taus):
    return (10.0, 0.9 * float(np.max(taus)))


def fit_decay(series, quantity="E", window=None):
    """Least-squares slope of log(value) against log(1 + tau) over the window.

    Values at or below the 1e-300 floor are excluded and the fit is flagged
    as floored.
    """
    taus, vals = _series_values(series, quantity)
    if window is None:
        window = default_window(taus)
    lo, hi = window
    inwin = (taus >= lo) & (taus <= hi) & np.isfinite(vals)
    usable = inwin & (vals > FLOOR)
    floored = bool(np.any(inwin & ~(vals > FLOOR)))
    n = int(np.sum(usable))
    if n < 3:
        raise InsufficientData(f"{n} usable points for '{quantity}' in window [{lo}, {hi}]")
    x = np.log1p(taus[usable])
    y = np.log(vals[usable])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    name = quantity if isinstance(quantity, str) else getattr(quantity, "__name__", "custom")
    return DecayFit(float(slope), float(np.exp(icpt)), (float(lo), float(hi)), r2, n, floored, name)


# dyadic pigeonhole


@dataclass
class DyadicBlock:
    n: int
    block: tuple
    tau_n: float
    value_n: float
    threshold: float
    block_integral: float
    passed: bool

    def as_dict(self):
        return dict(self.__dict__, block=list(self.block))


def _trap_weights(x):
    w = np.zeros_like(x)
    if len(x) > 1:
        d = np.diff(x)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
    return w


def dyadic_extract(series, quantity="gbar2a", gamma=2.0, budget=None, n_range=None):
    """Pick tau_n in [gamma^n, gamma^(n+1)] minimising (1 + tau) * value.

    Certificate per block: (1 + tau_n) value_n <= budget / L_n with
    L_n = sum_i w_i / (1 + tau_i), the trapezoid weights w_i of the block
    (L_n is a discrete ln((1 + gamma^(n+1)) / (1 + gamma^n))). Whenever the
    block's trapezoid integral of the value is <= budget the certificate holds.
    budget=None uses the trapezoid integral of the value over the whole series.
    """
    if not gamma > 1:
        raise WindowError("gamma must be > 1")
    taus, vals = _series_values(series, quantity)
    if budget is None:
        budget = float(np.sum(_trap_weights(taus) * vals))
    t0, t1 = float(taus[0]), float(taus[-1])
    eps = 1e-9 * max(1.0, t1)
    if n_range is None:
        n_lo = int(np.ceil(np.log(max(t0, 1.0)) / np.log(gamma) - 1e-12))
        n_hi = int(np.floor(np.log(t1) / np.log(gamma) + 1e-12)) - 1 if t1 > 1 else n_lo - 1
        n_range = range(n_lo, n_hi + 1)
    out = []
    for n in n_range:
        a, b = gamma**n, gamma ** (n + 1)
        if a < t0 - eps or b > t1 + eps:
            raise WindowError(f"series [{t0}, {t1}] does not cover block [{a}, {b}]")
        m = (taus >= a - eps) & (taus <= b + eps)
        if np.sum(m) < 2:
            raise WindowError(f"block [{a}, {b}] has fewer than 2 samples")
        ts, vs = taus[m], vals[m]
        w = _trap_weights(ts)
        L = float(np.sum(w / (1.0 + ts)))
        score = (1.0 + ts) * vs
        i = int(np.argmin(score))
        thr = budget / L
        out.append(DyadicBlock(n, (a, b), float(ts[i]), float(vs[i]), thr / (1.0 + ts[i]),
                               float(np.sum(w * vs)), bool(score[i] <= thr)))
    if not out:
        raise WindowError(f"series [{t0}, {t1}] covers no full block for gamma={gamma}")
    return out


# calculus lemmas


def _pow_int(m, a, b):
    """int_a^b s^m ds, elementwise over segments."""
    if m == -1:
        return np.log(b / a)
    return (b ** (m + 1) - a ** (m + 1)) / (m + 1)


def weighted_time_identity_check(f_samples, beta, tau1, tau2, n_nodes=64):
    """|int s^b f - (b int t^(b-1) int_t^tau2 f ds dt + tau1^b int f)| on [tau1, tau2].

    f_samples is a callable (Gauss-Legendre, exact for polynomials of degree
    < 2 n_nodes - 1 when beta is a nonnegative integer) or a pair (s, f) treated
    as its piecewise-linear interpolant and integrated exactly.
    """
    if beta == 0:
        raise ValueError("beta must be nonzero")
    if tau2 < tau1:
        raise WindowError("tau1 must be <= tau2")
    if callable(f_samples):
        x, w = leggauss(n_nodes)
        half = 0.5 * (tau2 - tau1)
        s = tau1 + half * (x + 1)
        ws = half * w
        fs = np.asarray(f_samples(s), float)
        lhs = float(np.sum(ws * s**beta * fs))
        total = float(np.sum(ws * fs))
        inner = np.empty_like(s)
        for i, t in enumerate(s):
            hh = 0.5 * (tau2 - t)
            q = t + hh * (x + 1)
            inner[i] = np.sum(hh * w * np.asarray(f_samples(q), float))
        rhs = beta * float(np.sum(ws * s ** (beta - 1) * inner)) + tau1**beta * total
        return abs(lhs - rhs)
    s, f = (np.asarray(a, float) for a in f_samples)
    m = (s >= tau1) & (s <= tau2)
    if s[m][0] > tau1 or s[m][-1] < tau2:
        raise WindowError("samples must include tau1 and tau2")
    s, f = s[m], f[m]
    a, b = s[:-1], s[1:]
    c1 = (f[1:] - f[:-1]) / (b - a)
    c0 = f[:-1] - c1 * a
    lhs = float(np.sum(c0 * _pow_int(beta, a, b) + c1 * _pow_int(beta + 1, a, b)))
    seg = c0 * (b - a) + 0.5 * c1 * (b * b - a * a)
    G_right = np.concatenate([np.cumsum(seg[::-1])[::-1][1:], [0.0]])  # G at the right end of each segment
    # on a segment G(t) = C - c0 t - c1 t^2 / 2 with G(b) = G_right
    C = G_right + c0 * b + 0.5 * c1 * b * b
    outer = np.sum(C * _pow_int(beta - 1, a, b) - c0 * _pow_int(beta, a, b) - 0.5 * c1 * _pow_int(beta + 1, a, b))
    rhs = beta * float(outer) + tau1**beta * float(np.sum(seg))
    return abs(lhs - rhs)


def gronwall_check(A_samples, E_samples, C, beta, tau1=None, rtol=1e-9):
    """Check A <= E + C int_{tau1}^tau (1+s)^(-1-beta) A and, where it holds, A <= exp(C/beta (1+tau1)^-beta) E.

    Samples are (tau, value) pairs on common nodes; the integral is a
    cumulative trapezoid. A failing hypothesis is reported (HypothesisFails
    entry), not raised.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    tA, A = (np.asarray(a, float) for a in A_samples)
    tE, E = (np.asarray(a, float) for a in E_samples)
    if tA.shape != tE.shape or not np.allclose(tA, tE):
        raise ValueError("A and E must share sample nodes")
    if np.any(np.diff(E) < -rtol * np.maximum(np.abs(E[1:]), 1e-300)):
        raise ValueError("E must be nondecreasing")
    tau1 = float(tA[0]) if tau1 is None else float(tau1)
    m = tA >= tau1
    t, A, E = tA[m], A[m], E[m]
    integ = cumulative_trapezoid((1 + t) ** (-1 - beta) * A, t, initial=0.0)
    hyp_rhs = E + C * integ
    factor = float(np.exp(C / beta * (1 + tau1) ** (-beta)))
    rep = CheckReport(truncated=False, meta={"C": C, "beta": beta, "tau1": tau1, "factor": factor})
    hyp_ok = A <= hyp_rhs + rtol * np.maximum(np.abs(hyp_rhs), 1e-300)
    if not np.all(hyp_ok):
        bad = int(np.argmin(hyp_ok))
        rep.meta["hypothesis_fails"] = str(HypothesisFails(f"hypothesis fails at tau={t[bad]}"))
    for i in range(len(t)):
        if hyp_ok[i]:
            bound = factor * E[i]
            rep.add(f"tau={t[i]:g}", A[i], bound, rtol * max(abs(bound), 1e-300))
    rep.meta["hypothesis_holds"] = bool(np.all(hyp_ok))
    return rep


# pointwise constants


@dataclass
class PointwiseReport:
    C_phi: float
    loc_phi: tuple
    C_dphi: float
    loc_dphi: tuple
    derivatives: list = field(default_factory=list)

    def as_dict(self):
        return {"C_phi": self.C_phi, "loc_phi": list(self.loc_phi), "C_dphi": self.C_dphi,
                "loc_dphi": list(self.loc_dphi), "derivatives": list(self.derivatives)}


def pointwise_decay_scan(field, alpha, commuted=None, t_max=None, R=None):
    """sup |phi| (1+r) and sup S (1+r)^(1/2) (1+|t-r+R|)^(1/2+alpha/4) over cell centres with t <= t_max.

    S sums |phi|, |phi_t|, |phi_r| and, when the commuted companion d_t phi is
    given, |phi_tt| and |phi_tr|; the included derivatives are listed in the report.
    """
    g = field.grid
    h = g.h
    R = g.R if R is None else R
    t_max = g.T if t_max is None else t_max
    comm = list(commuted or [])
    derivs = ["phi", "phi_t", "phi_r"]
    if comm:
        derivs += ["phi_tt", "phi_tr"]
    best = [0.0, (0.0, 0.0), 0.0, (0.0, 0.0)]
    n_top = min(field.n_done - 2, int(np.floor(t_max / h + 1e-9)) - 1)
    for n in range(0, n_top + 1):
        lo = max(g.k_lo(n), n - 2 * g.i_max + 2, 2 - n % 2)
        hi = min(g.k_hi(n), 2 * g.j_max - n - 2, n - 2 * g.i_min)
        if lo > hi:
            continue
        k = np.arange(lo, hi + 1, 2)
        r = k * h
        t = (n + 1) * h
        phi, pt, pr = _Center.from_corners(*cell_states(field, n + 2, k), r, h)
        a = np.abs(phi) * (1 + r)
        s = np.abs(phi) + np.abs(pt) + np.abs(pr)
        for c in comm[:1]:
            _, ptt, ptr = _Center.from_corners(*cell_states(c, n + 2, k), r, h)
            s = s + np.abs(ptt) + np.abs(ptr)
        b = s * np.sqrt(1 + r) * (1 + np.abs(t - r + R)) ** (0.5 + alpha / 4)
        i, j = int(np.argmax(a)), int(np.argmax(b))
        if a[i] > best[0]:
            best[0], best[1] = float(a[i]), (t, float(r[i]))
        if b[j] > best[2]:
            best[2], best[3] = float(b[j]), (t, float(r[j]))
    return PointwiseReport(best[0], best[1], best[2], best[3], derivs)


def analysis_report(fit=None, certificates=None, constants=None):
    """JSON-ready summary: quantity, window, exponent, r2, certificates, empirical constants."""
    out = {}
    if fit is not None:
        out.update({"quantity": fit.quantity, "window": list(fit.window), "exponent": fit.exponent,
                    "r2": fit.r_squared, "floored": fit.floored})
    out["certificate"] = [c.as_dict() for c in (certificates or [])]
    out["empirical_constants"] = constants.as_dict() if constants is not None else {}
    return out
