"""Given background functions Phi, L^mu, h^{mu nu} in spherical symmetry.

Every family supplies analytic derivatives, including time derivatives up to
order two (the commutator Z reduces to d_t in spherical symmetry). The
custom table family is the exception: it interpolates a CSV bilinearly and
uses finite differences of the interpolant for time derivatives.
"""

from dataclasses import dataclass, field

import numpy as np

from . import profiles
from .errors import ConfigError, DomainError

FAMILIES = ("none", "static_profile", "free_wave", "custom_table")
L_FAMILIES = ("none", "lcond1", "lcond2")
H_FAMILIES = ("none", "h00")
RATIO_TOL = 1e-9


@dataclass(frozen=True)
class WeakWaveParams:
    delta: float = 0.1
    alpha: float = 0.25
    t0: float = 1.0
    R1: float = 1.0
    C0: float = 1.0

    def __post_init__(self):
        for name in ("delta", "alpha", "t0", "R1", "C0"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ConfigError(f"{name} must be positive", key=name)
        if self.alpha > 0.25:
            raise ConfigError("alpha must be <= 1/4", key="alpha")
        if self.R1 > self.t0:
            raise ConfigError("R1 must be <= t0", key="R1")

    def constants_valid(self):
        """(1+t0)^alpha * delta * alpha >= C0."""
        return (1.0 + self.t0) ** self.alpha * self.delta * self.alpha >= self.C0


def foliation_radius(params, R0):
    if R0 <= 0:
        raise ConfigError("R0 must be positive", key="R0")
    return params.t0 + R0


@dataclass(frozen=True)
class BackgroundSpec:
    family: str = "none"
    params: dict = field(default_factory=dict)
    weak_wave: WeakWaveParams = field(default_factory=WeakWaveParams)
    l_family: str = "none"
    l_params: dict = field(default_factory=dict)
    l_condition: str = "lcond1"
    h_family: str = "none"
    h_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown background family '{self.family}'", key="family")
        if self.l_family not in L_FAMILIES:
            raise ConfigError(f"unknown L family '{self.l_family}'", key="l_family")
        if self.h_family not in H_FAMILIES:
            raise ConfigError(f"unknown h family '{self.h_family}'", key="h_family")
        if self.l_condition not in ("lcond1", "lcond2"):
            raise ConfigError(f"unknown L condition '{self.l_condition}'", key="l_condition")
        if self.family == "free_wave":
            prof = _null_profile(self.params)
            object.__setattr__(self, "_a", prof)
        if self.family == "custom_table":
            object.__setattr__(self, "_table", _load_table(self.params.get("path")))

    @property
    def has_phi(self):
        return self.family != "none"

    @property
    def has_l(self):
        return self.l_family != "none"

    @property
    def has_h(self):
        return self.h_family != "none"

    def null_profile(self):
        return getattr(self, "_a", None)

    def as_dict(self):
        return {
            "family": self.family,
            "params": dict(self.params),
            "weak_wave": self.weak_wave.__dict__.copy(),
            "l_family": self.l_family,
            "l_params": dict(self.l_params),
            "l_condition": self.l_condition,
            "h_family": self.h_family,
            "h_params": dict(self.h_params),
        }


def _null_profile(params):
    kw = {k: float(v) for k, v in params.items() if k in ("amp", "width", "center")}
    kind = params.get("profile", "gauss")
    if kind == "compact":
        kw["power"] = int(params.get("power", 4))
    return profiles.make_null_profile(kind, **kw)


class _Table:
    def __init__(self, path):
        from scipy.interpolate import RegularGridInterpolator

        need = ["t", "r", "phi", "dphi_dt", "dphi_dr"]
        try:
            data = np.genfromtxt(path, delimiter=",", names=True)
        except OSError as exc:
            raise ConfigError(f"cannot read background table: {exc}", key="path") from exc
        if list(data.dtype.names or ())[:5] != need:
            raise ConfigError("table header must be t,r,phi,dphi_dt,dphi_dr", key="path")
        data = np.atleast_1d(data)
        ts = np.unique(data["t"])
        rs = np.unique(data["r"])
        if len(ts) * len(rs) != len(data) or len(ts) < 2 or len(rs) < 2:
            raise ConfigError("table must be a full rectangular (t, r) grid", key="path")
        data = data[np.lexsort((data["r"], data["t"]))]
        self.t_range = (ts[0], ts[-1])
        self.r_range = (rs[0], rs[-1])
        self.dt = float(np.min(np.diff(ts)))
        self.interp = {}
        for col in need[2:]:
            vals = np.asarray(data[col], float).reshape(len(ts), len(rs))
            self.interp[col] = RegularGridInterpolator((ts, rs), vals, bounds_error=False, fill_value=None)

    def __call__(self, col, t, r):
        t = np.clip(t, *self.t_range)
        r = np.clip(r, *self.r_range)
        pts = np.stack(np.broadcast_arrays(t, r), axis=-1)
        return self.interp[col](pts)


def _load_table(path):
    if not path:
        raise ConfigError("custom_table needs a path", key="path")
    return _Table(path)


@dataclass
class BackgroundSample:
    phi: np.ndarray
    phi_t: np.ndarray
    phi_r: np.ndarray
    L0: np.ndarray
    Lr: np.ndarray
    h00: np.ndarray
    h0r: np.ndarray
    hrr: np.ndarray

    @property
    def phi_v(self):
        return self.phi_t + self.phi_r

    @property
    def dphi_abs(self):
        return np.hypot(self.phi_t, self.phi_r)


def _phi_parts(spec, t, r, k):
    fam = spec.family
    z = np.zeros(np.broadcast(t, r).shape)
    if fam == "none":
        return z, z, z
    if fam == "static_profile":
        if k > 0:
            return z, z, z
        d = float(spec.params.get("amp", spec.weak_wave.delta))
        a = float(spec.params.get("alpha", spec.weak_wave.alpha))
        return z + d * (1 + r) ** (-a), z, z - d * a * (1 + r) ** (-1 - a)
    if fam == "free_wave":
        return profiles.char_phi(spec._a, t, r, k)
    tab = spec._table
    if k == 0:
        return tab("phi", t, r), tab("dphi_dt", t, r), tab("dphi_dr", t, r)
    e = tab.dt
    parts = []
    for col in ("phi", "dphi_dt", "dphi_dr"):
        if k == 1:
            parts.append((tab(col, t + e, r) - tab(col, t - e, r)) / (2 * e))
        else:
            parts.append((tab(col, t + e, r) - 2 * tab(col, t, r) + tab(col, t - e, r)) / e**2)
    return tuple(parts)


def _l_parts(spec, t, r, k):
    z = np.zeros(np.broadcast(t, r).shape)
    fam = spec.l_family
    if fam == "none":
        return z, z
    ww = spec.weak_wave
    a = ww.alpha
    scale = float(spec.l_params.get("scale", 1.0))
    if fam == "lcond1":
        if k > 0:
            return z, z
        return z + scale * ww.delta * a * (1 + r) ** (-1 - 3 * a), z
    s = np.maximum(t - r, 0.0)
    on = (t - r) > 0
    base = scale * ww.C0 * (1 + r) ** (-1 - 3 * a)
    if k == 0:
        tf = (1 + s) ** (-a)
    elif k == 1:
        tf = np.where(on, -a * (1 + s) ** (-a - 1), 0.0)
    else:
        tf = np.where(on, a * (a + 1) * (1 + s) ** (-a - 2), 0.0)
    return z + base * tf, z


def _h_parts(spec, t, r, k):
    z = np.zeros(np.broadcast(t, r).shape)
    if spec.h_family == "none" or k > 0:
        return z, z, z
    ww = spec.weak_wave
    scale = float(spec.h_params.get("scale", 1.0))
    return z + scale * ww.C0 * (1 + r) ** (-1.5 * ww.alpha), z, z


def eval_background(spec, t, r, dt_order=0):
    """d_t^k of (Phi, Phi_t, Phi_r, L^0, L^r, h^00, h^0r, h^rr) at (t, r)."""
    t = np.asarray(t, float)
    r = np.asarray(r, float)
    if np.any(r < 0) or np.any(t < 0):
        raise DomainError("background is evaluated for t >= 0, r >= 0")
    if dt_order not in (0, 1, 2):
        raise DomainError("time derivatives up to order 2 only")
    phi, phi_t, phi_r = _phi_parts(spec, t, r, dt_order)
    l0, lr = _l_parts(spec, t, r, dt_order)
    h00, h0r, hrr = _h_parts(spec, t, r, dt_order)
    return BackgroundSample(phi, phi_t, phi_r, l0, lr, h00, h0r, hrr)


# verifiers


@dataclass
class SampleGrid:
    t: np.ndarray
    r: np.ndarray

    @classmethod
    def regular(cls, t_max, r_max, nt=201, nr=201, extra_t=(), extra_r=()):
        t = np.union1d(np.linspace(0.0, t_max, nt), np.asarray(extra_t, float))
        r = np.union1d(np.linspace(0.0, r_max, nr), np.asarray(extra_r, float))
        return cls(t, r)

    @classmethod
    def covering(cls, params, t_max=None, r_max=None, nt=201, nr=201):
        """Samples every region of the weak-wave definition, including the corner t = t0, r = R1."""
        t_max = t_max if t_max is not None else 10.0 * params.t0 + 20.0
        r_max = r_max if r_max is not None else 10.0 * params.R1 + 20.0
        return cls.regular(t_max, r_max, nt, nr, extra_t=[params.t0], extra_r=[params.R1])

    def mesh(self):
        return np.meshgrid(self.t, self.r, indexing="ij")


@dataclass
class ConditionResult:
    name: str
    ratio: float
    location: tuple
    passed: bool


@dataclass
class WeakWaveReport:
    conditions: list
    corner_points: list
    passed: bool

    def ratio(self, name):
        return next(c.ratio for c in self.conditions if c.name == name)

    def as_dict(self):
        return {
            "passed": self.passed,
            "conditions": [c.__dict__ for c in self.conditions],
            "corner_points": self.corner_points,
        }


def _worst(name, val, bound, mask, tt, rr, tol):
    val = np.where(mask, np.abs(val), 0.0)
    ratio = np.zeros_like(val)
    pos = mask & (bound > 0)
    ratio[pos] = val[pos] / bound[pos]
    ratio[mask & (bound <= 0) & (val > 0)] = np.inf
    if not np.any(mask):
        return ConditionResult(name, 0.0, (), True)
    idx = np.unravel_index(np.argmax(ratio), ratio.shape)
    worst = float(ratio[idx])
    return ConditionResult(name, worst, (float(tt[idx]), float(rr[idx])), worst <= 1.0 + tol)


def verify_weak_wave(spec, grid, tol=RATIO_TOL, orders=(0, 1, 2)):
    """Worst observed/permitted ratio of each weak-wave condition, for d_t^k Phi, k in `orders`.

    At the corner t = t0, r = R1 several conditions apply; there the most
    permissive applicable bound is used and the point is listed.
    """
    p = spec.weak_wave
    tt, rr = grid.mesh()
    early = tt <= p.t0
    late = tt >= p.t0
    outer = rr >= p.R1
    inner = rr <= p.R1
    corner = np.isclose(tt, p.t0) & np.isclose(rr, p.R1)
    b1 = np.full(tt.shape, p.C0)
    b2 = p.C0 * (1 + rr) ** -0.5 * (1 + np.maximum(tt - rr, 0.0)) ** (-0.5 - 4 * p.alpha)
    b3 = p.C0 * (1 + rr) ** (-1 - 3 * p.alpha)
    b4 = p.delta * p.alpha * (1 + rr) ** (-1 - p.alpha)
    results = {}
    for k in orders:
        s = eval_background(spec, tt, rr, k)
        dabs, dv = s.dphi_abs, np.abs(s.phi_v)
        # at the corner the gradient conditions (i), (ii), (iv) share one permissive bound
        bmax = np.maximum(np.maximum(b1, b2), b4)
        c1 = _worst("i", dabs, np.where(corner, bmax, b1), early, tt, rr, tol)
        c2 = _worst("ii", dabs, np.where(corner, bmax, b2), late & outer, tt, rr, tol)
        c3 = _worst("iii", dv, np.where(corner, np.maximum(b3, bmax), b3), late & outer, tt, rr, tol)
        c4 = _worst("iv", dabs, np.where(corner, bmax, b4), late & inner, tt, rr, tol)
        for c in (c1, c2, c3, c4):
            prev = results.get(c.name)
            if prev is None or c.ratio > prev.ratio:
                results[c.name] = c
    conds = [results[n] for n in ("i", "ii", "iii", "iv")]
    corners = [(float(a), float(b)) for a, b in zip(tt[corner], rr[corner])]
    return WeakWaveReport(conds, corners, all(c.passed for c in conds))


def verify_coefficient_conditions(spec, grid, tol=RATIO_TOL, orders=(0, 1, 2)):
    """Worst ratios of |d_t^k L^mu| and |d_t^k h^{mu nu}| against their permitted bounds."""
    p = spec.weak_wave
    tt, rr = grid.mesh()
    early = tt <= p.t0
    late = tt >= p.t0
    if spec.l_condition == "lcond1":
        bl = p.delta * p.alpha * (1 + rr) ** (-1 - 3 * p.alpha)
    else:
        bl = p.C0 * (1 + rr) ** (-1 - 3 * p.alpha) * (1 + np.maximum(tt - rr, 0.0)) ** (-p.alpha)
    bh = p.C0 * (1 + rr) ** (-1.5 * p.alpha)
    b0 = np.full(tt.shape, p.C0)
    results = {}
    for k in orders:
        s = eval_background(spec, tt, rr, k)
        lmax = np.maximum(np.abs(s.L0), np.abs(s.Lr))
        hmax = np.maximum(np.maximum(np.abs(s.h00), np.abs(s.h0r)), np.abs(s.hrr))
        cs = [
            _worst("L_early", lmax + hmax, b0, early, tt, rr, tol),
            _worst("L", lmax, bl, late, tt, rr, tol),
            _worst("h", hmax, bh, late, tt, rr, tol),
        ]
        for c in cs:
            prev = results.get(c.name)
            if prev is None or c.ratio > prev.ratio:
                results[c.name] = c
    conds = [results[n] for n in ("L_early", "L", "h")]
    return WeakWaveReport(conds, [], all(c.passed for c in conds))


def fit_C0(spec, grid, orders=(0, 1, 2)):
    """Smallest C0 for which conditions (i)-(iii) hold on `grid` (condition (iv) does not involve C0)."""
    p = spec.weak_wave
    tt, rr = grid.mesh()
    early = tt <= p.t0
    lo = (tt >= p.t0) & (rr >= p.R1)
    need = 0.0
    for k in orders:
        s = eval_background(spec, tt, rr, k)
        dabs, dv = s.dphi_abs, np.abs(s.phi_v)
        n2 = (1 + rr) ** -0.5 * (1 + np.maximum(tt - rr, 0.0)) ** (-0.5 - 4 * p.alpha)
        n3 = (1 + rr) ** (-1 - 3 * p.alpha)
        need = max(need, float(np.max(np.where(early, dabs, 0.0))))
        need = max(need, float(np.max(np.where(lo, dabs / n2, 0.0))))
        need = max(need, float(np.max(np.where(lo, dv / n3, 0.0))))
    return need
