"""Characteristic evolution of the reduced equation for psi = r phi.

The field equation is  box phi + N(Phi, phi) + L(d phi) = F(d phi)  with
box = -d_t^2 + Laplacian. For one spherical-harmonic mode it becomes

    d_u d_v psi = G,   G = -r (F - N - L) - l(l+1) psi / r^2,

with d_u = d_t - d_r, d_v = d_t + d_r. On a null cell S (bottom), W, E, N (top)
of side h the update is psi_N = psi_W + psi_E - psi_S + h^2 G(centre).
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .background import BackgroundSpec, eval_background
from .coeffs import CoeffTensor, radial_coefficients
from .errors import BlowupDetected, ConfigError, NoBlowup, NotConverged, OutOfRange
from .grid import build_grid
from .profiles import RadialProfile


class Jet:
    """Time-derivative jet (f, f_t, f_tt, ...) with Leibniz products.

    Lets the same right-hand side expression produce d_t^k of itself.
    """

    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = list(coeffs)

    @property
    def order(self):
        return len(self.c) - 1

    def __getitem__(self, m):
        return self.c[m]

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet([other] + [0.0] * self.order)

    def __add__(self, other):
        o = self._lift(other)
        return Jet([a + b for a, b in zip(self.c, o.c)])

    __radd__ = __add__

    def __neg__(self):
        return Jet([-a for a in self.c])

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet([a * other for a in self.c])
        n = min(self.order, other.order)
        out = []
        for m in range(n + 1):
            acc = 0.0
            for j in range(m + 1):
                acc = acc + comb(m, j) * self.c[j] * other.c[m - j]
            out.append(acc)
        return Jet(out)

    __rmul__ = __mul__


@dataclass
class InitialData:
    phi0: RadialProfile = field(default_factory=RadialProfile)
    phi1: RadialProfile = field(default_factory=RadialProfile)
    R0: float = None

    def sup(self, r_max=None):
        r = np.linspace(0.0, r_max if r_max is not None else (self.R0 or 10.0), 2001)
        return float(max(np.max(np.abs(self.phi0(r))), np.max(np.abs(self.phi1(r)))))


@dataclass
class ProblemSpec:
    A: CoeffTensor = field(default_factory=CoeffTensor.zero)
    B: CoeffTensor = field(default_factory=CoeffTensor.zero)
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    cubic_coefficient: float = 0.0
    data: InitialData = field(default_factory=InitialData)
    epsilon: float = 1.0
    ell: int = 0

    def __post_init__(self):
        self.a00, self.a_s = radial_coefficients(self.A)
        self.b00, self.b_s = radial_coefficients(self.B)

    @property
    def has_F(self):
        return not self.A.is_zero() or self.cubic_coefficient != 0 or self.background.has_h

    @property
    def has_N(self):
        return not self.B.is_zero() and self.background.has_phi

    @property
    def has_L(self):
        return self.background.has_l

    @property
    def is_linear(self):
        return not self.has_F

    def with_epsilon(self, eps):
        return ProblemSpec(self.A, self.B, self.background, self.cubic_coefficient, self.data, eps, self.ell)


@dataclass
class PointState:
    t: object
    r: object
    phi: object
    phi_t: object
    phi_r: object
    bg: object = None


def F_terms(problem, phi_t, phi_r, bg=None):
    """A-form + h-form + cubic null term on radial gradients."""
    out = 0.0
    p = problem
    if p.a00 != 0:
        out = out + p.a00 * (phi_t * phi_t)
    if p.a_s != 0:
        out = out + p.a_s * (phi_r * phi_r)
    if p.background.has_h:
        out = out + bg.h00 * (phi_t * phi_t) + 2.0 * (bg.h0r * (phi_t * phi_r)) + bg.hrr * (phi_r * phi_r)
    if p.cubic_coefficient != 0:
        out = out + p.cubic_coefficient * ((phi_t * phi_t - phi_r * phi_r) * phi_t)
    return out


def NL_terms(problem, phi_t, phi_r, bg=None):
    """N(Phi, phi) + L(d phi)."""
    out = 0.0
    p = problem
    if p.has_N:
        if p.b00 != 0:
            out = out + p.b00 * (bg.phi_t * phi_t)
        if p.b_s != 0:
            out = out + p.b_s * (bg.phi_r * phi_r)
    if p.has_L:
        out = out + bg.L0 * phi_t + bg.Lr * phi_r
    return out


def assemble_rhs(problem, point):
    """F(d phi) - N(Phi, phi) - L(d phi) at a point (arrays or Jets)."""
    return F_terms(problem, point.phi_t, point.phi_r, point.bg) - NL_terms(problem, point.phi_t, point.phi_r, point.bg)


_BG_FIELDS = ("phi", "phi_t", "phi_r", "L0", "Lr", "h00", "h0r", "hrr")


class _JetBackground:
    def __init__(self, samples):
        for name in _BG_FIELDS:
            setattr(self, name, Jet([getattr(s, name) for s in samples]))


def background_jet(spec, t, r, order):
    return _JetBackground([eval_background(spec, t, r, k) for k in range(order + 1)])


# start-up data


def _fd4(f, h, parity, ghosts=2):
    """First and second r-derivatives, 4th order, with parity reflection at r = 0."""
    ext = np.concatenate([parity * f[ghosts:0:-1], f])
    d1 = np.zeros_like(f)
    d2 = np.zeros_like(f)
    e = ext
    g = ghosts
    m = len(f)
    idx = np.arange(g, g + m - 2)
    d1[: m - 2] = (-e[idx + 2] + 8 * e[idx + 1] - 8 * e[idx - 1] + e[idx - 2]) / (12 * h)
    d2[: m - 2] = (-e[idx + 2] + 16 * e[idx + 1] - 30 * e[idx] + 16 * e[idx - 1] - e[idx - 2]) / (12 * h * h)
    # last two points: second order, they sit in the padding
    d1[-2:] = (f[-1] - f[-3]) / (2 * h)
    d2[-2:] = (f[-1] - 2 * f[-2] + f[-3]) / (h * h)
    return d1, d2


def initial_jets(problem, h, K, n_derivs):
    """D_m = d_t^m phi(0, r) on r = 0, h, ..., K h for m = 0..n_derivs.

    D_{m+2} = Lap_l D_m + d_t^m (N + L - F) at t = 0, the t-derivatives of the
    right-hand side being taken with jets.
    """
    pad = 4 * n_derivs + 8
    r = np.arange(K + 1 + pad) * h
    data = problem.data
    eps = problem.epsilon
    parity = (-1) ** problem.ell
    lam = problem.ell * (problem.ell + 1)
    D = [eps * data.phi0(r), eps * data.phi1(r)]
    dr = [_fd4(D[0], h, parity), _fd4(D[1], h, parity)]
    need_rhs = problem.has_F or problem.has_N or problem.has_L
    t0 = np.zeros_like(r)
    bgj = background_jet(problem.background, t0, r, max(n_derivs - 2, 0)) if need_rhs else None
    rs = np.where(r > 0, r, 1.0)
    for m in range(n_derivs - 1):
        d1, d2 = dr[m]
        lap = d2 + 2 * d1 / rs - lam * D[m] / rs**2
        lap[0] = 3 * d2[0] if problem.ell == 0 else 0.0
        nxt = lap
        if need_rhs:
            phi_t = Jet(D[1 : m + 2])
            phi_r = Jet([dr[j][0] for j in range(m + 1)])
            bg = _JetBackground([_bg_slice(bgj, j) for j in range(m + 1)])
            rhs = assemble_rhs(problem, PointState(0.0, r, Jet(D[: m + 1]), phi_t, phi_r, bg))
            nxt = nxt - _top(rhs, m)
        D.append(nxt)
        dr.append(_fd4(nxt, h, parity))
    return [d[: K + 1] for d in D]


class _Sample:
    pass


def _bg_slice(jb, j):
    s = _Sample()
    for name in _BG_FIELDS:
        setattr(s, name, getattr(jb, name)[j])
    return s


def _top(val, m):
    if isinstance(val, Jet):
        return val[m]
    return val if m == 0 else 0.0


# fields


@dataclass
class CharField:
    grid: object
    psi: np.ndarray
    psi_m1: np.ndarray
    n_done: int
    status: str = "completed"
    t_star: float = None
    location: tuple = None
    commuted_level: int = 0
    problem: ProblemSpec = None
    meta: dict = field(default_factory=dict)

    def row(self, n):
        return self.psi[self.grid.row_slice(n)]

    @property
    def completed(self):
        return self.status == "completed"

    def content_hash(self):
        hsh = hashlib.sha256()
        hsh.update(json.dumps(self.grid.as_dict(), sort_keys=True).encode())
        hsh.update(np.ascontiguousarray(self.psi[: self.grid._off[self.n_done + 1]]).tobytes())
        hsh.update(np.ascontiguousarray(self.psi_m1).tobytes())
        return hsh.hexdigest()

    def combine(self, a, other, b):
        """a * self + b * other on the same grid (linear superposition helper)."""
        n = min(self.n_done, other.n_done)
        return CharField(self.grid, a * self.psi + b * other.psi, a * self.psi_m1 + b * other.psi_m1, n)

    def export(self, csv_path, json_path, stride=1):
        """CSV of (u, v, psi) and a JSON header with grid metadata and content hash."""
        g = self.grid
        with open(csv_path, "w") as fh:
            fh.write("u,v,psi\n")
            for n in range(0, self.n_done + 1, stride):
                k = g.row_k(n)
                u, v = g.uv(n, k)
                vals = self.row(n)
                fh.write("".join(f"{a!r},{b!r},{c!r}\n" for a, b, c in zip(u.tolist(), v.tolist(), vals.tolist())))
        head = {
            "grid": g.as_dict(),
            "n_done": self.n_done,
            "status": self.status,
            "t_star": self.t_star,
            "commuted_level": self.commuted_level,
            "stride": stride,
            "sha256": self.content_hash(),
        }
        with open(json_path, "w") as fh:
            json.dump(head, fh, indent=2, sort_keys=True)
        return head


@dataclass
class SchemeOptions:
    ceiling: float = None
    corrector_passes: int = 1
    on_blowup: str = "record"

    def __post_init__(self):
        if self.corrector_passes != 1:
            raise ConfigError("corrector_passes is fixed to 1", key="corrector_passes")
        if self.on_blowup not in ("record", "raise"):
            raise ConfigError("on_blowup must be 'record' or 'raise'", key="on_blowup")


def default_ceiling(problem):
    sup = problem.epsilon * problem.data.sup()
    return 1e6 * max(abs(problem.epsilon), sup)


def _start_rows(grid, D_list):
    """Rows 0, 1 and -1 from the Taylor expansion psi(+-h) = r (D0 +- h D1 + h^2 D2 / 2)."""
    h = grid.h
    D0, D1, D2 = D_list
    k0 = grid.row_k(0)
    row0 = k0 * h * D0[k0]
    rows = [row0]
    if grid.n_max >= 1:
        k1 = grid.row_k(1)
        rows.append(k1 * h * (D0[k1] + h * D1[k1] + 0.5 * h * h * D2[k1]))
    km = np.arange(1, grid.k_hi(min(1, grid.n_max)) + 3, 2)
    row_m1 = km * h * (D0[km] - h * D1[km] + 0.5 * h * h * D2[km])
    return rows, row_m1


class _Center:
    """phi, phi_t, phi_r at cell centres from the four corner values."""

    @staticmethod
    def from_corners(S, W, E, N, r, h):
        psi = 0.25 * (S + W + E + N)
        du = (N - E + W - S) / (2 * h)
        dv = (N - W + E - S) / (2 * h)
        return _Center.from_psi(psi, du, dv, r)

    @staticmethod
    def from_psi(psi, du, dv, r):
        phi = psi / r
        phi_t = 0.5 * (du + dv) / r
        phi_r = (0.5 * (dv - du) - phi) / r
        return phi, phi_t, phi_r


def _row_neighbours(grid, psi, m, k):
    """S, W, E values for the cells whose top corner is (m, k)."""
    h2 = psi[grid.row_slice(m - 2)] if m >= 2 else None
    h1 = psi[grid.row_slice(m - 1)]
    lo1, lo2 = grid.k_lo(m - 1), grid.k_lo(m - 2)
    S = h2[(k - lo2) // 2]
    W = h1[(k - 1 - lo1) // 2]
    E = h1[(k + 1 - lo1) // 2]
    return S, W, E


def cell_states(field, m, k):
    """Corner values of the cells with top corner (m, k) in a completed field."""
    g = field.grid
    S, W, E = _row_neighbours(g, field.psi, m, k)
    N = field.row(m)[(k - g.k_lo(m)) // 2]
    return S, W, E, N


class _Source:
    """Right-hand side F - N - L at the cell centres of one row."""

    def __init__(self, problem, level=0, lower=(), frozen=None):
        self.p = problem
        self.level = level
        self.lower = list(lower)
        self.frozen = frozen
        self.active = problem.has_F or problem.has_N or problem.has_L
        if frozen is not None:
            self.active = problem.has_N or problem.has_L or frozen is not False

    def prepare(self, grid, m, k):
        p = self.p
        h = grid.h
        t = np.full(k.shape, (m - 1) * h)
        r = k * h
        ctx = {"r": r}
        if not self.active:
            return ctx
        need_bg = p.background.has_phi or p.background.has_l or p.background.has_h
        if need_bg:
            if self.level == 0:
                ctx["bg"] = eval_background(p.background, t, r, 0)
            else:
                ctx["bg"] = background_jet(p.background, t, r, self.level)
        if self.lower:
            ctx["low"] = [_Center.from_corners(*cell_states(f, m, k), r, h) for f in self.lower]
        if self.frozen is not None and self.frozen is not False and p.has_F:
            _, ft, fr = _Center.from_corners(*cell_states(self.frozen, m, k), r, h)
            ctx["F"] = F_terms(p, ft, fr, ctx.get("bg"))
        return ctx

    def __call__(self, ctx, phi, phi_t, phi_r):
        p = self.p
        if not self.active:
            return 0.0
        bg = ctx.get("bg")
        if self.level == 0:
            if self.frozen is not None:
                return ctx.get("F", 0.0) - NL_terms(p, phi_t, phi_r, bg)
            return F_terms(p, phi_t, phi_r, bg) - NL_terms(p, phi_t, phi_r, bg)
        low = ctx["low"]
        jp = Jet([lw[0] for lw in low] + [phi])
        jt = Jet([lw[1] for lw in low] + [phi_t])
        jr = Jet([lw[2] for lw in low] + [phi_r])
        rhs = assemble_rhs(p, PointState(None, ctx["r"], jp, jt, jr, bg))
        return _top(rhs, self.level)


def _march(problem, grid, scheme, rows, row_m1, source, ceiling):
    g = grid
    h = g.h
    lam = problem.ell * (problem.ell + 1)
    psi = np.zeros(g.size)
    for n, row in enumerate(rows):
        psi[g.row_slice(n)] = row
    compact = problem.data.R0 is not None
    fld = CharField(g, psi, row_m1, len(rows) - 1)
    with np.errstate(over="ignore", invalid="ignore"):
        bad = _check_row(fld, 0, ceiling) or (len(rows) > 1 and _check_row(fld, 1, ceiling))
        if bad:
            return _flag_blowup(fld, bad, scheme)
        for m in range(len(rows), g.n_max + 1):
            k_all = g.row_k(m)
            mask = k_all >= 1
            if compact:
                mask &= (m - k_all) // 2 > g.i_min
            k = k_all[mask]
            new = np.zeros(len(k_all))
            if len(k):
                S, W, E = _row_neighbours(g, psi, m, k)
                r = k * h
                ctx = source.prepare(g, m, k)
                base = W + E - S
                # predictor: edge gradients, centre value from W and E
                phi, pt, pr = _Center.from_psi(0.5 * (W + E), (W - S) / h, (E - S) / h, r)
                G = -r * source(ctx, phi, pt, pr)
                if lam:
                    G = G - lam * 0.5 * (W + E) / r**2
                Np = base + h * h * G
                # corrector
                phi, pt, pr = _Center.from_corners(S, W, E, Np, r, h)
                G = -r * source(ctx, phi, pt, pr)
                if lam:
                    G = G - lam * 0.25 * (S + W + E + Np) / r**2
                new[mask] = base + h * h * G
            psi[g.row_slice(m)] = new
            fld.n_done = m
            bad = _check_row(fld, m, ceiling)
            if bad:
                return _flag_blowup(fld, bad, scheme)
    return fld


def _check_row(fld, m, ceiling):
    g = fld.grid
    k = g.row_k(m)
    vals = fld.row(m)
    fin = np.isfinite(vals)
    r = np.where(k > 0, k * g.h, 1.0)
    phi = np.where(fin, np.abs(vals) / r, np.inf)
    # gradient blowup shows as a jump between lattice neighbours
    jump = np.zeros_like(phi)
    if len(vals) > 1:
        jump[1:] = np.abs(np.diff(np.where(fin, vals, 0.0))) / (2 * g.h)
    over = (phi > ceiling) | (jump > ceiling) | ~fin
    if not np.any(over):
        return None
    idx = int(np.argmax(np.where(over, np.where(fin, phi + jump, np.inf), -1.0)))
    u, v = g.uv(m, k[idx])
    return (m, float(u), float(v))


def _flag_blowup(fld, bad, scheme):
    m, u, v = bad
    fld.status = "blowup_detected"
    fld.t_star = m * fld.grid.h
    fld.location = (u, v)
    fld.n_done = max(m - 1, 0)
    if scheme.on_blowup == "raise":
        raise BlowupDetected(fld.t_star, fld.location)
    return fld


def _validate(problem, grid):
    if problem.ell != grid.ell:
        raise ConfigError("problem and grid disagree on ell", key="ell")
    if problem.ell > 0 and not problem.is_linear:
        raise ConfigError("ell > 0 is only admitted for linear problems", key="ell")


def evolve(problem, grid, scheme=None, frozen=None):
    """March the reduced equation over the whole lattice.

    `frozen` switches to the Picard step: F is taken from that field (False
    means F = 0) while N and L act on the field being computed.
    """
    scheme = scheme or SchemeOptions()
    _validate(problem, grid)
    ceiling = scheme.ceiling if scheme.ceiling is not None else default_ceiling(problem)
    K = grid.k_hi(0) + 4
    pic = problem
    if frozen is False:
        pic = ProblemSpec(CoeffTensor.zero(), problem.B, _without_h(problem.background), 0.0, problem.data,
                          problem.epsilon, problem.ell)
    D = initial_jets(pic, grid.h, K, 2)
    rows, row_m1 = _start_rows(grid, D)
    source = _Source(problem, frozen=frozen)
    fld = _march(problem, grid, scheme, rows, row_m1, source, ceiling)
    fld.problem = problem
    return fld


def _without_h(bg):
    d = bg.as_dict()
    return BackgroundSpec(bg.family, d["params"], bg.weak_wave, bg.l_family, d["l_params"], bg.l_condition, "none", {})


def evolve_commuted(problem, base, k, lower=None, scheme=None):
    """Evolve w = d_t^k phi from the linearised commuted equation.

    `lower` holds the completed fields of the intermediate levels (the k = 1
    field when k = 2); sources are built from them and the base field.
    """
    if k not in (1, 2):
        raise ConfigError("commutation depth is 1 or 2", key="k")
    if not base.completed:
        raise OutOfRange("base field did not complete")
    lower = list(lower or [])
    if k == 2 and len(lower) != 1:
        raise ConfigError("k = 2 needs the k = 1 field", key="k")
    scheme = scheme or SchemeOptions()
    grid = base.grid
    _validate(problem, grid)
    D = initial_jets(problem, grid.h, grid.k_hi(0) + 4, k + 2)
    rows, row_m1 = _start_rows(grid, D[k : k + 3])
    source = _Source(problem, level=k, lower=[base] + lower)
    ceiling = scheme.ceiling if scheme.ceiling is not None else np.inf
    fld = _march(problem, grid, scheme, rows, row_m1, source, ceiling)
    fld.commuted_level = k
    fld.problem = problem
    return fld


def sup_phi_difference(f1, f2):
    """sup |phi_1 - phi_2| over the off-axis lattice points both fields reached."""
    g = f1.grid
    n = min(f1.n_done, f2.n_done)
    end = g._off[n + 1]
    d = np.abs(f1.psi[:end] - f2.psi[:end])
    k = np.concatenate([g.row_k(m) for m in range(n + 1)])
    off = k > 0
    return float(np.max(d[off] / (k[off] * g.h))) if np.any(off) else 0.0


@dataclass
class PicardReport:
    history: list
    converged: bool
    field: CharField
    iterations: int

    def ratios(self):
        d = self.history
        return [d[i] / d[i + 1] if d[i + 1] > 0 else np.inf for i in range(len(d) - 1)]


def picard_solve(problem, grid, n_max=6, tol=1e-14, scheme=None, raise_on_failure=True):
    """phi_{-1} = 0; box phi_{n+1} + N(phi_{n+1}) + L(phi_{n+1}) = F(d phi_n).

    history[n-1] = d_n = sup |phi_n - phi_{n-1}|, n >= 1.
    """
    if n_max < 1:
        raise ConfigError("n_max must be >= 1", key="n_max")
    scheme = scheme or SchemeOptions()
    prev = evolve(problem, grid, scheme, frozen=False)
    hist = []
    for _ in range(n_max):
        if not prev.completed:
            break
        cur = evolve(problem, grid, scheme, frozen=prev)
        if not cur.completed:
            prev = cur
            break
        d = sup_phi_difference(cur, prev)
        hist.append(d)
        prev = cur
        if d <= tol:
            return PicardReport(hist, True, cur, len(hist))
    if raise_on_failure:
        raise NotConverged(hist)
    return PicardReport(hist, False, prev, len(hist))


@dataclass
class BlowupStudy:
    hs: list
    t_stars: list
    statuses: list
    verdict: str
    spread: float


def detect_blowup_time(problem, h_sequence, T=200.0, R=None, margin=2.0, scheme=None):
    """Evolve at each h; 'genuine' when t* moves by <= 10% between the two finest grids."""
    hs = [float(x) for x in h_sequence]
    if len(hs) < 2 or any(b >= a for a, b in zip(hs, hs[1:])):
        raise ConfigError("h_sequence must be strictly decreasing with length >= 2", key="h")
    scheme = scheme or SchemeOptions()
    R0 = problem.data.R0
    if R is None:
        R = R0 if R0 else 2.0
    t_stars, statuses = [], []
    for h in hs:
        g = build_grid(T, R, h, problem.ell, margin=margin, R0=R0)
        f = evolve(problem, g, scheme)
        t_stars.append(f.t_star)
        statuses.append(f.status)
    found = [t for t in t_stars if t is not None]
    if not found:
        raise NoBlowup(f"no blowup up to T={T} at h in {hs}")
    a, b = t_stars[-2], t_stars[-1]
    if a is None or b is None:
        return BlowupStudy(hs, t_stars, statuses, "artifact", math.inf)
    spread = abs(a - b) / max(abs(b), 1e-300)
    return BlowupStudy(hs, t_stars, statuses, "genuine" if spread <= 0.1 else "artifact", spread)
