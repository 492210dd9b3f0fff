"""Double-null lattice, the hybrid foliation and slice extraction.

Lattice points are (i, j) with u = i h, v = j h. They are stored by diagonal
n = i + j (t = n h) and radial index k = j - i (r = k h), k = n mod 2, so a
"row" is one time level of the staggered lattice. Each row is a contiguous
block of one flat array.

Leaves are Sigma_tau = {t = tau, r <= R} + {u = u_tau, v >= v_tau} with
u_tau = (tau - R)/2, v_tau = (tau + R)/2. Diagnostic times are multiples of
2h and R is a multiple of 2h, so u_tau is a lattice line.
"""

import builtins
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, OutOfRange

_ALIGN_TOL = 1e-9


def _lattice_int(x, h, what, err=ConfigError):
    q = x / h
    n = int(round(q))
    if abs(q - n) > _ALIGN_TOL * max(1.0, abs(q)):
        msg = f"{what}={x} is not a multiple of {h}"
        raise err(msg, key=what) if err is ConfigError else err(msg)
    return n


@dataclass(frozen=True)
class CharGrid:
    h: float
    i_min: int
    i_max: int
    j_max: int
    n_max: int
    K_R: int
    ell: int = 0
    T: float = 0.0

    def __post_init__(self):
        n = np.arange(self.n_max + 1)
        lo = np.maximum(n % 2, n - 2 * self.i_max)
        hi = np.minimum(n - 2 * self.i_min, 2 * self.j_max - n)
        length = np.where(hi >= lo, (hi - lo) // 2 + 1, 0)
        off = np.zeros(self.n_max + 2, dtype=np.int64)
        off[1:] = np.cumsum(length)
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)
        object.__setattr__(self, "_off", off)

    # geometry
    @property
    def R(self):
        return self.K_R * self.h

    @property
    def u_min(self):
        return self.i_min * self.h

    @property
    def u_max(self):
        return self.i_max * self.h

    @property
    def v_min(self):
        return 0.0

    @property
    def v_max(self):
        return self.j_max * self.h

    @property
    def v_cut(self):
        return self.v_max

    @property
    def size(self):
        return int(self._off[-1])

    def k_lo(self, n):
        return self._lo[n]

    def k_hi(self, n):
        return self._hi[n]

    def row_k(self, n):
        return np.arange(self._lo[n], self._hi[n] + 1, 2)

    def row_slice(self, n):
        return builtins.slice(int(self._off[n]), int(self._off[n + 1]))

    def index(self, n, k):
        n = np.asarray(n)
        return self._off[n] + (np.asarray(k) - self._lo[n]) // 2

    def contains(self, n, k):
        n = np.asarray(n)
        k = np.asarray(k)
        ok = (n >= 0) & (n <= self.n_max)
        nn = np.clip(n, 0, self.n_max)
        return ok & ((k - n) % 2 == 0) & (k >= self._lo[nn]) & (k <= self._hi[nn])

    def tr(self, n, k):
        return np.asarray(n) * self.h, np.asarray(k) * self.h

    def uv(self, n, k):
        return 0.5 * (np.asarray(n) - np.asarray(k)) * self.h, 0.5 * (np.asarray(n) + np.asarray(k)) * self.h

    def diag_index(self, tau):
        """Row index of a diagnostic time, validated against the lattice."""
        n = _lattice_int(tau, self.h, "tau", OutOfRange)
        if n % 2:
            raise OutOfRange(f"tau={tau} is not a multiple of 2h")
        return n

    def diagnostic_times(self, stride=1.0, t_max=None):
        """Lattice-aligned times 0, s, 2s, ... up to t_max (default T), s rounded to a multiple of 2h."""
        step = max(2, 2 * int(round(stride / (2 * self.h))))
        t_max = self.T if t_max is None else t_max
        n_top = int(math.floor(t_max / self.h + _ALIGN_TOL))
        return np.arange(0, n_top + 1, step) * self.h

    def as_dict(self):
        return {
            "h": self.h,
            "i_min": self.i_min,
            "i_max": self.i_max,
            "j_max": self.j_max,
            "n_max": self.n_max,
            "K_R": self.K_R,
            "ell": self.ell,
            "T": self.T,
            "R": self.R,
            "u_min": self.u_min,
            "u_max": self.u_max,
            "v_max": self.v_max,
        }


def build_grid(T, R, h, ell=0, margin=2.0, R0=None, v_max=None):
    """Lattice covering every leaf Sigma_tau, tau in [0, T], with exterior cut at v_max.

    With a data support radius R0 the lattice starts at the first u-line past
    the data's domain of influence; otherwise the full causal triangle of the
    initial surface is used.
    """
    if not (h > 0 and R > 0 and T >= 0):
        raise ConfigError("need T >= 0, R > 0, h > 0", key="T" if T < 0 else ("R" if R <= 0 else "h"))
    if ell < 0:
        raise ConfigError("ell must be >= 0", key="ell")
    half_r = R / (2 * h)
    if abs(half_r - round(half_r)) > _ALIGN_TOL * max(1.0, half_r):
        raise ConfigError(f"R={R} is not a multiple of 2h={2 * h}", key="R")
    K_R = 2 * int(round(half_r))
    if v_max is None:
        v_max = 0.5 * (T + R) + margin
    j_max = int(math.ceil(v_max / h - _ALIGN_TOL))
    j_max = max(j_max, K_R // 2 + 4)
    if T == 0:
        i_max, n_max = 0, 0
    else:
        i_max = int(math.ceil(T / (2 * h) - _ALIGN_TOL)) + 2
        n_max = i_max + j_max
    if R0 is None:
        i_min = -j_max
    else:
        i_min = -max(int(math.ceil(R0 / (2 * h) - _ALIGN_TOL)), K_R // 2) - 2
    return CharGrid(float(h), i_min, i_max, j_max, n_max, K_R, int(ell), float(T))


# field access helpers; a field exposes .grid, .psi (flat), .psi_m1 (row -1, odd k from 1) and .n_done


def psi_at(field, n, k):
    """psi at lattice (n, k), with odd reflection for k < 0 and row n = -1 from the start-up data."""
    g = field.grid
    n = np.asarray(n)
    k = np.asarray(k)
    n, k = np.broadcast_arrays(n, k)
    sign = np.where(k < 0, -1.0, 1.0)
    kk = np.abs(k)
    out = np.zeros(n.shape)
    m1 = n == -1
    if np.any(m1):
        idx = (kk[m1] - 1) // 2
        if np.any(idx >= len(field.psi_m1)):
            raise OutOfRange("row -1 request beyond stored start-up data")
        out[m1] = field.psi_m1[idx]
    rest = ~m1
    if np.any(rest):
        nr, kr = n[rest], kk[rest]
        if np.any(nr > field.n_done) or np.any(nr < 0) or not np.all(g.contains(nr, kr)):
            raise OutOfRange("request outside the evolved lattice")
        out[rest] = field.psi[g.index(nr, kr)]
    return sign * out


@dataclass
class FoliationSlice:
    tau: float
    R: float
    h: float
    ell: int
    r_in: np.ndarray
    phi_in: np.ndarray
    phi_t_in: np.ndarray
    phi_r_in: np.ndarray
    v_ex: np.ndarray
    r_ex: np.ndarray
    phi_ex: np.ndarray
    dvpsi: np.ndarray
    dupsi: np.ndarray
    truncated: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def lam(self):
        return float(self.ell * (self.ell + 1))

    @property
    def ang_in(self):
        return math.sqrt(self.lam) * self.phi_in

    @property
    def ang_ex(self):
        return math.sqrt(self.lam) * self.phi_ex

    @property
    def angphi_in(self):
        """|angular gradient of phi| = sqrt(l(l+1)) phi / r, zero on the axis."""
        r = self.r_in
        return np.divide(self.ang_in, r, out=np.zeros_like(r), where=r > 0)

    @property
    def psi_ex(self):
        return self.r_ex * self.phi_ex

    @property
    def u_tau(self):
        return 0.5 * (self.tau - self.R)

    @property
    def v_tau(self):
        return 0.5 * (self.tau + self.R)

    def scaled(self, c):
        return FoliationSlice(
            self.tau, self.R, self.h, self.ell, self.r_in, c * self.phi_in, c * self.phi_t_in,
            c * self.phi_r_in, self.v_ex, self.r_ex, c * self.phi_ex, c * self.dvpsi, c * self.dupsi,
            self.truncated, dict(self.meta),
        )

    def rows(self):
        """(region, r, phi, phi_t, phi_r, dvpsi, dupsi) rows for export."""
        r = self.r_in
        psi_t = r * self.phi_t_in
        psi_r = self.phi_in + r * self.phi_r_in
        out = []
        for a in zip(r, self.phi_in, self.phi_t_in, self.phi_r_in, psi_t + psi_r, psi_t - psi_r):
            out.append(("interior",) + tuple(float(x) for x in a))
        r = self.r_ex
        psi_t = 0.5 * (self.dvpsi + self.dupsi)
        psi_r = 0.5 * (self.dvpsi - self.dupsi)
        pt = psi_t / r
        pr = (psi_r - self.phi_ex) / r
        for a in zip(r, self.phi_ex, pt, pr, self.dvpsi, self.dupsi):
            out.append(("exterior",) + tuple(float(x) for x in a))
        return out


def write_slices_csv(slices, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "region", "r", "phi", "dphi_dt", "dphi_dr", "dvpsi", "dupsi"])
        for sl in slices:
            for row in sl.rows():
                w.writerow([repr(float(sl.tau)), row[0]] + [repr(x) for x in row[1:]])


def _time_level(field, n, K):
    """psi, psi_t, psi_r at time n h for k = 0..K (second order in h)."""
    g = field.grid
    h = g.h
    k = np.arange(K + 2)
    same = (k % 2) == (n % 2)
    Psi = np.empty(K + 2)
    Psi[same] = psi_at(field, n, k[same])
    ko = k[~same]
    Psi[~same] = 0.5 * (psi_at(field, n + 1, ko) + psi_at(field, n - 1, ko))
    k = k[: K + 1]
    same = same[: K + 1]
    psi_t = np.empty(K + 1)
    ko = k[~same]
    psi_t[~same] = (psi_at(field, n + 1, ko) - psi_at(field, n - 1, ko)) / (2 * h)
    ks = k[same]
    psi_t[same] = (
        psi_at(field, n + 1, ks + 1) + psi_at(field, n + 1, ks - 1)
        - psi_at(field, n - 1, ks + 1) - psi_at(field, n - 1, ks - 1)
    ) / (4 * h)
    ext = np.concatenate([[-Psi[1]], Psi])
    psi_r = (ext[2:] - ext[:-2]) / (2 * h)
    return Psi[: K + 1], psi_t, psi_r, Psi[K + 1]


def _interior(field, n, K):
    h = field.grid.h
    psi, psi_t, _, psi_next = _time_level(field, n, K)
    r = np.arange(K + 1) * h
    phi = np.empty(K + 1)
    phi_t = np.empty(K + 1)
    phi[1:] = psi[1:] / r[1:]
    phi_t[1:] = psi_t[1:] / r[1:]
    # psi = c1 r + c3 r^3 + O(r^5); take c1 from k = 2, 4 so the axis value shares
    # the interpolation class of phi[2] and the centred phi_r at k = 1 stays second order
    if K >= 4:
        phi[0] = (8 * psi[2] - psi[4]) / (12 * h)
        phi_t[0] = (8 * psi_t[2] - psi_t[4]) / (12 * h)
    else:
        phi[0] = (8 * psi[1] - psi[2]) / (6 * h)
        phi_t[0] = (8 * psi_t[1] - psi_t[2]) / (6 * h)
    ext = np.concatenate([[phi[1]], phi, [psi_next / ((K + 1) * h)]])
    phi_r = (ext[2:] - ext[:-2]) / (2 * h)
    phi_r[0] = 0.0
    return r, phi, phi_t, phi_r


def _check_evolved(field, n_need, what):
    if n_need > field.n_done:
        raise OutOfRange(f"{what} needs rows up to {n_need}, field evolved to {field.n_done}")


def slice(field, tau):
    """Extract Sigma_tau from an evolved field."""
    g = field.grid
    n = g.diag_index(tau)
    if n < 0:
        raise OutOfRange("tau must be >= 0")
    K_R = g.K_R
    i_tau = (n - K_R) // 2
    if i_tau + 1 > g.i_max or i_tau - 1 < g.i_min:
        raise OutOfRange(f"tau={tau} outside the lattice")
    _check_evolved(field, i_tau + 1 + g.j_max, "slice")
    r_in, phi_in, phi_t_in, phi_r_in = _interior(field, n, K_R)

    h = g.h
    j = np.arange((n + K_R) // 2, g.j_max + 1)
    nn, kk = i_tau + j, j - i_tau
    psi = psi_at(field, nn, kk)
    dv = np.empty_like(psi)
    dv[1:-1] = (psi[2:] - psi[:-2]) / (2 * h)
    dv[0] = (psi[1] - psi_at(field, nn[0] - 1, kk[0] - 1)) / (2 * h)
    dv[-1] = (3 * psi[-1] - 4 * psi[-2] + psi[-3]) / (2 * h)
    du = (psi_at(field, nn + 1, kk - 1) - psi_at(field, nn - 1, kk + 1)) / (2 * h)
    r_ex = kk * h
    return FoliationSlice(
        float(n * h), K_R * h, h, g.ell, r_in, phi_in, phi_t_in, phi_r_in,
        j * h, r_ex, psi / r_ex, dv, du,
    )


@dataclass
class TimeSlice:
    t: float
    h: float
    ell: int
    r: np.ndarray
    phi: np.ndarray
    phi_t: np.ndarray
    phi_r: np.ndarray


def tslice(field, t, r_max=None):
    """Full constant-t slice out to the lattice edge (or r_max)."""
    g = field.grid
    n = g.diag_index(t)
    _check_evolved(field, n + 1, "tslice")
    if n + 1 > g.n_max:
        raise OutOfRange(f"t={t} beyond the lattice")
    hi = min(g.k_hi(n), g.k_hi(n + 1))
    if n >= 1:
        hi = min(hi, g.k_hi(n - 1))
    K = hi - 2
    if r_max is not None:
        K = min(K, int(math.floor(r_max / g.h)))
    if K < 2:
        raise OutOfRange(f"t={t} slice too short")
    r, phi, phi_t, phi_r = _interior(field, n, K)
    return TimeSlice(float(n * g.h), g.h, g.ell, r, phi, phi_t, phi_r)


# spacetime cells between leaves


@dataclass
class CellRow:
    n: int
    k: np.ndarray
    bins: np.ndarray
    weight: np.ndarray


class CellPartition:
    """Null cells of the region between consecutive leaves Sigma_{taus[b]}, Sigma_{taus[b+1]}.

    The cell with bottom corner (n, k) has centre t = (n+1) h, r = k h. Its
    leaf time is tau_c = n+1 (centre at r <= R) or n+1-(k-K_R) (r > R), in
    units of h. A cell centred on a leaf is split by area: 1/2 each side on
    the disc and 5/8 below at the corner r = R. Exterior cells always sit
    between two lattice u-lines and are never split.

    region="exterior" keeps only r >= R: cells centred at r = R count half,
    split 3/8 below and 1/8 above when centred on a leaf.

    Cells touching the axis (k = 0 corners) are left out; their r^2-weighted
    contribution is O(h^3).
    """

    def __init__(self, grid, taus, R=None, region="all"):
        self.grid = grid
        h = grid.h
        if region not in ("all", "exterior"):
            raise ValueError(f"unknown region '{region}'")
        self.region = region
        taus = np.asarray(taus, float)
        if taus.ndim != 1 or np.any(np.diff(taus) < 0):
            raise OutOfRange("taus must be nondecreasing")
        self.taus = taus
        self.nb = np.array([grid.diag_index(t) for t in taus], dtype=np.int64)
        if R is None:
            self.K_R = grid.K_R
        else:
            K = _lattice_int(R, 2 * h, "R", OutOfRange) * 2
            if K <= 0 or K > 2 * grid.j_max - 4:
                raise OutOfRange(f"R={R} larger than the lattice allows")
            self.K_R = K
        self.R = self.K_R * h
        if len(taus) >= 2:
            i_lo = (self.nb[0] - self.K_R) // 2
            i_hi = (self.nb[-1] - self.K_R) // 2
            if i_lo < grid.i_min or i_hi > grid.i_max - 1:
                raise OutOfRange("leaves outside the lattice")
        self.nbins = max(len(taus) - 1, 0)

    def rows(self):
        """Yield CellRow for every bottom row n; cells outside [taus[0], taus[-1]] are dropped."""
        if self.nbins == 0 or self.nb[0] == self.nb[-1]:
            return
        g = self.grid
        K_R = self.K_R
        nb = self.nb
        ext = self.region == "exterior"
        for n in range(0, g.n_max - 1):
            lo = max(g.k_lo(n), n - 2 * g.i_max + 2, 2 - n % 2)
            if ext:
                lo = max(lo, K_R - ((K_R - n) % 2))
            hi = min(g.k_hi(n), 2 * g.j_max - n - 2, n - 2 * g.i_min)
            if lo > hi:
                continue
            if n + 1 - (hi - K_R) > nb[-1] and n + 1 > nb[-1]:
                break
            k = np.arange(lo, hi + 1, 2)
            if ext:
                k = k[k >= K_R]
            tc = np.where(k <= K_R, n + 1, n + 1 - (k - K_R))
            keep = (tc >= nb[0]) & (tc <= nb[-1])
            if not np.any(keep):
                continue
            k, tc = k[keep], tc[keep]
            corner = k == K_R
            if ext:
                w_tot = np.where(corner, 0.5, 1.0)
                w_below = np.where(corner, 0.375, 0.5)
            else:
                w_tot = np.ones(len(k))
                w_below = np.where(corner, 0.625, 0.5)
            pos = np.searchsorted(nb, tc, side="left")
            on = nb[np.minimum(pos, len(nb) - 1)] == tc
            ks, bs, ws = [k[~on]], [pos[~on] - 1], [w_tot[~on]]
            if np.any(on):
                ko, po, wb, wt = k[on], pos[on], w_below[on], w_tot[on]
                m1 = po >= 1
                ks.append(ko[m1])
                bs.append(po[m1] - 1)
                ws.append(wb[m1])
                m2 = po < self.nbins
                ks.append(ko[m2])
                bs.append(po[m2])
                ws.append(wt[m2] - wb[m2])
            yield CellRow(n, np.concatenate(ks), np.concatenate(bs), np.concatenate(ws))

    def volumes(self):
        """Per-bin sum of r^2 dt dr over the cells (per-mode normalisation, 4 pi dropped)."""
        h = self.grid.h
        out = np.zeros(self.nbins)
        for row in self.rows():
            r = row.k * h
            np.add.at(out, row.bins, row.weight * 2 * h * h * r * r)
        return out

    def volume(self):
        return float(np.sum(self.volumes()))


def spacetime_cells(grid, tau1, tau2, R=None, region="all"):
    if tau2 < tau1:
        raise OutOfRange("tau1 must be <= tau2")
    return CellPartition(grid, [tau1, tau2], R, region)
