"""One-dimensional profiles: null data a(s) for exact free waves and radial initial data.

A free spherical wave has r*phi = a(u) - a(v). `char_phi` evaluates phi and its
first derivatives (and their time derivatives) in closed form, switching to
the Taylor series of the removable singularity close to the axis.
"""

from math import factorial

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.hermite import hermval

_AXIS_SWITCH = 1e-2
_SERIES_TERMS = 6  # odd powers 1, 3, ..., 11


class GaussOdd:
    """a(s) = amp * (s - c) * exp(-((s - c)/w)^2)."""

    kind = "gauss"

    def __init__(self, amp=1.0, width=1.0, center=0.0):
        self.amp, self.width, self.center = float(amp), float(width), float(center)

    def deriv(self, s, m=0):
        w = self.width
        x = (np.asarray(s, float) - self.center) / w
        coef = np.zeros(m + 2)
        coef[m + 1] = 1.0
        # s e^{-s^2/w^2} = -(w/2) d/dx e^{-x^2};  d^n/dx^n e^{-x^2} = (-1)^n H_n(x) e^{-x^2}
        return -0.5 * self.amp * w ** (1 - m) * (-1.0) ** (m + 1) * hermval(x, coef) * np.exp(-x * x)

    def __call__(self, s):
        return self.deriv(s, 0)

    def params(self):
        return {"amp": self.amp, "width": self.width, "center": self.center}


class CompactStep:
    """a with a'(s) = amp * (1 - ((s - c)/w)^2)^p on |s - c| < w and a(-inf) = 0."""

    kind = "compact"

    def __init__(self, amp=1.0, width=1.0, center=0.0, power=4):
        self.amp, self.width, self.center, self.power = float(amp), float(width), float(center), int(power)
        x = Polynomial([0.0, 1.0 / self.width])
        dpoly = self.amp * (1.0 - x * x) ** self.power
        poly = dpoly.integ(lbnd=-self.width)
        self._polys = [poly, dpoly]
        self.total = float(poly(self.width))

    def _poly(self, m):
        while len(self._polys) <= m:
            self._polys.append(self._polys[-1].deriv())
        return self._polys[m]

    def deriv(self, s, m=0):
        y = np.asarray(s, float) - self.center
        inside = np.abs(y) < self.width
        out = np.where(inside, self._poly(m)(np.clip(y, -self.width, self.width)), 0.0)
        if m == 0:
            out = np.where(y >= self.width, self.total, out)
        return out

    def __call__(self, s):
        return self.deriv(s, 0)

    def params(self):
        return {"amp": self.amp, "width": self.width, "center": self.center, "power": self.power}


def make_null_profile(kind="gauss", **kw):
    if kind == "gauss":
        return GaussOdd(**kw)
    if kind == "compact":
        return CompactStep(**kw)
    raise ValueError(f"unknown null profile '{kind}'")


def char_psi(a, t, r, dt_order=0):
    """d_t^k of psi = a(u) - a(v)."""
    t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
    u, v = 0.5 * (t - r), 0.5 * (t + r)
    return 0.5**dt_order * (a.deriv(u, dt_order) - a.deriv(v, dt_order))


def char_phi(a, t, r, dt_order=0):
    """(Phi, Phi_t, Phi_r) of d_t^k (psi / r) with psi = a(u) - a(v)."""
    t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
    shape = t.shape
    t, r = t.reshape(-1), r.reshape(-1)
    k = dt_order
    u, v = 0.5 * (t - r), 0.5 * (t + r)
    scale = 0.5**k
    near = r < _AXIS_SWITCH
    rs = np.where(near, _AXIS_SWITCH, r)
    psi = scale * (a.deriv(u, k) - a.deriv(v, k))
    da_u, da_v = scale * a.deriv(u, k + 1), scale * a.deriv(v, k + 1)
    phi = psi / rs
    phi_t = 0.5 * (da_u - da_v) / rs
    phi_r = -0.5 * (da_u + da_v) / rs - psi / rs**2
    if np.any(near):
        c = 0.5 * t[near]
        rn = r[near]
        s0 = np.zeros_like(rn)
        s1 = np.zeros_like(rn)
        s2 = np.zeros_like(rn)
        for j in range(_SERIES_TERMS):
            n = 2 * j + 1
            den = 2.0 ** (n - 1) * factorial(n)
            s0 -= scale * a.deriv(c, k + n) * rn ** (n - 1) / den
            s1 -= 0.5 * scale * a.deriv(c, k + n + 1) * rn ** (n - 1) / den
            if n >= 3:
                s2 -= scale * a.deriv(c, k + n) * (n - 1) * rn ** (n - 2) / den
        phi = phi.copy()
        phi_t = phi_t.copy()
        phi_r = phi_r.copy()
        phi[near], phi_t[near], phi_r[near] = s0, s1, s2
    return phi.reshape(shape), phi_t.reshape(shape), phi_r.reshape(shape)


# radial initial data profiles; all accept negative r through their parity


class RadialProfile:
    kind = "zero"
    parity = 1

    def __call__(self, r):
        r = np.asarray(r, float)
        return np.zeros_like(r)

    def params(self):
        return {}

    def support(self):
        return 0.0


class Bump(RadialProfile):
    """amp * (r/R0)^ell * (1 - (r/R0)^2)^p for r < R0, zero outside."""

    kind = "bump"

    def __init__(self, R0=2.0, amp=1.0, power=6, ell=0):
        self.R0, self.amp, self.power, self.ell = float(R0), float(amp), int(power), int(ell)
        self.parity = (-1) ** self.ell

    def __call__(self, r):
        r = np.asarray(r, float)
        x = r / self.R0
        return np.where(np.abs(x) < 1.0, self.amp * x**self.ell * (1.0 - x * x) ** self.power, 0.0)

    def params(self):
        return {"R0": self.R0, "amp": self.amp, "power": self.power}

    def support(self):
        return self.R0


class Gaussian(RadialProfile):
    kind = "gaussian"

    def __init__(self, width=1.0, amp=1.0, ell=0):
        self.width, self.amp, self.ell = float(width), float(amp), int(ell)
        self.parity = (-1) ** self.ell

    def __call__(self, r):
        r = np.asarray(r, float)
        x = r / self.width
        return self.amp * x**self.ell * np.exp(-x * x)

    def params(self):
        return {"width": self.width, "amp": self.amp}

    def support(self):
        return None


class CharData(RadialProfile):
    """t = 0 data of the exact free wave r*phi = a(u) - a(v); which = 0 (phi) or 1 (phi_t)."""

    kind = "char"

    def __init__(self, a, which=0):
        self.a, self.which = a, int(which)

    def __call__(self, r):
        r = np.abs(np.asarray(r, float))
        phi, phi_t, _ = char_phi(self.a, np.zeros_like(r), r)
        return phi if self.which == 0 else phi_t

    def params(self):
        return {"which": self.which, **self.a.params()}

    def support(self):
        if isinstance(self.a, CompactStep):
            return 2.0 * (abs(self.a.center) + self.a.width)
        return None


def make_radial_profile(kind, ell=0, **kw):
    if kind in ("zero", "none"):
        return RadialProfile()
    if kind == "bump":
        return Bump(ell=ell, **kw)
    if kind == "gaussian":
        return Gaussian(ell=ell, **kw)
    raise ValueError(f"unknown radial profile '{kind}'")
