"""Constant coefficient tensors A^{mu nu} and their null structure.

Index 0 is t, indices 1..3 are Cartesian x, y, z. The metric signature is
(-,+,+,+) and the basic null form is

    Q0 = diag(+1, -1, -1, -1),   Q0(f, g) = f_t g_t - grad f . grad g

The antisymmetric forms Q_ab(f, g) = d_a f d_b g - d_b f d_a g are stored as
the antisymmetric matrices with +1 at (a, b) and -1 at (b, a).

In spherical symmetry gradients are carried as RadialGradient(dt, dr, ang),
where `ang` is the per-mode angular derivative magnitude. Cartesian spatial
indices are collapsed by averaging over the sphere (d_i f = w_i f_r with
<w_i w_j> = delta_ij / 3, <w_i> = 0), which is exact for null tensors and
keeps non-null examples such as phi_t^2 exact on radial fields.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NotNull

Q0 = np.diag([1.0, -1.0, -1.0, -1.0])
NULL_TOL = 1e-10


class RadialGradient(NamedTuple):
    dt: object
    dr: object
    ang: object = 0.0


@dataclass(frozen=True)
class CoeffTensor:
    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float).reshape(4, 4)
        if not np.all(np.isfinite(a)):
            raise ValueError("tensor entries must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def sym(self):
        return 0.5 * (self.entries + self.entries.T)

    @property
    def antisym(self):
        return 0.5 * (self.entries - self.entries.T)

    def __add__(self, other):
        return CoeffTensor(self.entries + other.entries)

    def __mul__(self, c):
        return CoeffTensor(float(c) * self.entries)

    __rmul__ = __mul__

    def __neg__(self):
        return CoeffTensor(-self.entries)

    def __eq__(self, other):
        return isinstance(other, CoeffTensor) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def is_zero(self):
        return not np.any(self.entries)

    def to_text(self):
        return " ".join(repr(float(x)) for x in self.entries.ravel())

    @classmethod
    def zero(cls):
        return cls(np.zeros((4, 4)))

    @classmethod
    def q0(cls):
        return cls(Q0)

    @classmethod
    def e00(cls):
        a = np.zeros((4, 4))
        a[0, 0] = 1.0
        return cls(a)

    @classmethod
    def qab(cls, a, b):
        if a == b or not (0 <= a < 4 and 0 <= b < 4):
            raise ValueError(f"bad antisymmetric index pair ({a}, {b})")
        m = np.zeros((4, 4))
        m[a, b] = 1.0
        m[b, a] = -1.0
        return cls(m)

    @classmethod
    def parse(cls, text):
        """Read a preset name ("q0", "e00", "qab:01", "zero") or 16 reals in row-major order.

        Presets may be scaled and summed, e.g. "-2*q0" or "2*q0 + qab:01".
        """
        s = str(text).strip()
        try:
            vals = [float(x) for x in s.replace(",", " ").split()]
        except ValueError:
            vals = None
        if vals is not None:
            if len(vals) != 16:
                raise ValueError(f"expected 16 reals, got {len(vals)}")
            return cls(np.array(vals).reshape(4, 4))
        total = np.zeros((4, 4))
        for term in s.replace("-", "+-").split("+"):
            term = term.strip()
            if not term:
                continue
            coef = 1.0
            if "*" in term:
                c, term = term.split("*", 1)
                c = c.strip()
                coef = -1.0 if c == "-" else float(c)
                term = term.strip()
            elif term.startswith("-"):
                coef, term = -1.0, term[1:].strip()
            total += coef * _preset(term).entries
        return cls(total)


def _preset(name):
    name = name.lower()
    if name == "q0":
        return CoeffTensor.q0()
    if name == "e00":
        return CoeffTensor.e00()
    if name in ("zero", "0", "none"):
        return CoeffTensor.zero()
    if name.startswith("qab:") and len(name) == 6 and name[4:].isdigit():
        return CoeffTensor.qab(int(name[4]), int(name[5]))
    raise ValueError(f"unknown tensor preset '{name}'")


@dataclass(frozen=True)
class NullDecomposition:
    q0_coefficient: float
    qab_coefficients: np.ndarray
    residual: np.ndarray
    residual_norm: float
    is_null: bool

    def reconstruct(self):
        return self.q0_coefficient * Q0 + self.qab_coefficients + self.residual


def decompose_null(tensor, tol=NULL_TOL):
    """Split into c*Q0 + sum c_ab Q_ab + residual.

    The antisymmetric part is always null. A symmetric form vanishes on the
    whole light cone only if it is a multiple of Q0, so c is the Frobenius
    projection of the symmetric part on Q0 and the residual is what is left.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = tensor.entries
    anti = 0.5 * (a - a.T)
    sym = 0.5 * (a + a.T)
    c = float(np.sum(sym * Q0) / 4.0)
    res = sym - c * Q0
    norm = float(np.linalg.norm(res))
    return NullDecomposition(c, anti, res, norm, norm <= tol)


def is_null(tensor, tol=NULL_TOL):
    return decompose_null(tensor, tol).is_null


def _icosahedron():
    g = (1.0 + np.sqrt(5.0)) / 2.0
    pts = []
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            pts += [(0.0, s1, s2 * g), (s1, s2 * g, 0.0), (s2 * g, 0.0, s1)]
    return np.array(pts)


def cone_directions(samples=0, seed=0):
    """32 fixed unit vectors (axes, icosahedron, cube corners, face diagonals) plus `samples` random ones."""
    axes = np.vstack([np.eye(3), -np.eye(3)])
    cube = np.array([(a, b, c) for a in (-1, 1) for b in (-1, 1) for c in (-1, 1)], float)
    diag = np.array([(1, 1, 0), (1, 0, 1), (0, 1, 1), (1, -1, 0), (1, 0, -1), (0, 1, -1)], float)
    fixed = np.vstack([axes, _icosahedron(), cube, diag])
    if samples > 0:
        rng = np.random.default_rng(seed)
        fixed = np.vstack([fixed, rng.normal(size=(samples, 3))])
    return fixed / np.linalg.norm(fixed, axis=1)[:, None]


def verify_null_on_cone(tensor, samples=200, seed=0):
    """max |A^{mu nu} xi_mu xi_nu| over null covectors xi = (+-1, w), |w| = 1."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    w = cone_directions(samples, seed)
    worst = 0.0
    for x0 in (1.0, -1.0):
        xi = np.hstack([np.full((len(w), 1), x0), w])
        vals = np.einsum("ni,ij,nj->n", xi, tensor.entries, xi)
        worst = max(worst, float(np.max(np.abs(vals))))
    return worst


def radial_coefficients(tensor):
    """(A^{00}, spatial trace / 3) of the symmetric part.

    In radial symmetry B^{mu nu} d_mu f d_nu g reduces to
    a00 * f_t g_t + s * (f_r g_r + ang_f ang_g); mixed A^{0i} terms and the
    antisymmetric part average to zero over the sphere.
    """
    sym = tensor.sym
    return float(sym[0, 0]), float(np.trace(sym[1:, 1:]) / 3.0)


def eval_quadratic_radial(tensor, grad1, grad2):
    """B^{mu nu} d_mu phi1 d_nu phi2 for spherically symmetric (or single-mode) fields.

    Works elementwise on arrays. Angular components are only admitted for
    null tensors.
    """
    a00, s = radial_coefficients(tensor)
    g1 = RadialGradient(*grad1)
    g2 = RadialGradient(*grad2)
    if (np.any(np.asarray(g1.ang) != 0) or np.any(np.asarray(g2.ang) != 0)) and not is_null(tensor):
        raise ValueError("angular components are only defined for null tensors")
    return a00 * g1.dt * g2.dt + s * (g1.dr * g2.dr + g1.ang * g2.ang)


def nullform_expansion_check(field1, field2, tensor, tol=NULL_TOL):
    """Max mismatch of r^2 N(phi1, phi2) = c (phi1 phi2 + r (phi1 phi2)_r) + N(psi1, psi2).

    c is the Q0 coefficient of the null tensor (c = 1 for Q0 itself). On the
    t = tau part of the slices (phi1 phi2)_r is a centred finite difference;
    on the null part it is built from the slice derivatives.
    """
    dec = decompose_null(tensor, tol)
    if not dec.is_null:
        raise NotNull(f"tensor is not null (residual {dec.residual_norm:.3e})")
    c = dec.q0_coefficient
    worst = 0.0

    r = np.asarray(field1.r_in)
    if r.size >= 3:
        if not np.allclose(r, field2.r_in):
            raise ValueError("slices must share sample points")
        p1, p2 = field1.phi_in, field2.phi_in
        lhs = r**2 * eval_quadratic_radial(
            tensor, (field1.phi_t_in, field1.phi_r_in, field1.angphi_in), (field2.phi_t_in, field2.phi_r_in, field2.angphi_in)
        )
        prod = p1 * p2
        dprod = np.gradient(prod, r, edge_order=2)
        gpsi1 = (r * field1.phi_t_in, p1 + r * field1.phi_r_in, r * field1.angphi_in)
        gpsi2 = (r * field2.phi_t_in, p2 + r * field2.phi_r_in, r * field2.angphi_in)
        rhs = c * (prod + r * dprod) + eval_quadratic_radial(tensor, gpsi1, gpsi2)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))

    r = np.asarray(field1.r_ex)
    if r.size >= 1:
        if not np.allclose(r, field2.r_ex):
            raise ValueError("slices must share sample points")
        g1 = _null_part_gradient(field1)
        g2 = _null_part_gradient(field2)
        lhs = r**2 * eval_quadratic_radial(tensor, g1[1:4], g2[1:4])
        p1, p2 = g1[0], g2[0]
        dprod = g1[2] * p2 + p1 * g2[2]
        gpsi1 = (r * g1[1], p1 + r * g1[2], r * g1[3])
        gpsi2 = (r * g2[1], p2 + r * g2[2], r * g2[3])
        rhs = c * (p1 * p2 + r * dprod) + eval_quadratic_radial(tensor, gpsi1, gpsi2)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def _null_part_gradient(sl):
    r = sl.r_ex
    phi = sl.phi_ex
    psi_t = 0.5 * (sl.dupsi + sl.dvpsi)
    psi_r = 0.5 * (sl.dvpsi - sl.dupsi)
    return phi, psi_t / r, (psi_r - phi) / r, sl.ang_ex / r


def lnull_bound_ratio(tensor, dPhi_t, dPhi_r, phi, phi_t, phi_r, r, ang=0.0):
    """Worst ratio |r N| / A (|dPhi| |dbar_v psi| + |d_v Phi| |d psi| + |dPhi| |phi|), A = 10 max|B|.

    Points where the bound vanishes and |r N| does too are skipped.
    """
    big_a = 10.0 * float(np.max(np.abs(tensor.entries)))
    r = np.asarray(r, float)
    psi_t = r * phi_t
    psi_r = phi + r * phi_r
    psi_ang = r * np.asarray(ang)
    rn = r * eval_quadratic_radial(tensor, (dPhi_t, dPhi_r, 0.0), (phi_t, phi_r, 0.0 * phi))
    dphi_abs = np.hypot(dPhi_t, dPhi_r)
    dvbar = np.hypot(psi_t + psi_r, psi_ang)
    dpsi = np.sqrt(psi_t**2 + psi_r**2 + psi_ang**2)
    bound = big_a * (dphi_abs * dvbar + np.abs(dPhi_t + dPhi_r) * dpsi + dphi_abs * np.abs(phi))
    rn = np.abs(np.broadcast_to(rn, np.shape(bound)))
    mask = bound > 0
    if np.any(rn[~mask] > 0):
        return np.inf
    if not np.any(mask):
        return 0.0
    return float(np.max(rn[mask] / bound[mask]))
