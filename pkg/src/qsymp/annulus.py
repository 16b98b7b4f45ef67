"""Annulus twist maps S = R x [-1, 1] built from a rotation profile omega(q, a).

The profile family is omega(q, a) = a * c(q) with c(q) = scale * (1 + beta * phi(q))
and phi a finite trigonometric sum with real (possibly incommensurate)
frequencies.  The map F is defined implicitly by a generating function G(q, Q):

    F(q, -G_q(q, Q)) = (Q, G_Q(q, Q)),

so its fixed points sit over the critical points of psi(q) = G(q, q).

Two readings of G are provided.  ``"literal"`` integrates omega(q, a) over
a in [q + Q^-, Q]; ``"shifted"`` integrates omega(q, s) over
s in [0, Q - q - Q^-], i.e. uses the relative coordinate that also appears in
the twist-condition function Gt(q, Q) = omega(q, Q - q - Q^-).  Only the shifted
reading satisfies the generating relation, so the map, its fixed points and
the +/- densities use it; the literal reading is kept for the closed-form
values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import bisect, brentq

from .errors import ConfigError, OutsideAnnulusError
from .twist import fd_jacobian

TWO_PI = 2.0 * math.pi
QUAD_TOL = 1e-12
GEN_TOL = 1e-10
DEG_TOL = 1e-8


@dataclass(frozen=True)
class OmegaProfile:
    """omega(q, a) = a * scale * (1 + beta * phi(q)), phi = sum c cos 2pi f q + s sin 2pi f q."""

    scale: float = 1.0
    beta: float = 0.0
    terms: tuple = ()
    beta_max: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((float(f), float(c), float(s)) for f, c, s in self.terms))
        if self.scale <= 0:
            raise ConfigError("profile scale must be positive")
        if abs(self.beta) * self.phi_bound() > self.beta_max:
            raise ConfigError("|beta * phi| may reach beta_max; omega(q, a) > 0 for a > 0 is not guaranteed",
                              bound=abs(self.beta) * self.phi_bound(), beta_max=self.beta_max)

    def phi_bound(self) -> float:
        return float(sum(math.hypot(c, s) for _, c, s in self.terms))

    def _phi(self, q, order=0):
        q = np.asarray(q, dtype=float)
        out = np.zeros_like(q)
        for f, c, s in self.terms:
            k = TWO_PI * f
            th = k * q
            co, si = np.cos(th), np.sin(th)
            # derivatives of c cos + s sin cycle through (c, s) -> (s k, -c k) -> ...
            if order == 0:
                out = out + c * co + s * si
            elif order == 1:
                out = out + k * (-c * si + s * co)
            elif order == 2:
                out = out - k * k * (c * co + s * si)
            else:
                out = out + k**3 * (c * si - s * co)
        return out

    def c(self, q, order=0):
        """c(q) and its derivatives."""
        base = 1.0 if order == 0 else 0.0
        return self.scale * (base + self.beta * self._phi(q, order))

    def omega(self, q, a):
        return a * self.c(q)

    def frequencies(self) -> list:
        return sorted({abs(f) for f, _, _ in self.terms if f != 0})


def eta(profile: OmegaProfile, q: float) -> float:
    """inf{a : omega(q, a) = 2}, by bisection to 1e-12."""
    g = lambda a: profile.omega(q, a) - 2.0
    hi = 1.0
    while g(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise ConfigError("profile never reaches 2: eta is infinite", q=q)
    return float(bisect(g, 0.0, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200))


def q_minus(profile: OmegaProfile, q: float, closed_form: bool = False) -> float:
    """(1/2) int_0^eta omega(q, a) da - eta; quadrature, or the closed form -1/c(q)."""
    if closed_form:
        return float(-1.0 / profile.c(q))
    e = eta(profile, q)
    val, _ = quad(lambda a: profile.omega(q, a), 0.0, e, epsabs=QUAD_TOL, epsrel=QUAD_TOL)
    return 0.5 * val - e


def gen_g(profile: OmegaProfile, q: float, Q: float, convention: str = "literal") -> float:
    """Generating function G(q, Q) by quadrature (see module docstring for the conventions)."""
    qm = q_minus(profile, q)
    if convention == "literal":
        val, _ = quad(lambda a: profile.omega(q, a), q + qm, Q, epsabs=QUAD_TOL, epsrel=QUAD_TOL)
    elif convention == "shifted":
        val, _ = quad(lambda s: profile.omega(q, s), 0.0, Q - q - qm, epsabs=QUAD_TOL, epsrel=QUAD_TOL)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return val - (Q - q)


def psi(profile: OmegaProfile, q: float, convention: str = "literal") -> float:
    return gen_g(profile, q, q, convention)


# closed forms for the shifted reading, u = Q - q:
#   G = c u^2 / 2 + 1 / (2c),  G_Q = c u,  G_q = c' u^2 / 2 - c u - c' / (2 c^2)


def gen_derivatives(profile: OmegaProfile, q, Q):
    """(G_q, G_Q, G_qq, G_qQ, G_QQ) of the shifted generating function."""
    u = np.asarray(Q, dtype=float) - q
    c, c1, c2 = profile.c(q), profile.c(q, 1), profile.c(q, 2)
    Gq = 0.5 * c1 * u * u - c * u - c1 / (2 * c * c)
    GQ = c * u
    Gqq = 0.5 * c2 * u * u - 2 * c1 * u + c - c2 / (2 * c * c) + c1 * c1 / c**3
    GqQ = c1 * u - c
    GQQ = c
    return Gq, GQ, Gqq, GqQ, GQQ


def psi_shifted_derivatives(profile: OmegaProfile, q):
    """psi = 1/(2c): (psi', psi'')."""
    c, c1, c2 = profile.c(q), profile.c(q, 1), profile.c(q, 2)
    return -c1 / (2 * c * c), (2 * c1 * c1 - c * c2) / (2 * c**3)


def twist_condition(profile: OmegaProfile, probes: int = 4096, q_range=(0.0, 100.0)) -> float:
    """max of Gt_q(q, Q) = c'(q) u - c(q) over probes on the full fibres |u| <= 1/c.

    Negative means the profile is in the monotone-twist class; otherwise the
    map is only defined on the monotone branch of each fibre.
    """
    q = np.linspace(*q_range, probes)
    c, c1 = profile.c(q), profile.c(q, 1)
    return float(np.max(np.abs(c1) / c - c))


def fiber_range(profile: OmegaProfile, q: float):
    """Monotone part of the fibre over q and the p-values at its ends.

    The fibre is Q in [q + Q^-, q + Q^- + eta], i.e. u = Q - q in [-1/c, 1/c].
    p(u) = -G_q is increasing while G_qQ = c' u - c < 0; when the twist
    condition fails the fibre is cut at u = c / c' on the branch through u = 0.
    """
    c, c1 = profile.c(q), profile.c(q, 1)
    lo, hi = -1.0 / c, 1.0 / c
    # the cut u = c / c' only matters once it falls inside |u| <= 1/c
    if c1 > c * c:
        hi = c / c1
    elif c1 < -c * c:
        lo = c / c1
    p = lambda u: -(0.5 * c1 * u * u - c * u - c1 / (2 * c * c))
    return (q + lo, q + hi), (p(lo), p(hi))


def twist_from_gen(profile: OmegaProfile, q: float, p: float):
    """Solve -G_q(q, Q) = p for Q on the monotone fibre and return (Q, G_Q(q, Q))."""
    (Qlo, Qhi), (plo, phi_) = fiber_range(profile, q)
    if not (plo < p < phi_):
        raise OutsideAnnulusError("p is outside the open fibre range of the annulus", q=q, p=p, range=(plo, phi_))
    f = lambda Q: -gen_derivatives(profile, q, Q)[0] - p
    try:
        Q = brentq(f, Qlo, Qhi, xtol=1e-15)
    except ValueError:
        # p within round-off of a fibre end
        raise OutsideAnnulusError("p is at the edge of the fibre range", q=q, p=p, range=(plo, phi_)) from None
    for _ in range(2):
        Gq, _, _, GqQ, _ = gen_derivatives(profile, q, Q)
        Qn = Q - (-Gq - p) / (-GqQ)
        if Qlo <= Qn <= Qhi:
            Q = Qn
    res = abs(f(Q))
    if res > GEN_TOL:
        raise OutsideAnnulusError("generating relation not solved to tolerance", residual=res)
    return float(Q), float(gen_derivatives(profile, q, Q)[1])


def twist_map_2d(profile: OmegaProfile, x) -> np.ndarray:
    q, p = x
    return np.array(twist_from_gen(profile, q, p))


def gen_residual(profile: OmegaProfile, q: float, Q: float) -> float:
    """|F(q, -G_q) - (Q, G_Q)| for the solved map."""
    Gq, GQ, *_ = gen_derivatives(profile, q, Q)
    img = np.array(twist_from_gen(profile, q, -Gq))
    return float(np.max(np.abs(img - np.array([Q, GQ]))))


@dataclass
class AnnulusFixedPoint:
    q: float
    p: float
    type: str
    eigenvalues: np.ndarray
    psi2: float
    degenerate: bool = False


@dataclass
class AnnulusCensus:
    points: list
    q_range: tuple
    lam_plus: float
    lam_minus: float
    elliptic: int
    degenerate: bool
    warnings: list = field(default_factory=list)


def _classify(eigs) -> str:
    if np.all(np.abs(eigs.imag) < 1e-12):
        if np.all(eigs.real > 0):
            return "+"
        if np.all(eigs.real < 0):
            return "-"
    return "elliptic"


def fixed_points_2d(profile: OmegaProfile, q_range=(0.0, 1.0), pitch: float | None = None,
                    fd_step: float = 1e-6) -> AnnulusCensus:
    """Fixed points over the critical points of psi on ``q_range`` and the +/- densities.

    psi' is scanned for sign changes, roots are refined with brentq, and each
    root q* gives the fixed point (q*, -G_q(q*, q*)).  Its type comes from the
    eigenvalues of a central-difference Jacobian of F.
    """
    q0, q1 = map(float, q_range)
    freqs = profile.frequencies()
    notes = []
    if not freqs or profile.beta == 0:
        # psi is constant: the whole line p = 0 is fixed, nothing isolated to count
        notes.append("psi is constant: fixed-point set is a whole curve (non-isolated), lambda+- reported as 0")
        return AnnulusCensus([], (q0, q1), 0.0, 0.0, 0, True, notes)
    if pitch is None:
        pitch = 1.0 / (16.0 * max(freqs))
    m = int(math.ceil((q1 - q0) / pitch))
    grid = np.linspace(q0, q1, m + 1)
    d1 = lambda q: psi_shifted_derivatives(profile, q)[0]
    vals = d1(grid)
    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        roots.append(brentq(d1, grid[i], grid[i + 1], xtol=1e-15))
    roots.extend(grid[:-1][vals[:-1] == 0.0])
    roots = sorted(r for r in roots if q0 <= r < q1)
    pts = []
    for r in roots:
        p = float(-gen_derivatives(profile, r, r)[0])
        J = fd_jacobian(lambda x: twist_map_2d(profile, x), np.array([r, p]), fd_step)
        eigs = np.linalg.eigvals(J)
        s2 = float(psi_shifted_derivatives(profile, r)[1])
        deg = abs(s2) <= DEG_TOL
        pts.append(AnnulusFixedPoint(float(r), p, "degenerate" if deg else _classify(eigs), eigs, s2, deg))
    L = q1 - q0
    plus = sum(1 for x in pts if x.type == "+")
    minus = sum(1 for x in pts if x.type == "-")
    ell = sum(1 for x in pts if x.type == "elliptic")
    anydeg = any(x.degenerate for x in pts)
    if anydeg:
        notes.append("degenerate critical point of psi (|psi''| <= 1e-8)")
    return AnnulusCensus(pts, (q0, q1), plus / L, minus / L, ell, anydeg, notes)
