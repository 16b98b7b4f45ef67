"""Quasiperiodic scalar fields on the N-torus.

A field is a finite real trigonometric polynomial

    f(w) = sum_m  c_m cos(2 pi m.w) + s_m sin(2 pi m.w),

stored with one representative per pair {m, -m}.  Points of the torus are
arrays with coordinates in [0, 1).  Everything here is vectorised over a
leading batch axis: a single point has shape ``(N,)`` and a batch ``(P, N)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ResonantModeError

TWO_PI = 2.0 * np.pi


def wrap(omega):
    """Canonical representative in [0, 1); 1.0 (and round-off just below 0) map to 0."""
    omega = np.asarray(omega, dtype=float)
    r = omega - np.floor(omega)
    return np.where(r >= 1.0, 0.0, r)


def torus_delta(a, b):
    """Signed shortest difference a - b on the torus, componentwise in [-1/2, 1/2)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return d - np.floor(d + 0.5)


def torus_distance(a, b):
    return np.linalg.norm(torus_delta(a, b), axis=-1)


def frequency_matrix(A) -> np.ndarray:
    """Validate an N x n frequency matrix (N >= n, A^T A of full rank)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2:
        raise ConfigError("frequency matrix must be two-dimensional", shape=A.shape)
    N, n = A.shape
    if N < n:
        raise ConfigError(f"frequency matrix has N={N} < n={n}", N=N, n=n)
    if np.linalg.matrix_rank(A.T @ A) < n:
        raise ConfigError("A^T A is rank deficient", N=N, n=n)
    return A


def translate(omega, A, x):
    """theta_x omega = omega + A x (mod 1)."""
    omega = np.asarray(omega, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    x = np.asarray(x, dtype=float)
    if omega.shape[-1] != A.shape[0] or x.shape[-1] != A.shape[1]:
        raise ConfigError(
            "dimension mismatch in translate",
            omega=omega.shape, A=A.shape, x=x.shape,
        )
    return wrap(omega + x @ A.T)


@dataclass(frozen=True)
class FourierMode:
    m: tuple
    c: float = 0.0
    s: float = 0.0

    def canonical(self) -> "FourierMode":
        """Representative with first nonzero entry positive (sin flips sign)."""
        m = tuple(int(v) for v in self.m)
        for v in m:
            if v != 0:
                if v < 0:
                    return FourierMode(tuple(-k for k in m), self.c, -self.s)
                break
        return FourierMode(m, float(self.c), float(self.s))


class FieldJet(NamedTuple):
    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray


@dataclass(frozen=True)
class QuasiPeriodicScalar:
    """Real trigonometric polynomial on T^N."""

    modes: tuple
    N: int
    _m: np.ndarray = field(init=False, repr=False, compare=False)
    _c: np.ndarray = field(init=False, repr=False, compare=False)
    _s: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        merged = {}
        for mode in self.modes:
            if len(mode.m) != self.N:
                raise ConfigError(f"mode {mode.m} does not have length N={self.N}")
            cm = mode.canonical()
            if cm.m in merged:
                c0, s0 = merged[cm.m]
                merged[cm.m] = (c0 + cm.c, s0 + cm.s)
            else:
                merged[cm.m] = (cm.c, cm.s)
        canon = tuple(FourierMode(m, c, s) for m, (c, s) in merged.items())
        object.__setattr__(self, "modes", canon)
        m = np.array([md.m for md in canon], dtype=float).reshape(len(canon), self.N)
        object.__setattr__(self, "_m", m)
        object.__setattr__(self, "_c", np.array([md.c for md in canon], dtype=float))
        object.__setattr__(self, "_s", np.array([md.s for md in canon], dtype=float))

    @classmethod
    def from_terms(cls, N, terms):
        """Build from ``(m, c, s)`` triples."""
        return cls(tuple(FourierMode(tuple(m), c, s) for m, c, s in terms), N)

    @classmethod
    def zero(cls, N):
        return cls((), N)

    def scaled(self, factor) -> "QuasiPeriodicScalar":
        return QuasiPeriodicScalar(
            tuple(FourierMode(md.m, factor * md.c, factor * md.s) for md in self.modes), self.N
        )

    @property
    def mode_matrix(self) -> np.ndarray:
        return self._m

    @property
    def is_zero(self) -> bool:
        return not np.any((self._c != 0) | (self._s != 0))

    @property
    def has_mean(self) -> bool:
        """True when an m = 0 mode with nonzero cosine coefficient is present."""
        for md in self.modes:
            if not any(md.m) and md.c != 0.0:
                return True
        return False

    def amplitudes(self) -> np.ndarray:
        return np.hypot(self._c, self._s)

    def _phases(self, omega):
        return TWO_PI * (np.asarray(omega, dtype=float) @ self._m.T)

    def value(self, omega):
        th = self._phases(omega)
        return np.cos(th) @ self._c + np.sin(th) @ self._s

    def jet(self, omega) -> FieldJet:
        """Value, gradient and Hessian (exact) at one point or a batch."""
        omega = np.asarray(omega, dtype=float)
        th = self._phases(omega)
        co, si = np.cos(th), np.sin(th)
        val = co @ self._c + si @ self._s
        dcoef = TWO_PI * (-si * self._c + co * self._s)
        grad = dcoef @ self._m
        hcoef = -(TWO_PI**2) * (co * self._c + si * self._s)
        outer = np.einsum("ki,kj->kij", self._m, self._m)
        hess = np.tensordot(hcoef, outer, axes=(-1, 0))
        return FieldJet(val, grad, hess)

    def pullback_jet(self, A, omega, x):
        """Jet of x -> f(omega + A x): value, A^T grad f, A^T D^2 f A."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        pt = translate(omega, A, x)
        mA = self._m @ A
        th = self._phases(pt)
        co, si = np.cos(th), np.sin(th)
        val = co @ self._c + si @ self._s
        g = (TWO_PI * (-si * self._c + co * self._s)) @ mA
        hcoef = -(TWO_PI**2) * (co * self._c + si * self._s)
        H = np.tensordot(hcoef, np.einsum("ki,kj->kij", mA, mA), axes=(-1, 0))
        return val, g, H

    def pulled_gradient(self, A, omega_points):
        """A^T grad f and A^T D^2 f A evaluated directly at torus points (no translate)."""
        mA = self._m @ np.atleast_2d(A)
        th = self._phases(omega_points)
        co, si = np.cos(th), np.sin(th)
        g = (TWO_PI * (-si * self._c + co * self._s)) @ mA
        hcoef = -(TWO_PI**2) * (co * self._c + si * self._s)
        H = np.tensordot(hcoef, np.einsum("ki,kj->kij", mA, mA), axes=(-1, 0))
        return g, H

    def fourier_bounds(self, A=None):
        """Rigorous sup bounds (|f|, |grad|, ||hessian||) of the (pulled-back) field."""
        m = self._m if A is None else self._m @ np.atleast_2d(A)
        amp = self.amplitudes()
        k = np.linalg.norm(m, axis=1)
        return float(amp.sum()), float(TWO_PI * (amp * k).sum()), float(TWO_PI**2 * (amp * k**2).sum())

    def to_terms(self):
        return [(list(md.m), md.c, md.s) for md in self.modes]


def eval_jet(f: QuasiPeriodicScalar, omega) -> FieldJet:
    return f.jet(omega)


def pullback_jet(f: QuasiPeriodicScalar, A, omega, x):
    return f.pullback_jet(A, omega, x)


def spectral_h_minus1(f: QuasiPeriodicScalar, A) -> float:
    """Fourier form of the H^{-1} norm: sum |a_m|^2 |mA|^{-2} with |a_m|^2 = (c^2 + s^2)/4.

    Raises ResonantModeError when a mode with nonzero coefficient has mA = 0.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    total = 0.0
    for md in f.modes:
        a2 = (md.c**2 + md.s**2) / 4.0
        if a2 == 0.0:
            continue
        mA = np.asarray(md.m, dtype=float) @ A
        nrm2 = float(mA @ mA)
        if nrm2 <= 1e-24:
            raise ResonantModeError(f"mode {md.m} is resonant (mA = 0)", m=list(md.m))
        total += a2 / nrm2
    return total


@dataclass
class ErgodicityReport:
    radius: int
    min_norm: float
    argmin: tuple
    zeros: list
    diophantine_exponent: float

    @property
    def ergodic(self) -> bool:
        return not self.zeros


def ergodicity_check(A, radius: int, zero_tol: float = 1e-12) -> ErgodicityReport:
    """Scan nonzero m in Z^N with |m|_inf <= radius for resonances mA = 0.

    The Diophantine exponent is the smallest k with |mA| >= |m|^{-k} on the
    scanned window (Euclidean |m|); a window statistic only.
    """
    if radius < 1:
        raise ConfigError("radius must be >= 1")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    N = A.shape[0]
    rng1 = np.arange(-radius, radius + 1)
    best = (math.inf, None)
    zeros = []
    k_exp = -math.inf
    # chunk over the first coordinate to bound memory
    rest = np.array(list(itertools.product(rng1, repeat=N - 1)), dtype=float).reshape(-1, N - 1)
    for m0 in range(0, radius + 1):
        ms = np.hstack([np.full((rest.shape[0], 1), m0, dtype=float), rest])
        if m0 == 0:
            # representative of {m,-m}: first nonzero entry positive
            keep = np.array([_first_nonzero_positive(r) for r in ms])
            ms = ms[keep]
        if ms.size == 0:
            continue
        norms = np.linalg.norm(ms @ A, axis=1)
        mlen = np.linalg.norm(ms, axis=1)
        z = norms <= zero_tol
        for row in ms[z]:
            zeros.append(tuple(int(v) for v in row))
        i = int(np.argmin(norms))
        if norms[i] < best[0]:
            best = (float(norms[i]), tuple(int(v) for v in ms[i]))
        nz = ~z & (mlen > 1.0)
        if np.any(nz):
            k_exp = max(k_exp, float(np.max(-np.log(norms[nz]) / np.log(mlen[nz]))))
    return ErgodicityReport(radius, best[0], best[1], zeros, max(k_exp, 0.0))


def _first_nonzero_positive(row):
    for v in row:
        if v != 0:
            return v > 0
    return False


def spawn_rngs(seed: int, count: int) -> list:
    """Independent, reproducible generators derived from (seed, index)."""
    children = np.random.SeedSequence(int(seed)).spawn(int(count))
    return [np.random.default_rng(c) for c in children]


def sample_uniform(rng: np.random.Generator, N: int, size: int | None = None):
    """Uniform (Haar) samples on T^N; shape (N,) or (size, N)."""
    shape = (N,) if size is None else (int(size), N)
    return rng.random(shape)


def random_field(rng, N, n_modes=4, max_freq=2, amplitude=0.05, mean_zero=True) -> QuasiPeriodicScalar:
    """Random trigonometric polynomial, handy for tests and demos."""
    terms = []
    seen = set()
    while len(terms) < n_modes:
        m = tuple(int(v) for v in rng.integers(-max_freq, max_freq + 1, size=N))
        if mean_zero and not any(m):
            continue
        md = FourierMode(m).canonical()
        if md.m in seen:
            continue
        seen.add(md.m)
        c, s = amplitude * rng.standard_normal(2)
        terms.append((md.m, c, s))
    return QuasiPeriodicScalar.from_terms(N, terms)


def resolution_pitch(f: QuasiPeriodicScalar, A) -> float:
    """Grid pitch giving about four seeds per oscillation of the pulled-back field."""
    if f.is_zero:
        return 1.0
    F = float(np.max(np.linalg.norm(f.mode_matrix @ np.atleast_2d(A), axis=1)))
    return 1.0 if F == 0 else min(1.0, 1.0 / (4.0 * F))


def named_constant(token) -> float:
    """Resolve a number or a named irrational ("sqrt2", "golden", "sqrt2-1", ...)."""
    if isinstance(token, (int, float)):
        return float(token)
    s = str(token).strip().replace(" ", "")
    table = {
        "sqrt2": math.sqrt(2.0),
        "sqrt3": math.sqrt(3.0),
        "sqrt5": math.sqrt(5.0),
        "golden": (1.0 + math.sqrt(5.0)) / 2.0,
        "pi": math.pi,
    }
    if s in table:
        return table[s]
    for op in ("-", "+", "*", "/"):
        # binary expression against a named constant, e.g. "sqrt2-1" or "golden/2"
        idx = s.rfind(op)
        if idx > 0:
            left, right = s[:idx], s[idx + 1:]
            try:
                a, b = named_constant(left), named_constant(right)
            except ConfigError:
                continue
            return {"-": a - b, "+": a + b, "*": a * b, "/": a / b}[op]
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"unknown numeric token {token!r}") from None
