"""Expected critical-point density by Kac-Rice Monte Carlo and by the coarea integral.

Both estimators work on the torus: with g_hat = A^T grad w_hat and
Dg_hat = A^T D^2 w_hat A,

* Kac-Rice:  E[ 1(|g_hat| <= eps) 1(Dg_hat in U) |det Dg_hat| ] / |B_eps|
  over uniform omega (converges to the density as eps -> 0);
* coarea:    integral over the level set {g_hat = 0} of
  |det(A^T D^2 w A)| / det(A^T (D^2 w)^2 A)^{1/2} against (N - n)-dimensional
  measure.  For N = n this is a finite count over the fundamental cell; for
  N - n = 1 the level set is a union of closed curves that are traced.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .critical import enumerate_critical, ergodic_density_curve, in_class
from .errors import DegenerateFieldError, NumericalError, OpenComponentError, UnsupportedCodimensionError
from .parallel import map_shards, pairwise_reduce, seed_sequences, shard_sizes
from .torus import QuasiPeriodicScalar, torus_delta, wrap

CHUNK = 100_000


def ball_volume(n: int, r: float) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * r**n


@dataclass
class KacRiceEstimate:
    value: float
    stderr: float
    epsilon: float
    samples: int
    hits: int = 0
    diagnostic: str = ""


def _kr_shard(f, A, selector, eps, n, seedseq):
    rng = np.random.default_rng(seedseq)
    s = ss = 0.0
    hits = 0
    left = n
    while left > 0:
        k = min(CHUNK, left)
        left -= k
        pts = rng.random((k, f.N))
        g, H = f.pulled_gradient(A, pts)
        near = np.linalg.norm(g, axis=1) <= eps
        hits += int(near.sum())
        if not near.any():
            continue
        Hn = H[near]
        eig = np.linalg.eigvalsh(Hn)
        w = np.abs(np.linalg.det(Hn)) * in_class(eig, selector)
        s += float(w.sum())
        ss += float((w * w).sum())
    return np.array([s, ss, hits, n], dtype=float)


def kac_rice_mc(f: QuasiPeriodicScalar, A, eps: float, samples: int, seed: int = 0,
                selector: str = "any", shards: int = 8, threads: int = 1) -> KacRiceEstimate:
    """eps-smoothed Kac-Rice estimate of the density of zeros of g_hat in class U.

    Samples are split into ``shards`` independent streams derived from ``seed``;
    results are bit-identical for fixed (seed, shards) whatever ``threads`` is.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    sizes = shard_sizes(samples, shards)
    seqs = seed_sequences(seed, shards)
    parts = map_shards(lambda i: _kr_shard(f, A, selector, eps, sizes[i], seqs[i]), range(shards), threads)
    s, ss, hits, cnt = pairwise_reduce(parts)
    vol = ball_volume(n, eps)
    mean = s / cnt
    var = max(ss / cnt - mean * mean, 0.0) * cnt / max(cnt - 1, 1)
    est = KacRiceEstimate(mean / vol, math.sqrt(var / cnt) / vol, eps, int(cnt), int(hits))
    if hits == 0:
        est.diagnostic = "epsilon too small: no samples with |g| <= eps"
    return est


@dataclass
class KacRiceSchedule:
    estimates: list
    stable: bool
    chosen: int

    @property
    def value(self) -> float:
        return self.estimates[self.chosen].value

    @property
    def stderr(self) -> float:
        return self.estimates[self.chosen].stderr


def kac_rice_schedule(f, A, eps_schedule=(0.1, 0.05, 0.025), samples=1_000_000, seed=0,
                      selector="any", shards=8, threads=1, nsigma=2.0, rel_precision=0.015) -> KacRiceSchedule:
    """Run the estimator over a decreasing eps schedule.

    ``stable`` means the last two estimates agree within ``nsigma`` combined
    standard errors.  ``chosen`` is the smallest eps whose relative standard
    error is at most ``rel_precision`` (the least smoothing bias affordable at
    this sample count); the largest eps when none qualifies.
    """
    eps_schedule = sorted((float(e) for e in eps_schedule), reverse=True)
    # each eps gets its own stream so the estimates are independent
    ests = [
        kac_rice_mc(f, A, e, samples, seed=seed + 7919 * i, selector=selector, shards=shards, threads=threads)
        for i, e in enumerate(eps_schedule)
    ]

    def agree(a, b):
        se = math.hypot(a.stderr, b.stderr)
        return abs(a.value - b.value) <= nsigma * se or (se == 0 and a.value == b.value)

    stable = bool(len(ests) < 2 or agree(ests[-1], ests[-2]))
    chosen = 0
    for i, e in enumerate(ests):
        if e.stderr <= rel_precision * abs(e.value):
            chosen = i
    return KacRiceSchedule(ests, stable, chosen)


# ---------------------------------------------------------------------------
# level-set tracing (codimension one)


@dataclass
class LevelCurve:
    vertices: np.ndarray
    arclength: float
    closed: bool
    closure_gap: float
    step: float
    integral: float = 0.0
    min_jacobian: float = 0.0
    seg_lengths: np.ndarray | None = None

    def unwrapped(self) -> np.ndarray:
        """Vertices lifted to R^N (continuous polyline) for plotting/export."""
        d = torus_delta(self.vertices[1:], self.vertices[:-1])
        return np.vstack([self.vertices[:1], self.vertices[:1] + np.cumsum(d, axis=0)])


class _Curve:
    """Level set {g_hat = 0} of a field with N = n + 1 as an arclength ODE."""

    def __init__(self, f, A):
        self.f = f
        self.A = np.atleast_2d(A)
        self.mA = f.mode_matrix @ self.A  # (M, n)

    def jet(self, pts):
        pts = np.atleast_2d(pts)
        th = 2 * np.pi * pts @ self.f.mode_matrix.T
        co, si = np.cos(th), np.sin(th)
        dcoef = 2 * np.pi * (-si * self.f._c + co * self.f._s)
        hcoef = -((2 * np.pi) ** 2) * (co * self.f._c + si * self.f._s)
        g = dcoef @ self.mA
        # DS = A^T D^2 w (n x N)
        DS = np.einsum("pk,ki,kj->pij", hcoef, self.mA, self.f.mode_matrix)
        return g, DS

    def tangent(self, pt, ref=None):
        _, DS = self.jet(pt)
        t = _null_vector(DS[0])
        if ref is not None and t @ ref < 0:
            t = -t
        return t

    def project(self, pt, tvec=None, tol=1e-13, max_iter=30):
        """Newton onto the level set; with ``tvec`` the step is kept orthogonal to it."""
        x = np.array(pt, dtype=float)
        for _ in range(max_iter):
            g, DS = self.jet(x)
            g, DS = g[0], DS[0]
            if np.linalg.norm(g) <= tol:
                return x
            if tvec is None:
                dx = DS.T @ np.linalg.solve(DS @ DS.T, g)
            else:
                M = np.vstack([DS, tvec])
                dx = np.linalg.solve(M, np.concatenate([g, [0.0]]))
            x = x - dx
        g, _ = self.jet(x)
        if np.linalg.norm(g) > 1e-10:
            raise NumericalError("corrector failed to reach the level set", residual=float(np.linalg.norm(g)))
        return x

    def advance(self, x, t_ref, h):
        """RK4 along the unit tangent field, then a corrector; x is unwrapped."""
        k1 = self.tangent(x, t_ref)
        k2 = self.tangent(x + 0.5 * h * k1, k1)
        k3 = self.tangent(x + 0.5 * h * k2, k1)
        k4 = self.tangent(x + h * k3, k1)
        pred = x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        tp = self.tangent(pred, k1)
        y = self.project(pred, tp)
        return y, self.tangent(y, k1)


def _null_vector(DS):
    """Unit vector spanning ker DS for an n x (n+1) matrix."""
    if DS.shape == (2, 3):
        t = np.cross(DS[0], DS[1])
        nrm = np.linalg.norm(t)
        if nrm > 0:
            return t / nrm
    _, _, vt = np.linalg.svd(DS)
    return vt[-1]


def _coarea_weight(f, A, pts, selector):
    """Integrand |det(A^T D2 A)| / det(A^T D2^2 A)^(1/2) restricted to the index class."""
    _, H = f.pulled_gradient(A, pts)
    D2 = f.jet(pts).hessian
    AT = np.atleast_2d(A).T
    JJ = np.einsum("ij,pjk,pkl,lm->pim", AT, D2, D2, np.atleast_2d(A))
    jac = np.sqrt(np.abs(np.linalg.det(JJ)))
    detH = np.linalg.det(H)
    eig = np.linalg.eigvalsh(H)
    w = np.abs(detH) / jac * in_class(eig, selector, tol_deg=0.0)
    return w, jac, detH


def _seed_points(f, A, grid):
    """Grid cell centres on T^N not excluded by the Lipschitz bound, projected to the level set."""
    N = f.N
    c1 = (np.arange(grid) + 0.5) / grid
    pts = np.stack(np.meshgrid(*([c1] * N), indexing="ij"), axis=-1).reshape(-1, N)
    mA = f.mode_matrix @ np.atleast_2d(A)
    amp = f.amplitudes()
    L = (2 * np.pi) ** 2 * np.sum(amp * np.linalg.norm(mA, axis=1) * np.linalg.norm(f.mode_matrix, axis=1))
    g, _ = f.pulled_gradient(A, pts)
    keep = np.linalg.norm(g, axis=1) <= L * 0.5 * math.sqrt(N) / grid * 1.0001
    return pts[keep]


def trace_level_set(f: QuasiPeriodicScalar, A, step: float = 1e-2, grid: int | None = None,
                    max_length: float = 500.0, min_jacobian: float = 1e-6) -> list:
    """Closed components of {omega in T^N : A^T grad f(omega) = 0} for N - n = 1."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    N, n = A.shape
    if N - n != 1:
        raise UnsupportedCodimensionError(
            f"level-set tracing needs N - n = 1 (got N={N}, n={n}); use the finite-sum path for N = n",
            N=N, n=n,
        )
    if f.is_zero:
        raise DegenerateFieldError("zero field: the level set is the whole torus")
    if grid is None:
        F = float(np.max(np.linalg.norm(f.mode_matrix, axis=1)))
        grid = max(8, int(math.ceil(8 * F)))
    cv = _Curve(f, A)
    curves = []
    tree = None
    for seed in _seed_points(f, A, grid):
        try:
            start = cv.project(seed)
        except NumericalError:
            continue
        if np.linalg.norm(cv.jet(start)[0]) > 1e-10:
            continue
        start = wrap(start)
        if tree is not None and tree.query(start)[0] < 0.75 * step:
            continue
        curve = _trace_component(cv, start, step, max_length)
        w, jac, _ = _coarea_weight(f, A, curve.vertices, "any")
        curve.min_jacobian = float(jac.min())
        if curve.min_jacobian < min_jacobian:
            i = int(np.argmin(jac))
            raise NumericalError(
                "level set passes near a singular point of g_hat (coarea jacobian below tolerance)",
                location=curve.vertices[i], jacobian=float(jac[i]),
            )
        curves.append(curve)
        allv = np.vstack([c.vertices for c in curves])
        tree = cKDTree(wrap(allv), boxsize=1.0)
    return curves


def _trace_component(cv: _Curve, start, h, max_length, tol=1e-11) -> LevelCurve:
    """Continuation with step-doubling control so the arclength parameter is accurate."""
    t0 = cv.tangent(start)
    xs = [start.copy()]
    lens = []
    x, t = start.copy(), t0
    s = 0.0
    hc = h
    while True:
        d = torus_delta(start, x)
        ahead = float(d @ t)
        if len(lens) > 2 and np.linalg.norm(d) < 1.5 * hc and 0.0 <= ahead <= 1.2 * hc:
            # final partial step: find sigma with (x(sigma) - start) . t = 0
            def along(sig):
                if sig == 0.0:
                    return -ahead
                y, _ = cv.advance(x, t, sig)
                return float(torus_delta(y, start) @ t)

            hi = 1.5 * hc
            if along(hi) < 0:
                hi = 2.5 * hc
            sig = brentq(along, 0.0, hi, xtol=1e-15)
            y, _ = cv.advance(x, t, sig)
            gap = float(np.linalg.norm(torus_delta(y, start)))
            lens.append(sig)
            s += sig
            return LevelCurve(wrap(np.array(xs)), s, gap <= 1e-4, gap, h, seg_lengths=np.array(lens))
        y1, _ = cv.advance(x, t, hc)
        ym, tm = cv.advance(x, t, 0.5 * hc)
        y2, t2 = cv.advance(ym, tm, 0.5 * hc)
        if np.linalg.norm(y1 - y2) > tol and hc > 1e-6:
            hc *= 0.5
            continue
        x, t = y2, t2
        s += hc
        lens.append(hc)
        xs.append(x.copy())
        if np.linalg.norm(y1 - y2) < tol / 32:
            hc = min(h, 2 * hc)
        if s > max_length:
            raise OpenComponentError(
                "level-set component did not close within the maximum arclength (near-singular value?)",
                start=start, length=s,
            )


def _gl_nodes(k=4):
    z, w = np.polynomial.legendre.leggauss(k)
    return (z + 1) / 2, w / 2


def curve_integral(f, A, curve: LevelCurve, selector="any", rule="gauss") -> float:
    """Line integral of the coarea integrand along a closed traced curve.

    ``rule="trapezoid"`` is the plain composite trapezoid on the vertices;
    ``rule="gauss"`` re-integrates each segment with 4-point Gauss-Legendre
    (curve points obtained by RK4 sub-steps) and splits segments where
    det(A^T D^2 w A) changes sign, where the integrand has a kink.
    """
    A = np.atleast_2d(A)
    V = curve.vertices
    K = len(V)
    seg_len = curve.seg_lengths
    if rule == "trapezoid":
        w, _, _ = _coarea_weight(f, A, V, selector)
        return float(np.sum(seg_len * 0.5 * (w + np.roll(w, -1))))
    cv = _Curve(f, A)
    z, gw = _gl_nodes()
    _, _, detV = _coarea_weight(f, A, V, selector)
    total = 0.0
    for k in range(K):
        x0 = V[k]
        t0 = cv.tangent(x0, _segment_direction(V, k))
        L = seg_len[k]
        det_end = detV[(k + 1) % K]

        def point(sig):
            return x0 if sig == 0 else cv.advance(x0, t0, sig)[0]

        pieces = [(0.0, L)]
        if np.sign(detV[k]) != np.sign(det_end) and detV[k] != 0 and det_end != 0:
            fd = lambda sig: float(np.linalg.det(f.pulled_gradient(A, wrap(point(sig))[None])[1][0]))
            try:
                root = brentq(fd, 0.0, L, xtol=1e-14)
                pieces = [(0.0, root), (root, L)]
            except ValueError:
                pass
        for a, b in pieces:
            pts = np.array([point(a + (b - a) * zz) for zz in z])
            wv, _, _ = _coarea_weight(f, A, wrap(pts), selector)
            total += (b - a) * float(gw @ wv)
    return total


def _segment_direction(V, k):
    return torus_delta(V[(k + 1) % len(V)], V[k])


def coarea_density(f: QuasiPeriodicScalar, A, selector: str = "any", curves=None, step: float = 1e-2,
                   rule: str = "gauss") -> float:
    """Expected number of critical points per unit volume from the coarea formula.

    N = n: count of nondegenerate critical points of f in the fundamental cell
    (the integrand is identically one).  N - n = 1: sum of line integrals over
    the traced components of the level set.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    N, n = A.shape
    if N == n:
        # x -> omega + A x covers T^N |det A| times per unit volume
        cs = _torus_critical_points(f, A)
        sel = in_class(cs.eigs, selector) if len(cs) else np.zeros(0, bool)
        if len(cs) and np.any(cs.degenerate):
            i = int(np.argmax(cs.degenerate))
            raise DegenerateFieldError("degenerate critical point on the level set", location=cs.x[i])
        return float(np.sum(sel)) * abs(np.linalg.det(A))
    if curves is None:
        curves = trace_level_set(f, A, step=step)
    total = 0.0
    for c in curves:
        c.integral = curve_integral(f, A, c, selector, rule)
        total += c.integral
    return total


def _torus_critical_points(f, A):
    """Critical points of f itself on the cell [0,1)^N (used when N = n)."""
    N = f.N
    I = np.eye(N)
    cs = enumerate_critical(f, I, np.zeros(N), 0.5, check_refinement=False)
    # the box [-1/2, 1/2)^N is a fundamental domain of the torus
    return cs


@dataclass
class DensityReport:
    ergodic: float
    kacrice: list
    kacrice_value: float
    kacrice_stderr: float
    kacrice_stable: bool
    coarea: float
    spread: float
    flagged: bool
    half_width: float
    selector: str = "any"
    warnings: list = field(default_factory=list)

    def values(self) -> dict:
        return {"ergodic": self.ergodic, "kacrice": self.kacrice_value, "coarea": self.coarea}


def relative_spread(values) -> float:
    v = np.asarray(list(values), dtype=float)
    mean = v.mean()
    if mean == 0:
        return 0.0 if np.all(v == 0) else math.inf
    return float((v.max() - v.min()) / abs(mean))


def cross_validate(f, A, omega, half_width, eps_schedule=(0.1, 0.05, 0.025), samples=1_000_000, seed=0,
                   selector="any", shards=8, threads=1, spread_bound=0.03, step=1e-2) -> DensityReport:
    """Run the ergodic census, the Kac-Rice schedule and the coarea integral side by side."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    notes = []
    try:
        curve = ergodic_density_curve(f, A, omega, [half_width], selector)
        erg = float(curve.densities[-1])
        notes.extend(curve.warnings)
    except DegenerateFieldError:
        raise
    krs = kac_rice_schedule(f, A, eps_schedule, samples, seed, selector, shards, threads)
    if not krs.stable:
        notes.append("Kac-Rice estimates not stable over the last two eps values")
    notes.extend(e.diagnostic for e in krs.estimates if e.diagnostic)
    co = coarea_density(f, A, selector, step=step)
    spread = relative_spread([erg, krs.value, co])
    flagged = spread > spread_bound
    if flagged:
        notes.append(f"relative spread {spread:.4g} exceeds bound {spread_bound}")
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return DensityReport(erg, krs.estimates, krs.value, krs.stderr, krs.stable, co, spread, flagged,
                         half_width, selector, notes)
