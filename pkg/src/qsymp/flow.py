"""Time-one maps of quasiperiodic Hamiltonians through the reduced torus flow.

For H(x, t) = K(omega + A x, t) the orbit of 0 lifts to the torus as
omega(t) = omega + A zeta_t, which solves omega' = A J A^T grad K(omega, t).
So one torus integration per base point gives the displacement zeta_1 and
the time-one map is Phi(x) = x + zeta_1(omega + A x).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .critical import BoxCensus, FACE_TOL, _dedup, in_half_open_box
from .errors import ConfigError, DegenerateFieldError, NumericalError, StepTooLargeError, UnresolvedFieldWarning
from .parallel import pairwise_reduce, seed_sequences, shard_sizes
from .twist import MapJet, equivariance_residual, numeric_hat_map, swap_blocks, symplectic_J
from .torus import frequency_matrix, translate, wrap

TWO_PI = 2.0 * math.pi
CERT_TOL = 1e-8
LSQ_TOL = 1e-10


@dataclass(frozen=True)
class TimeField:
    """K(omega, t) = sum c cos 2pi(m.omega + k t) + s sin 2pi(m.omega + k t), k integer."""

    modes: tuple
    N: int

    def __post_init__(self):
        rows = []
        for m, k, c, s in self.modes:
            if len(m) != self.N:
                raise ConfigError(f"time mode {m} does not have length N={self.N}")
            if int(k) != k:
                raise ConfigError("time frequencies must be integers (1-periodic Hamiltonian)")
            rows.append((tuple(int(v) for v in m), int(k), float(c), float(s)))
        object.__setattr__(self, "modes", tuple(rows))
        object.__setattr__(self, "_m", np.array([r[0] for r in rows], dtype=float).reshape(len(rows), self.N))
        object.__setattr__(self, "_k", np.array([r[1] for r in rows], dtype=float))
        object.__setattr__(self, "_c", np.array([r[2] for r in rows], dtype=float))
        object.__setattr__(self, "_s", np.array([r[3] for r in rows], dtype=float))

    @classmethod
    def from_terms(cls, N, terms):
        return cls(tuple((tuple(m), k, c, s) for m, k, c, s in terms), N)

    @classmethod
    def zero(cls, N):
        return cls((), N)

    def scaled(self, factor) -> "TimeField":
        return TimeField(tuple((m, k, factor * c, factor * s) for m, k, c, s in self.modes), self.N)

    @property
    def is_zero(self) -> bool:
        return not np.any((self._c != 0) | (self._s != 0))

    def _coef(self, omega, t):
        th = TWO_PI * (np.asarray(omega, dtype=float) @ self._m.T + self._k * t)
        co, si = np.cos(th), np.sin(th)
        val = co @ self._c + si @ self._s
        d1 = TWO_PI * (-si * self._c + co * self._s)
        d2 = -(TWO_PI**2) * (co * self._c + si * self._s)
        return val, d1, d2

    def value(self, omega, t):
        return self._coef(omega, t)[0]

    def gradient(self, omega, t):
        return self._coef(omega, t)[1] @ self._m

    def hessian(self, omega, t):
        d2 = self._coef(omega, t)[2]
        return np.tensordot(d2, np.einsum("ki,kj->kij", self._m, self._m), axes=(-1, 0))

    def pulled(self, A, omega, t):
        """A^T grad K and A^T D^2 K A at torus points."""
        mA = self._m @ A
        _, d1, d2 = self._coef(omega, t)
        return d1 @ mA, np.tensordot(d2, np.einsum("ki,kj->kij", mA, mA), axes=(-1, 0))

    def fourier_bounds(self, A):
        """Rigorous sup bounds of |A^T grad K| and ||A^T D^2 K A||."""
        amp = np.hypot(self._c, self._s)
        k = np.linalg.norm(self._m @ A, axis=1)
        return float(TWO_PI * (amp * k).sum()), float(TWO_PI**2 * (amp * k**2).sum())


def reduced_field(K: TimeField, A, omega, t):
    """A J A^T grad K(omega, t): divergence-free vector field on T^N."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    J = symplectic_J(A.shape[1] // 2)
    g = K.pulled(A, omega, t)[0]
    return g @ J.T @ A.T


@dataclass
class FlowResult:
    zeta: np.ndarray
    monodromy: np.ndarray
    path: np.ndarray | None = None
    error_estimate: float = 0.0
    lsq_residual: float = 0.0


def _steps(step):
    k = int(round(1.0 / step))
    if k < 1 or abs(k * step - 1.0) > 1e-12:
        raise ConfigError(f"step {step} does not divide 1")
    return k


def _rk4(K, A, omega0, nsteps, t0=0.0, record=False):
    """Lifted torus orbit and variational equation, batched over base points."""
    n = A.shape[1]
    J = symplectic_J(n // 2)
    AJ = J.T @ A.T  # row-vector form: omega' = g @ AJ
    mA = K._m @ A
    # J (mA_k mA_k^T), flattened so the Hessian term is one matrix product
    Jouter = np.einsum("ij,kj,kl->kil", J, mA, mA).reshape(len(mA), n * n)
    gmap = mA @ AJ
    mT, kk, c, s = K._m.T, K._k, K._c, K._s

    def rhs(w, M, t):
        th = TWO_PI * (w @ mT + kk * t)
        co, si = np.cos(th), np.sin(th)
        d1 = TWO_PI * (-si * c + co * s)
        d2 = -(TWO_PI**2) * (co * c + si * s)
        JH = (d2 @ Jouter).reshape(-1, n, n)
        return d1 @ gmap, JH @ M

    h = 1.0 / nsteps
    w = np.array(omega0, dtype=float)
    M = np.broadcast_to(np.eye(n), (len(w), n, n)).copy()
    path = [w.copy()] if record else None
    for i in range(nsteps):
        t = t0 + i * h
        k1w, k1M = rhs(w, M, t)
        k2w, k2M = rhs(w + 0.5 * h * k1w, M + 0.5 * h * k1M, t + 0.5 * h)
        k3w, k3M = rhs(w + 0.5 * h * k2w, M + 0.5 * h * k2M, t + 0.5 * h)
        k4w, k4M = rhs(w + h * k3w, M + h * k3M, t + h)
        w = w + h / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        M = M + h / 6.0 * (k1M + 2 * k2M + 2 * k3M + k4M)
        if record:
            path.append(w.copy())
    return w, M, (np.array(path) if record else None)


def _zeta_from_lift(A, delta):
    """Least-squares zeta with A zeta = delta; returns (zeta, normal-equation residual)."""
    AtA = A.T @ A
    rhs = delta @ A
    zeta = np.linalg.solve(AtA, rhs.T).T
    res = float(np.max(np.abs(zeta @ AtA - rhs))) if len(zeta) else 0.0
    return zeta, res


def integrate_flow(K: TimeField, A, omega0, step: float = 1e-3, certify: bool = True,
                   record_path: bool = False, tol: float = CERT_TOL) -> FlowResult:
    """Integrate the reduced field over t in [0, 1] with fixed-step RK4.

    ``omega0`` may be one torus point or a batch.  With ``certify`` the run is
    repeated at half the step and the difference (zeta and monodromy) must be
    below ``tol``; otherwise StepTooLargeError.
    """
    A = frequency_matrix(A)
    single = np.ndim(omega0) == 1
    omega0 = np.atleast_2d(np.asarray(omega0, dtype=float))
    if omega0.shape[1] != A.shape[0]:
        raise ConfigError("base point dimension does not match A", N=A.shape[0], got=omega0.shape[1])
    nsteps = _steps(step)
    w1, M1, path = _rk4(K, A, omega0, nsteps, record=record_path)
    zeta, res = _zeta_from_lift(A, w1 - omega0)
    err = 0.0
    if certify:
        w2, M2, _ = _rk4(K, A, omega0, 2 * nsteps)
        zeta2, res2 = _zeta_from_lift(A, w2 - omega0)
        err = float(max(np.max(np.abs(zeta2 - zeta)), np.max(np.abs(M2 - M1))))
        if err > tol:
            raise StepTooLargeError("step too large: step-halving difference exceeds tolerance",
                                    step=step, estimate=err, tol=tol)
        zeta, M1, res = zeta2, M2, max(res, res2)
    if res > LSQ_TOL:
        raise NumericalError("normal-equation residual of the displacement fit too large", residual=res)
    if single:
        return FlowResult(zeta[0], M1[0], None if path is None else wrap(path[:, 0]), err, res)
    return FlowResult(zeta, M1, None if path is None else wrap(path), err, res)


class FlowMap:
    """Time-one map x -> x + zeta_1(omega + A x) of H(x, t) = K(omega + A x, t)."""

    def __init__(self, K: TimeField, A, base, step: float = 1e-3, certify: bool = True):
        self.K = K
        self.A = frequency_matrix(A)
        if self.A.shape[1] % 2:
            raise ConfigError("phase-space dimension n must be even")
        self.base = wrap(np.asarray(base, dtype=float))
        self.step = step
        self.certify = certify

    @property
    def d(self) -> int:
        return self.A.shape[1] // 2

    def rebased(self, base) -> "FlowMap":
        return FlowMap(self.K, self.A, base, self.step, self.certify)

    def jet(self, x) -> MapJet:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = integrate_flow(self.K, self.A, translate(self.base, self.A, x), self.step, self.certify)
        return MapJet(x + r.zeta, r.monodromy)

    def __call__(self, x):
        return self.jet(x).image


def time_one_map(K: TimeField, A, omega, x, step: float = 1e-3) -> MapJet:
    return FlowMap(K, A, omega, step).jet(x)


def full_space_map(K: TimeField, A, omega, x, rtol: float = 1e-13, atol: float = 1e-14):
    """Time-one map by direct integration of x' = J grad_x H(x, t) in R^{2d} (no torus reduction)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    omega = np.asarray(omega, dtype=float)
    J = symplectic_J(A.shape[1] // 2)

    def rhs(t, y):
        g = K.pulled(A, (omega + A @ y)[None], t)[0][0]
        return J @ g

    out = []
    for x0 in np.atleast_2d(x):
        sol = solve_ivp(rhs, (0.0, 1.0), x0, method="DOP853", rtol=rtol, atol=atol)
        out.append(sol.y[:, -1])
    return np.array(out)


def flow_equivariance_residual(fm: FlowMap, a, probes) -> float:
    """max |Phi_{theta_a base}(x) - (Phi_base(x + a) - a)|; ``a`` may be a batch of shifts.

    All shifted maps are evaluated in one batched integration.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return equivariance_residual(fm.rebased, fm.base, fm.A, a, probes)
    probes = np.atleast_2d(probes)
    k, P = len(a), len(probes)
    xs = np.tile(probes, (k, 1))
    shifts = np.repeat(a, P, axis=0)
    bases = translate(fm.base, fm.A, shifts)
    lhs = integrate_flow(fm.K, fm.A, wrap(bases + xs @ fm.A.T), fm.step, fm.certify).zeta
    rhs = integrate_flow(fm.K, fm.A, translate(fm.base, fm.A, xs + shifts), fm.step, fm.certify).zeta
    # Phi(x) = x + zeta, so the residual is the difference of displacements
    return float(np.max(np.abs(lhs - rhs)))


@dataclass
class RegularityReport:
    grad_sup: float
    hess_sup: float
    ell: float
    ell_bound: float
    twist: bool
    displacement_max: float
    jacobian_dev_max: float
    displacement_ok: bool
    jacobian_ok: bool
    margin: float = 0.95

    @property
    def ok(self) -> bool:
        return self.displacement_ok and self.jacobian_ok


def regularity_report(K: TimeField, A, base, probes=256, seed: int = 0, step: float = 1e-3,
                      margin: float = 0.95, map_probes: int = 32) -> RegularityReport:
    """Sampled regularity constant and the displacement / Jacobian bounds it implies.

    ``ell`` is the sampled max of sup|A^T grad K| and sup||A^T D^2 K A|| over
    random (omega, t); the twist flag is exp(ell) < 2 * margin.  The bounds
    |Phi - id| <= l and ||D Phi - I|| <= e^l - 1 are checked on map probes
    against the rigorous Fourier value ``ell_bound``.
    """
    A = frequency_matrix(A)
    n = A.shape[1]
    rng = np.random.default_rng(seed)
    if K.is_zero:
        gs = hs = 0.0
    else:
        pts = rng.random((probes, K.N))
        ts = rng.random(probes)
        gs = hs = 0.0
        for w, t in zip(pts, ts):
            g, H = K.pulled(A, w[None], t)
            gs = max(gs, float(np.linalg.norm(g[0])))
            hs = max(hs, float(np.linalg.norm(H[0], 2)))
    ell = max(gs, hs)
    gb, hb = K.fourier_bounds(A) if not K.is_zero else (0.0, 0.0)
    ell_bound = max(gb, hb)
    twist = math.exp(ell) < 2.0 * margin
    xs = rng.uniform(-1.0, 1.0, (map_probes, n))
    jet = FlowMap(K, A, base, step).jet(xs)
    disp = float(np.max(np.linalg.norm(jet.image - xs, axis=1)))
    jdev = float(np.max(np.linalg.norm(jet.jacobian - np.eye(n), ord=2, axis=(-2, -1))))
    slack = 1e-9
    return RegularityReport(gs, hs, ell, ell_bound, twist, disp, jdev,
                            disp <= ell_bound + slack, jdev <= math.expm1(ell_bound) + slack, margin)


def exactness_residual(K: TimeField, A, base, probes, step: float = 1e-3) -> float:
    """Max asymmetry of the swapped derivative of the hat-displacement Phi_hat - id.

    The hat-map is obtained by Newton inversion of q -> Q(q, p) on the flow
    map, and its derivative is the block transform of the monodromy.
    """
    fm = FlowMap(K, A, base, step)
    if K.is_zero:
        return 0.0
    _, _, Dhat = numeric_hat_map(fm.jet, fm.d, probes)
    S = swap_blocks(Dhat - np.eye(2 * fm.d))
    return float(np.max(np.linalg.norm(S - np.swapaxes(S, -1, -2), ord=2, axis=(-2, -1))))


def fd_exactness_residual(K: TimeField, A, base, probes, h: float = 1e-5, step: float = 1e-3) -> float:
    """Same quantity with D(Phi_hat) from central differences of the hat-map (independent check)."""
    fm = FlowMap(K, A, base, step)
    d = fm.d
    probes = np.atleast_2d(probes)
    out = 0.0
    for z in probes:
        cols = []
        for j in range(2 * d):
            e = np.zeros(2 * d)
            e[j] = h
            qp, Pp, _ = numeric_hat_map(fm.jet, d, (z + e)[None])
            qm, Pm, _ = numeric_hat_map(fm.jet, d, (z - e)[None])
            cols.append((np.hstack([qp, Pp]) - np.hstack([qm, Pm]))[0] / (2 * h))
        S = swap_blocks(np.array(cols).T - np.eye(2 * d))
        out = max(out, float(np.linalg.norm(S - S.T, 2)))
    return out


@dataclass
class OrbitCensus:
    """Fixed points of the time-one map in [-l, l)^n with their Floquet multipliers."""

    x: np.ndarray
    multipliers: np.ndarray
    residual: np.ndarray
    degenerate: np.ndarray
    half_width: float
    pitch: float
    warnings: list = field(default_factory=list)

    def kinds(self) -> np.ndarray:
        mod = np.abs(self.multipliers)
        on_circle = np.all(np.abs(mod - 1.0) <= 1e-6, axis=1)
        complex_ = np.any(np.abs(self.multipliers.imag) > 1e-9, axis=1)
        kind = np.where(on_circle & complex_, "elliptic", "hyperbolic").astype(object)
        kind[self.degenerate] = "degenerate"
        return kind

    def restrict(self, half_width: float) -> "OrbitCensus":
        keep = in_half_open_box(self.x, half_width)
        return OrbitCensus(self.x[keep], self.multipliers[keep], self.residual[keep], self.degenerate[keep],
                           half_width, self.pitch, list(self.warnings))

    def census(self, half_width: float | None = None) -> BoxCensus:
        c = self if half_width is None else self.restrict(half_width)
        vol = (2 * c.half_width) ** c.x.shape[1]
        kinds = c.kinds()
        counts = {"all": int(np.sum(~c.degenerate)),
                  "elliptic": int(np.sum(kinds == "elliptic")),
                  "hyperbolic": int(np.sum(kinds == "hyperbolic"))}
        return BoxCensus(c.half_width, counts, {k: v / vol for k, v in counts.items()},
                         int(np.sum(c.degenerate)), list(c.warnings))


def _newton_fixed(K, A, base, x, step, tol, max_iter=40):
    """Batched Newton on zeta_1(base + A x) = 0 with Jacobian D Phi - I (min-norm steps)."""
    x = x.copy()
    n = x.shape[1]
    conv = np.zeros(len(x), bool)
    active = np.arange(len(x))
    for _ in range(max_iter):
        if active.size == 0:
            break
        r = integrate_flow(K, A, translate(base, A, x[active]), step, certify=False)
        rn = np.linalg.norm(r.zeta, axis=1)
        done = rn <= tol
        conv[active[done]] = True
        active = active[~done]
        if active.size == 0:
            break
        Jm = r.monodromy[~done] - np.eye(n)
        dx = -np.einsum("pij,pj->pi", np.linalg.pinv(Jm, rcond=1e-12), r.zeta[~done])
        sn = np.linalg.norm(dx, axis=1)
        x[active] += dx * np.minimum(1.0, 0.25 / np.maximum(sn, 1e-300))[:, None]
    return x, conv


def periodic_orbit_census(K: TimeField, A, base, half_width: float, pitch: float | None = None,
                          coarse_step: float = 0.05, step: float = 1e-2, tol_deg: float = 1e-8) -> OrbitCensus:
    """Fixed points of the time-one map (1-periodic orbits) in the box [-l, l)^n.

    Seeds are grid cell centres not excluded by |zeta_1(seed)| <= ||D zeta|| r;
    Newton runs with a coarse integration step and survivors are polished at
    the fine ``step`` (certified).  Points with |det(D Phi - I)| <= tol_deg
    are flagged degenerate; any such point raises an UnresolvedFieldWarning
    since it indicates a non-isolated fixed-point set.
    """
    A = frequency_matrix(A)
    n = A.shape[1]
    if K.is_zero:
        raise DegenerateFieldError("K = 0: the time-one map is the identity, every point is fixed")
    gb, hb = K.fourier_bounds(A)
    if pitch is None:
        F = float(np.max(np.linalg.norm(K._m @ A, axis=1)))
        pitch = min(1.0, 1.0 / (4.0 * F)) if F > 0 else 1.0
    m = int(np.ceil(2 * half_width / pitch))
    h = 2 * half_width / m
    c1 = -half_width + (np.arange(m) + 0.5) * h
    seeds = np.stack(np.meshgrid(*([c1] * n), indexing="ij"), axis=-1).reshape(-1, n)
    if K._m.size and not np.any(np.linalg.norm(K._m @ A, axis=1) > 1e-14):
        raise DegenerateFieldError("K does not depend on x: the time-one map is a pure time integral")
    lip = math.expm1(max(gb, hb))
    r0 = integrate_flow(K, A, translate(base, A, seeds), coarse_step, certify=False)
    keep = np.linalg.norm(r0.zeta, axis=1) <= lip * 0.5 * h * math.sqrt(n) * 1.0001 + 1e-6
    x, conv = _newton_fixed(K, A, base, seeds[keep], coarse_step, 1e-10)
    x = x[conv]
    x, conv = _newton_fixed(K, A, base, x, step, 1e-12, max_iter=8)
    x = x[conv]
    x = x[np.all(np.abs(x) <= half_width + 2 * FACE_TOL, axis=1)]
    x = x[_dedup(x, 1e-6)]
    x = x[in_half_open_box(x, half_width)]
    x = x[np.lexsort(x.T[::-1])] if len(x) else x
    if len(x):
        r = integrate_flow(K, A, translate(base, A, x), step, certify=True)
        res = np.linalg.norm(r.zeta, axis=1)
        mult = np.linalg.eigvals(r.monodromy)
        mult = np.sort_complex(mult)
        deg = np.abs(np.linalg.det(r.monodromy - np.eye(n))) <= tol_deg
    else:
        res = np.zeros(0)
        mult = np.zeros((0, n), complex)
        deg = np.zeros(0, bool)
    out = OrbitCensus(x, mult, res, deg, half_width, h)
    if np.any(deg):
        msg = f"{int(deg.sum())} degenerate fixed points: fixed-point set appears non-isolated"
        warnings.warn(msg, UnresolvedFieldWarning, stacklevel=2)
        out.warnings.append(msg)
    return out


@dataclass
class MeanDisplacement:
    mean: np.ndarray
    stderr: np.ndarray
    samples: int

    @property
    def within_band(self) -> bool:
        return bool(np.all(np.abs(self.mean) <= 3.0 * self.stderr + 1e-15))


def mean_displacement(K: TimeField, A, samples: int, seed: int = 0, shards: int = 8,
                      step: float = 1e-2, chunk: int = 20_000) -> MeanDisplacement:
    """Monte Carlo mean of zeta_1 over uniform base points, with per-component standard error."""
    A = frequency_matrix(A)
    n = A.shape[1]
    sizes = shard_sizes(samples, shards)
    parts = []
    for size, ss in zip(sizes, seed_sequences(seed, shards)):
        rng = np.random.default_rng(ss)
        s1 = np.zeros(n)
        s2 = np.zeros(n)
        left = size
        while left > 0:
            k = min(chunk, left)
            left -= k
            z = integrate_flow(K, A, rng.random((k, K.N)), step).zeta
            s1 += z.sum(axis=0)
            s2 += (z * z).sum(axis=0)
        parts.append(np.concatenate([s1, s2, [size]]))
    tot = pairwise_reduce(parts)
    cnt = tot[-1]
    mean = tot[:n] / cnt
    var = np.maximum(tot[n:2 * n] / cnt - mean**2, 0.0) * cnt / max(cnt - 1, 1)
    return MeanDisplacement(mean, np.sqrt(var / cnt), int(cnt))
