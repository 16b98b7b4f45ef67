"""Symplectic twist maps from stationary generating functions.

Given a lift ``w_hat`` on T^N, a frequency matrix ``A`` (N x 2d) and a base
point ``omega``, the generating function is

    W(Q, p) = Q.p + w(Q, p),    w(Q, p) = w_hat(omega + A (Q, p)),

and the map is defined implicitly by Phi(Q + w_p, p) = (Q, p + w_Q).
Phase points are arrays whose last axis holds (q, p) of length 2d.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError, NumericalError, TwistViolation
from .torus import QuasiPeriodicScalar, frequency_matrix, translate, wrap


def symplectic_J(d: int) -> np.ndarray:
    """Standard J = [[0, I], [-I, 0]]."""
    I = np.eye(d)
    Z = np.zeros((d, d))
    return np.block([[Z, I], [-I, Z]])


class MapJet(NamedTuple):
    image: np.ndarray
    jacobian: np.ndarray


@dataclass(frozen=True)
class GeneratingMap:
    field: QuasiPeriodicScalar
    A: np.ndarray
    base: np.ndarray
    twist_margin: float = 0.9
    check: bool = True

    def __post_init__(self):
        A = frequency_matrix(self.A)
        if A.shape[1] % 2:
            raise ConfigError("A must have an even number of columns (n = 2d)", n=A.shape[1])
        if A.shape[0] != self.field.N:
            raise ConfigError("field dimension does not match A", N=self.field.N, rows=A.shape[0])
        if not 0.0 < self.twist_margin < 1.0:
            raise ConfigError("twist_margin must lie in (0, 1)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "base", wrap(np.asarray(self.base, dtype=float)))
        if self.check:
            sup = twist_block_sup(self.field, A)
            if sup > self.twist_margin:
                raise TwistViolation(
                    f"sup |w_pQ| = {sup:.4g} exceeds twist margin {self.twist_margin}",
                    sup=sup, margin=self.twist_margin,
                )

    @property
    def d(self) -> int:
        return self.A.shape[1] // 2

    def rebased(self, base) -> "GeneratingMap":
        return GeneratingMap(self.field, self.A, base, self.twist_margin, check=False)

    def shifted(self, a) -> "GeneratingMap":
        """Same field with base point theta_a(omega)."""
        return self.rebased(translate(self.base, self.A, a))

    def w_jet(self, xhat):
        """(w, grad w, D^2 w) at hat points (Q, p)."""
        return self.field.pullback_jet(self.A, self.base, xhat)

    def jet(self, x) -> MapJet:
        return forward_map(self, x)

    def __call__(self, x):
        return forward_map(self, x).image


def twist_block_sup(field: QuasiPeriodicScalar, A, n_probe: int | None = None, seed: int = 0) -> float:
    """Upper estimate of sup || w_pQ || (operator norm) over the whole torus.

    Uses the rigorous Fourier bound when it already certifies a value below 1,
    otherwise the maximum over 32^min(N, 4) uniform probes.
    """
    A = np.atleast_2d(A)
    d = A.shape[1] // 2
    mA = field.mode_matrix @ A
    amp = field.amplitudes()
    bound = float((2 * np.pi) ** 2 * np.sum(amp * np.linalg.norm(mA[:, :d], axis=1) * np.linalg.norm(mA[:, d:], axis=1)))
    if bound < 1.0 or field.is_zero:
        return bound
    N = field.N
    if n_probe is None:
        n_probe = 32 ** min(N, 4)
    pts = np.random.default_rng(seed).random((n_probe, N))
    _, H = field.pulled_gradient(A, pts)
    block = H[:, d:, :d]
    return float(np.max(np.linalg.norm(block, ord=2, axis=(1, 2))))


def forward_map(gm: GeneratingMap, x, tol: float = 1e-12, max_iter: int = 50) -> MapJet:
    """Evaluate Phi and D Phi at phase points x = (q, p).

    Solves Q + w_p(Q, p) = q by damped Newton from Q = q; the jacobian comes
    from implicit differentiation of the generating relation.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    d = gm.d
    q, p = X[:, :d], X[:, d:]
    Q = q.copy()

    def residual(Qv):
        _, g, H = gm.w_jet(np.hstack([Qv, p]))
        return Qv + g[:, d:] - q, g, H

    r, g, H = residual(Q)
    rn = np.linalg.norm(r, axis=1)
    for _ in range(max_iter):
        active = rn > tol
        if not np.any(active):
            break
        Jm = np.eye(d) + H[:, d:, :d]
        step = np.linalg.solve(Jm[active], r[active][..., None])[..., 0]
        lam = np.ones(step.shape[0])
        Qa = Q[active]
        for _half in range(30):
            trial = Qa - lam[:, None] * step
            Q_try = Q.copy()
            Q_try[active] = trial
            r_try, g_try, H_try = residual(Q_try)
            rn_try = np.linalg.norm(r_try[active], axis=1)
            worse = rn_try > rn[active] * (1.0 - 1e-4 * lam) + 1e-15
            if not np.any(worse):
                break
            lam = np.where(worse, lam / 2, lam)
        Q = Q_try
        r, g, H = r_try, g_try, H_try
        rn = np.linalg.norm(r, axis=1)
    if np.any(rn > tol):
        raise TwistViolation(
            "implicit solve Q + w_p(Q, p) = q did not converge",
            worst_residual=float(rn.max()),
        )
    wQQ, wQp = H[:, :d, :d], H[:, :d, d:]
    wpQ, wpp = H[:, d:, :d], H[:, d:, d:]
    Minv = np.linalg.inv(np.eye(d) + wpQ)
    Q_q = Minv
    Q_p = -Minv @ wpp
    P_q = wQQ @ Q_q
    P_p = np.eye(d) + wQQ @ Q_p + wQp
    jac = np.concatenate(
        [np.concatenate([Q_q, Q_p], axis=2), np.concatenate([P_q, P_p], axis=2)], axis=1
    )
    img = np.hstack([Q, p + g[:, :d]])
    if single:
        return MapJet(img[0], jac[0])
    return MapJet(img, jac)


def hat_map(gm: GeneratingMap, Q, p):
    """Explicit hat-map (q_hat, P_hat) = (Q + w_p, p + w_Q)."""
    Q = np.asarray(Q, dtype=float)
    p = np.asarray(p, dtype=float)
    _, g, _ = gm.w_jet(np.concatenate([Q, p], axis=-1))
    d = gm.d
    return Q + g[..., d:], p + g[..., :d]


def equivariance_residual(phi_at: Callable, base, A, a, probes) -> float:
    """max |Phi_{theta_a base}(x) - (Phi_base(x + a) - a)| over probes.

    ``phi_at(base)`` must return a callable x -> Phi(x) for that base point, so
    generating maps and flow maps are checked the same way.
    """
    a = np.asarray(a, dtype=float)
    probes = np.atleast_2d(probes)
    shifted = phi_at(translate(base, A, a))(probes)
    direct = phi_at(base)(probes + a) - a
    return float(np.max(np.abs(shifted - direct)))


def generating_equivariance_residual(gm: GeneratingMap, a, probes) -> float:
    return equivariance_residual(gm.rebased, gm.base, gm.A, a, probes)


def symplectic_residual(jacobian) -> np.ndarray | float:
    """|| D^T J D - J ||_inf (max entry); vectorised over a leading batch axis."""
    D = np.asarray(jacobian, dtype=float)
    d = D.shape[-1] // 2
    J = symplectic_J(d)
    R = np.swapaxes(D, -1, -2) @ J @ D - J
    out = np.max(np.abs(R), axis=(-2, -1))
    return float(out) if np.ndim(out) == 0 else out


def hat_alpha(alpha: Callable, A_q, omega, tol: float = 1e-12, max_iter: int = 60):
    """Solve h + alpha(omega + A_q h) = 0 for h in R^d (vectorised over omega).

    ``alpha(points)`` returns (value (P, d), derivative (P, d, N)) at torus points.
    """
    A_q = np.atleast_2d(np.asarray(A_q, dtype=float))
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    d = A_q.shape[1]
    h = np.zeros((omega.shape[0], d))
    for _ in range(max_iter):
        val, dval = alpha(wrap(omega + h @ A_q.T))
        r = h + val
        rn = np.linalg.norm(r, axis=1)
        if np.all(rn <= tol):
            return h
        Jm = np.eye(d) + dval @ A_q
        h = h - np.linalg.solve(Jm, r[..., None])[..., 0]
    val, _ = alpha(wrap(omega + h @ A_q.T))
    rn = np.linalg.norm(h + val, axis=1)
    if np.any(rn > tol):
        raise NumericalError(
            "non-twist displacement: fiber inversion did not converge",
            worst_residual=float(rn.max()),
        )
    return h


class BlockMatrix(NamedTuple):
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    @classmethod
    def split(cls, M):
        M = np.asarray(M, dtype=float)
        d = M.shape[-1] // 2
        return cls(M[..., :d, :d], M[..., :d, d:], M[..., d:, :d], M[..., d:, d:])

    def join(self):
        top = np.concatenate([self.A, self.B], axis=-1)
        bot = np.concatenate([self.C, self.D], axis=-1)
        return np.concatenate([top, bot], axis=-2)


def block_transform(G) -> np.ndarray:
    """[[A^-1, -A^-1 B], [C A^-1, D - C A^-1 B]] for G = [[A, B], [C, D]].

    Maps the hat-jacobian to the jacobian (and back: the transform is an involution).
    """
    blocks = G if isinstance(G, BlockMatrix) else BlockMatrix.split(G)
    detA = np.linalg.det(blocks.A)
    if np.any(np.abs(detA) < 1e-12):
        raise NumericalError("degenerate hat-jacobian (|det A| < 1e-12)", det=float(np.min(np.abs(detA))))
    Ai = np.linalg.inv(blocks.A)
    return BlockMatrix(Ai, -Ai @ blocks.B, blocks.C @ Ai, blocks.D - blocks.C @ Ai @ blocks.B).join()


def hat_density_transform(rho: Callable, xhat, Xhat, Ghat) -> float:
    """Density of (Phi_hat(x_hat), D Phi_hat) from the density rho(x, X, Gamma) of (Phi, D Phi).

    x_hat = (Q, p), X_hat = (q, P) are reshuffled into x = (q, p), X = (Q, P).
    """
    Ghat = np.asarray(Ghat, dtype=float)
    blocks = BlockMatrix.split(Ghat)
    d = blocks.A.shape[-1]
    xhat = np.asarray(xhat, dtype=float)
    Xhat = np.asarray(Xhat, dtype=float)
    x = np.concatenate([Xhat[:d], xhat[d:]])
    X = np.concatenate([xhat[:d], Xhat[d:]])
    G = block_transform(Ghat)
    return abs(np.linalg.det(blocks.A)) ** (1 - 4 * d) * rho(x, X, G)


def fd_jacobian(func: Callable, z, h: float = 1e-6) -> np.ndarray:
    """Central-difference jacobian of a map R^k -> R^k (flattened)."""
    z = np.asarray(z, dtype=float).ravel()
    k = z.size
    cols = []
    for i in range(k):
        e = np.zeros(k)
        e[i] = h
        cols.append((np.ravel(func(z + e)) - np.ravel(func(z - e))) / (2 * h))
    return np.array(cols).T


def left_multiply_jacobian_check(E, h: float = 1e-6):
    """(fd, predicted) for |det| of Z -> E Z on R^{d x d}; predicted |det E|^d."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    d = E.shape[0]
    Z0 = np.random.default_rng(0).standard_normal((d, d))
    jac = fd_jacobian(lambda z: E @ z.reshape(d, d), Z0, h)
    return abs(np.linalg.det(jac)), abs(np.linalg.det(E)) ** d


def inverse_jacobian_check(Z, h: float = 1e-6):
    """(fd, predicted) for |det| of Z -> Z^{-1} on R^{d x d}; predicted |det Z|^{-2d}."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    d = Z.shape[0]
    detZ = np.linalg.det(Z)
    if abs(detZ) <= 1e-8:
        raise NumericalError("matrix too close to singular for the inverse-jacobian check", det=float(detZ))
    scale = h * max(1.0, float(np.max(np.abs(Z))))
    jac = fd_jacobian(lambda z: np.linalg.inv(z.reshape(d, d)), Z, scale)
    return abs(np.linalg.det(jac)), abs(detZ) ** (-2 * d)


def hat_jacobian_from_jacobian(jac) -> np.ndarray:
    """D Phi_hat from D Phi (same involution as block_transform)."""
    return block_transform(jac)


def numeric_hat_map(jet: Callable, d: int, Qp, tol: float = 1e-12, max_iter: int = 60):
    """Hat-map of a black-box twist map by Newton inversion of q -> Q(q, p).

    ``jet(x)`` returns a MapJet for a batch of phase points.  Returns
    (q_hat, P_hat, D Phi_hat) at the hat points ``Qp`` = (Q, p).
    """
    Qp = np.atleast_2d(np.asarray(Qp, dtype=float))
    Q, p = Qp[:, :d], Qp[:, d:]
    q = Q.copy()
    for _ in range(max_iter):
        img, jac = jet(np.hstack([q, p]))
        r = img[:, :d] - Q
        if np.all(np.linalg.norm(r, axis=1) <= tol):
            break
        q = q - np.linalg.solve(jac[:, :d, :d], r[..., None])[..., 0]
    img, jac = jet(np.hstack([q, p]))
    rn = np.linalg.norm(img[:, :d] - Q, axis=1)
    if np.any(rn > max(tol, 1e-10)):
        raise NumericalError("non-twist at probe: fiber inversion failed", worst_residual=float(rn.max()))
    return q, img[:, d:], block_transform(jac)


def swap_blocks(M) -> np.ndarray:
    """eta: exchange the two d-row blocks of a (batched) 2d x k array."""
    M = np.asarray(M)
    d = M.shape[-2] // 2
    return np.concatenate([M[..., d:, :], M[..., :d, :]], axis=-2)


def exactness_residual(jet: Callable, d: int, probes) -> float:
    """max || D(eta B) - D(eta B)^T || over hat probes, B = Phi_hat - id.

    Zero exactly when the hat-displacement is a swapped gradient, i.e. when a
    generating function w with Phi_hat = (Q + w_p, p + w_Q) exists.
    """
    _, _, Dhat = numeric_hat_map(jet, d, probes)
    DB = Dhat - np.eye(2 * d)
    S = swap_blocks(DB)
    asym = S - np.swapaxes(S, -1, -2)
    return float(np.max(np.linalg.norm(asym, ord=2, axis=(-2, -1))))


def max_displacement(gm: GeneratingMap, probes) -> float:
    probes = np.atleast_2d(probes)
    return float(np.max(np.linalg.norm(gm(probes) - probes, axis=1)))


def grad_sup(gm: GeneratingMap) -> float:
    """Rigorous Fourier bound on sup |grad w|."""
    return gm.field.fourier_bounds(gm.A)[1]
