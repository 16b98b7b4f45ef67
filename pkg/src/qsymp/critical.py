"""Critical points of pulled-back quasiperiodic fields and their box counts.

The critical points of w(x) = w_hat(omega + A x) are exactly the fixed points
of the twist map generated by w, so counting them in growing boxes
[-l, l)^n measures the fixed-point density.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DegenerateFieldError, IncompleteCensusError, UnresolvedFieldWarning
from .torus import QuasiPeriodicScalar, resolution_pitch, translate

TOL_DEG = 1e-8
RESIDUAL_TOL = 1e-10
DEDUP_RADIUS = 1e-6
FACE_TOL = 1e-9


def classify(H, tol_deg: float = TOL_DEG):
    """Morse index of a symmetric matrix, or None when degenerate."""
    eigs = np.linalg.eigvalsh(np.asarray(H, dtype=float))
    if np.any(np.abs(eigs) <= tol_deg):
        return None
    return int(np.sum(eigs < -tol_deg))


def in_class(eigs, selector: str, tol_deg: float = TOL_DEG) -> np.ndarray:
    """Vectorised membership of Hessians (given by sorted eigenvalues) in an index class.

    Selectors: ``"any"`` (any nondegenerate), ``"morse:k"``, ``"det+"``, ``"det-"``.
    Degenerate matrices belong to no class.
    """
    eigs = np.atleast_2d(eigs)
    nondeg = np.all(np.abs(eigs) > tol_deg, axis=-1)
    neg = np.sum(eigs < -tol_deg, axis=-1)
    if selector == "any":
        sel = np.ones_like(nondeg)
    elif selector.startswith("morse:"):
        sel = neg == int(selector.split(":", 1)[1])
    elif selector == "det+":
        sel = neg % 2 == 0
    elif selector == "det-":
        sel = neg % 2 == 1
    else:
        raise ValueError(f"unknown index class {selector!r}")
    return nondeg & sel


def class_selectors(n: int) -> list:
    return ["any"] + [f"morse:{k}" for k in range(n + 1)] + ["det+", "det-"]


class CriticalPointRecord(NamedTuple):
    x: np.ndarray
    residual: float
    hessian_eigs: np.ndarray
    index: int
    degenerate: bool


@dataclass
class CriticalSet:
    """Deduplicated critical points, stored column-wise, ordered lexicographically."""

    x: np.ndarray
    residual: np.ndarray
    eigs: np.ndarray
    half_width: float
    pitch: float
    warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def degenerate(self) -> np.ndarray:
        return np.any(np.abs(self.eigs) <= TOL_DEG, axis=1)

    @property
    def index(self) -> np.ndarray:
        return np.where(self.degenerate, -1, np.sum(self.eigs < -TOL_DEG, axis=1))

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i) -> CriticalPointRecord:
        return CriticalPointRecord(
            self.x[i], float(self.residual[i]), self.eigs[i], int(self.index[i]), bool(self.degenerate[i])
        )

    def __iter__(self) -> Iterator[CriticalPointRecord]:
        for i in range(len(self)):
            yield self[i]

    def restrict(self, half_width: float) -> "CriticalSet":
        keep = in_half_open_box(self.x, half_width)
        return CriticalSet(self.x[keep], self.residual[keep], self.eigs[keep], half_width, self.pitch, list(self.warnings))


def in_half_open_box(x, half_width: float) -> np.ndarray:
    """Membership in [-l, l)^n; points within FACE_TOL of a face follow the half-open rule."""
    x = np.atleast_2d(x)
    lo = x >= -half_width - FACE_TOL
    hi = x < half_width - FACE_TOL
    return np.all(lo & hi, axis=1)


def _newton(f, A, omega, a, x, step_cap, max_iter=60):
    """Vectorised Newton on g(x) = a. Returns (x, residual norm, converged mask)."""
    x = x.copy()
    conv = np.zeros(len(x), dtype=bool)
    res = np.full(len(x), np.inf)
    active = np.arange(len(x))
    for _ in range(max_iter):
        if active.size == 0:
            break
        _, g, H = f.pullback_jet(A, omega, x[active])
        r = g - a
        rn = np.linalg.norm(r, axis=1)
        res[active] = rn
        done = rn <= RESIDUAL_TOL * 1e-2
        conv[active[done]] = True
        active, r, H, rn = active[~done], r[~done], H[~done], rn[~done]
        if active.size == 0:
            break
        # min-norm steps so seeds on a non-isolated critical set still converge (and get flagged)
        ok = np.abs(np.linalg.det(H)) > 1e-12 * np.max(np.abs(H), axis=(1, 2)) ** H.shape[-1]
        step = np.zeros_like(r)
        step[ok] = np.linalg.solve(H[ok], r[ok][..., None])[..., 0]
        if not np.all(ok):
            step[~ok] = np.einsum("pij,pj->pi", np.linalg.pinv(H[~ok], rcond=1e-12, hermitian=True), r[~ok])
        sn = np.linalg.norm(step, axis=1)
        scale = np.minimum(1.0, step_cap / np.maximum(sn, 1e-300))
        x[active] -= step * scale[:, None]
    if active.size:
        _, g, _ = f.pullback_jet(A, omega, x[active])
        rn = np.linalg.norm(g - a, axis=1)
        res[active] = rn
        conv[active] = rn <= RESIDUAL_TOL
    return x, res, conv


def _seed_cells(f, A, omega, a, half_width, pitch, chunk=1 << 18):
    """Cell centres of the seeding grid that may contain a root (Lipschitz exclusion)."""
    n = A.shape[1]
    m = int(np.ceil(2 * half_width / pitch))
    centres_1d = -half_width + (np.arange(m) + 0.5) * (2 * half_width / m)
    h = 2 * half_width / m
    L = f.fourier_bounds(A)[2]
    radius = 0.5 * h * np.sqrt(n)
    total = m**n
    keep = []
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        sub = np.stack(np.unravel_index(idx, (m,) * n), axis=1)
        pts = centres_1d[sub]
        _, g, _ = f.pullback_jet(A, omega, pts)
        near = np.linalg.norm(g - a, axis=1) <= L * radius * 1.0001 + 1e-12
        keep.append(pts[near])
    return (np.concatenate(keep) if keep else np.zeros((0, n))), h


def _dedup(x, radius):
    if len(x) == 0:
        return np.zeros(0, dtype=int)
    tree = cKDTree(x)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    import scipy.sparse as sp

    g = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(x), len(x)))
    _, labels = connected_components(g, directed=False)
    # representative: first member in array order
    _, first = np.unique(labels, return_index=True)
    return np.sort(first)


def _enumerate_once(f, A, omega, a, half_width, pitch):
    n = A.shape[1]
    seeds, h = _seed_cells(f, A, omega, a, half_width, pitch)
    if len(seeds) == 0:
        return np.zeros((0, n)), np.zeros(0), np.zeros((0, n)), h
    F = np.max(np.linalg.norm(f.mode_matrix @ A, axis=1))
    step_cap = 0.25 / F
    roots, res, conv = _newton(f, A, omega, a, seeds, step_cap)
    roots = roots[conv]
    margin = 2 * FACE_TOL
    roots = roots[np.all(np.abs(roots) <= half_width + margin, axis=1)]
    roots = roots[_dedup(roots, DEDUP_RADIUS)]
    roots = roots[in_half_open_box(roots, half_width)]
    order = np.lexsort(roots.T[::-1])
    roots = roots[order]
    _, g, H = f.pullback_jet(A, omega, roots)
    res = np.linalg.norm(g - a, axis=1) if len(roots) else np.zeros(0)
    eigs = np.linalg.eigvalsh(H) if len(roots) else np.zeros((0, n))
    return roots, res, eigs, h


def _check_nontrivial(f: QuasiPeriodicScalar, A):
    mA = f.mode_matrix @ A
    live = (f.amplitudes() > 0) & (np.linalg.norm(mA, axis=1) > 1e-14)
    if not np.any(live):
        raise DegenerateFieldError("field has identically zero gradient (every point is critical)")


def enumerate_critical(
    f: QuasiPeriodicScalar,
    A,
    omega,
    half_width: float,
    a=None,
    pitch: float | None = None,
    check_refinement: bool = True,
) -> CriticalSet:
    """All solutions of A^T grad f(omega + A x) = a in [-l, l)^n.

    Seeds Newton from the cells of a grid that are not excluded by the
    Lipschitz bound, deduplicates, and re-runs with the pitch halved to check
    that the count is stable.  Instability is reported as an
    ``UnresolvedFieldWarning`` stored on the result (and emitted).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    a = np.zeros(n) if a is None else np.asarray(a, dtype=float)
    _check_nontrivial(f, A)
    if np.linalg.norm(a) > f.fourier_bounds(A)[1]:
        return CriticalSet(np.zeros((0, n)), np.zeros(0), np.zeros((0, n)), half_width, pitch or 1.0)
    if pitch is None:
        pitch = resolution_pitch(f, A)
    roots, res, eigs, h = _enumerate_once(f, A, omega, a, half_width, pitch)
    out = CriticalSet(roots, res, eigs, half_width, h)
    notes = []
    if check_refinement:
        fine, _, _, _ = _enumerate_once(f, A, omega, a, half_width, pitch / 2)
        if len(fine) != len(roots):
            notes.append(f"count changed under pitch halving: {len(roots)} -> {len(fine)}")
    ndeg = int(np.sum(out.degenerate))
    if ndeg:
        notes.append(f"{ndeg} degenerate critical points (possibly non-isolated critical set)")
    for msg in notes:
        warnings.warn(msg, UnresolvedFieldWarning, stacklevel=2)
    out.warnings.extend(notes)
    return out


@dataclass
class BoxCensus:
    half_width: float
    counts: dict
    densities: dict
    degenerate: int
    warnings: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.counts["all"]


def census(points: CriticalSet, half_width: float | None = None) -> BoxCensus:
    if half_width is not None and half_width != points.half_width:
        points = points.restrict(half_width)
    n = points.n
    vol = (2 * points.half_width) ** n
    counts = {"all": len(points)}
    for sel in class_selectors(n):
        counts[sel] = int(np.sum(in_class(points.eigs, sel))) if len(points) else 0
    deg = int(np.sum(points.degenerate)) if len(points) else 0
    dens = {k: v / vol for k, v in counts.items()}
    return BoxCensus(points.half_width, counts, dens, deg, list(points.warnings))


@dataclass
class DensityCurve:
    censuses: list
    selector: str

    @property
    def densities(self) -> np.ndarray:
        return np.array([c.densities[self.selector] for c in self.censuses])

    @property
    def max_relative_change(self) -> float:
        d = self.densities
        if len(d) < 2:
            return 0.0
        ref = max(abs(d[-1]), 1e-300)
        return float(abs(d[-1] - d[-2]) / ref)

    @property
    def warnings(self) -> list:
        return [w for c in self.censuses for w in c.warnings]


def ergodic_density_curve(f, A, omega, schedule, selector: str = "any", a=None, pitch=None,
                          check_refinement: bool = True) -> DensityCurve:
    """Box-count densities (2l)^{-n} N_U for an increasing schedule of half-widths.

    A single enumeration at the largest box is restricted to the nested boxes.
    """
    schedule = [float(v) for v in schedule]
    if any(b <= a_ for a_, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be increasing")
    full = enumerate_critical(f, A, omega, schedule[-1], a=a, pitch=pitch, check_refinement=check_refinement)
    cens = [census(full, l) for l in schedule]
    for c in cens[:-1]:
        c.warnings = []
    if not any(c.counts[selector] for c in cens) and full.warnings:
        cens[-1].warnings.append("zero count with unresolved/degenerate critical set")
    return DensityCurve(cens, selector)


def signed_sum(points: CriticalSet, cell_origin) -> int:
    """Sum of sign(det H) over one fundamental cell [c, c + 1)^n (periodic case).

    Equals the Euler characteristic of the torus (zero) for a complete census.
    """
    cell_origin = np.asarray(cell_origin, dtype=float)
    x = points.x
    sel = np.all((x >= cell_origin - FACE_TOL) & (x < cell_origin + 1 - FACE_TOL), axis=1)
    if not np.any(sel):
        raise IncompleteCensusError("no critical points in the requested cell")
    if np.any(points.degenerate[sel]):
        raise IncompleteCensusError("degenerate critical points in the cell; signed sum undefined")
    signs = np.where(np.sum(points.eigs[sel] < 0, axis=1) % 2 == 0, 1, -1)
    return int(signs.sum())


def shifted_base_census(f, A, omega, x0, half_width, **kw) -> CriticalSet:
    """Critical points for the base point theta_{x0} omega (they equal Z - x0)."""
    return enumerate_critical(f, A, translate(omega, A, x0), half_width, **kw)
