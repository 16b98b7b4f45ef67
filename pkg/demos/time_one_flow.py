"""Time-one map of a quasiperiodic Hamiltonian and its 1-periodic orbits."""

import argparse

import numpy as np

from qsymp import fixture_path
from qsymp.config import load_config
from qsymp.flow import FlowMap, exactness_residual, periodic_orbit_census, regularity_report
from qsymp.twist import symplectic_residual


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--half-width", type=float, default=3.0)
    args = ap.parse_args()

    cfg = load_config(fixture_path("flagship_flow.json"))
    K, A, w = cfg.hamiltonian(), cfg.matrix(), cfg.base_point()

    rep = regularity_report(K, A, w)
    print(f"regularity: sampled {rep.ell:.4f}, Fourier bound {rep.ell_bound:.4f}, twist {rep.twist}")

    fm = FlowMap(K, A, w)
    x = np.random.default_rng(0).uniform(-5, 5, (200, 2))
    print(f"symplectic residual over 200 probes: {np.max(symplectic_residual(fm.jet(x).jacobian)):.2e}")
    print(f"exactness residual: {exactness_residual(K, A, w, x[:20]):.2e}")

    oc = periodic_orbit_census(K, A, w, args.half_width)
    c = oc.census()
    print(f"fixed points in [-{args.half_width:g}, {args.half_width:g})^2: {c.total} "
          f"({c.counts['elliptic']} elliptic, {c.counts['hyperbolic']} hyperbolic), density {c.densities['all']:.3f}")


if __name__ == "__main__":
    main()
