"""Fixed points of annulus maps built from a rotation profile omega(q, a) = a c(q)."""

import argparse

from qsymp import fixture_path
from qsymp.annulus import fixed_points_2d, twist_condition
from qsymp.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q-max", type=float, default=100.0)
    args = ap.parse_args()

    per = load_config(fixture_path("pb2d_periodic.json")).omega_profile()
    for pt in fixed_points_2d(per, (0.0, 1.0)).points:
        print(f"periodic profile: q = {pt.q:.6f}  p = {pt.p:+.6f}  type {pt.type}  "
              f"eigenvalues {pt.eigenvalues.real.round(4)}")

    qp = load_config(fixture_path("pb2d_quasiperiodic.json")).omega_profile()
    cen = fixed_points_2d(qp, (0.0, args.q_max))
    print(f"quasiperiodic profile on [0, {args.q_max:g}): lambda+ {cen.lam_plus:.4f}, "
          f"lambda- {cen.lam_minus:.4f}, elliptic {cen.elliptic}")
    print(f"monotone-twist diagnostic (negative means monotone everywhere): {twist_condition(qp):.3f}")


if __name__ == "__main__":
    main()
