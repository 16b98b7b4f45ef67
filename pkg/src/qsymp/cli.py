"""Command line front end: ``qsymp <command> --config <path> [--seed] [--threads] [--out]``.

Exit codes: 0 ok, 2 invalid config, 3 numerical failure, 4 unresolved-field
warning with ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_digest, load_config
from .errors import ConfigError, NumericalError, QsympError, UnresolvedFieldWarning
from .io import write_csv, write_svg_lines

COMMANDS = ("spectral-check", "fixed-points", "ergodic-density", "kac-rice", "coarea", "flow", "pb2d", "xval",
            "mean-displacement")
NEEDS = {
    "spectral-check": "field", "fixed-points": "field", "ergodic-density": "field", "kac-rice": "field",
    "coarea": "field", "xval": "field", "flow": "time_field", "mean-displacement": "time_field",
    "pb2d": "profile",
}


class Run:
    def __init__(self, cfg: ExperimentConfig, out: Path, threads: int):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.outputs = {}

    def csv(self, name, header, rows):
        self.outputs[name] = write_csv(self.out / name, header, rows)

    def svg(self, name, *args, **kw):
        if self.cfg.svg:
            write_svg_lines(self.out / name, *args, **kw)


def cmd_spectral_check(run: Run):
    from .torus import ergodicity_check, spectral_h_minus1

    cfg = run.cfg
    A = cfg.matrix()
    rep = ergodicity_check(A, cfg.ergodic_radius)
    rows = [
        ("h_minus1", spectral_h_minus1(cfg.scalar_field(), A)),
        ("normalization", "|a_m|^2=(c^2+s^2)/4"),
        ("radius", rep.radius),
        ("min_norm_mA", rep.min_norm),
        ("argmin", " ".join(str(v) for v in rep.argmin) if rep.argmin else ""),
        ("resonances", len(rep.zeros)),
        ("diophantine_exponent_window", rep.diophantine_exponent),
    ]
    run.csv("spectral.csv", ["quantity", "value"], rows)


def _critical_rows(cs):
    return [(*r.x, r.residual, r.index, *r.hessian_eigs) for r in cs]


def cmd_fixed_points(run: Run):
    from .critical import census, enumerate_critical
    from .twist import GeneratingMap

    cfg = run.cfg
    A, f, base = cfg.matrix(), cfg.scalar_field(), cfg.base_point()
    gm = GeneratingMap(f, A, base, cfg.twist_margin)
    cs = enumerate_critical(f, A, base, cfg.half_widths[-1])
    n = cfg.n
    disp = np.linalg.norm(gm(cs.x) - cs.x, axis=1) if len(cs) else np.zeros(0)
    hdr = [f"x{i}" for i in range(n)] + ["residual", "index"] + [f"eig{i}" for i in range(n)] + ["map_residual"]
    run.csv("critical_points.csv", hdr, [(*row, dr) for row, dr in zip(_critical_rows(cs), disp)])
    _census_csv(run, [census(cs, l) for l in cfg.half_widths])


def _census_csv(run: Run, cens, name="census.csv"):
    rows = []
    for c in cens:
        for k in c.counts:
            rows.append((c.half_width, k, c.counts[k], c.densities[k]))
    run.csv(name, ["half_width", "class", "count", "density"], rows)


def cmd_ergodic_density(run: Run):
    from .critical import ergodic_density_curve

    cfg = run.cfg
    curve = ergodic_density_curve(cfg.scalar_field(), cfg.matrix(), cfg.base_point(), cfg.half_widths,
                                  cfg.index_class)
    _census_csv(run, curve.censuses)
    run.csv("density_curve.csv", ["half_width", "density"],
            list(zip(cfg.half_widths, curve.densities)))
    run.svg("density_curve.svg", [(cfg.half_widths, curve.densities, cfg.index_class)],
            title="ergodic density", xlabel="half-width", ylabel="density")


def _kr_rows(ests):
    return [("kac-rice", e.value, e.stderr, e.epsilon, e.samples, e.hits, e.diagnostic) for e in ests]


KR_HEADER = ["method", "value", "stderr", "epsilon", "samples", "hits", "note"]


def cmd_kac_rice(run: Run):
    from .density import kac_rice_schedule

    cfg = run.cfg
    krs = kac_rice_schedule(cfg.scalar_field(), cfg.matrix(), cfg.eps_schedule, cfg.samples, cfg.seed,
                            cfg.index_class, cfg.shards, run.threads)
    rows = _kr_rows(krs.estimates)
    rows.append(("kac-rice-reported", krs.value, krs.stderr, krs.estimates[krs.chosen].epsilon, cfg.samples,
                 krs.estimates[krs.chosen].hits, "stable" if krs.stable else "unstable"))
    if not krs.stable:
        warnings.warn("Kac-Rice estimates not stable over the last two eps values")
    run.csv("kacrice.csv", KR_HEADER, rows)


def cmd_coarea(run: Run):
    from .density import coarea_density, trace_level_set

    cfg = run.cfg
    f, A = cfg.scalar_field(), cfg.matrix()
    if A.shape[0] == A.shape[1]:
        val = coarea_density(f, A, cfg.index_class)
        run.csv("coarea.csv", ["method", "value", "components", "arclength"], [("coarea-count", val, "", "")])
        return
    curves = trace_level_set(f, A)
    val = coarea_density(f, A, cfg.index_class, curves=curves)
    run.csv("coarea.csv", ["method", "value", "components", "arclength"],
            [("coarea-curve", val, len(curves), sum(c.arclength for c in curves))])
    rows = []
    for i, c in enumerate(curves):
        for v in c.vertices:
            rows.append((i, *v))
    run.csv("level_curves.csv", ["component"] + [f"omega{j}" for j in range(A.shape[0])], rows)
    if curves:
        run.svg("level_curves.svg", [(c.unwrapped()[:, 0], c.unwrapped()[:, 1], f"component {i}")
                                     for i, c in enumerate(curves)],
                title="level set projection", xlabel="omega0", ylabel="omega1")


def cmd_xval(run: Run):
    from .density import cross_validate

    cfg = run.cfg
    rep = cross_validate(cfg.scalar_field(), cfg.matrix(), cfg.base_point(), cfg.half_widths[-1],
                         cfg.eps_schedule, cfg.samples, cfg.seed, cfg.index_class, cfg.shards, run.threads,
                         cfg.spread_bound)
    rows = [("ergodic", rep.ergodic, "", "", "", "", f"half_width={rep.half_width}")]
    rows += _kr_rows(rep.kacrice)
    rows.append(("kac-rice-reported", rep.kacrice_value, rep.kacrice_stderr, "", cfg.samples, "",
                 "stable" if rep.kacrice_stable else "unstable"))
    rows.append(("coarea", rep.coarea, "", "", "", "", ""))
    rows.append(("spread", rep.spread, "", "", "", "", "flagged" if rep.flagged else "ok"))
    run.csv("density_report.csv", KR_HEADER, rows)


def cmd_flow(run: Run):
    from .flow import exactness_residual, integrate_flow, periodic_orbit_census, regularity_report

    cfg = run.cfg
    K, A, base = cfg.hamiltonian(), cfg.matrix(), cfg.base_point()
    r = integrate_flow(K, A, base, cfg.step, record_path=True)
    t = np.linspace(0.0, 1.0, len(r.path))
    run.csv("trajectory.csv", ["t"] + [f"omega{j}" for j in range(cfg.N)], [(ti, *w) for ti, w in zip(t, r.path)])
    rep = regularity_report(K, A, base, seed=cfg.seed, step=cfg.step)
    rows = [("zeta" + str(i), z) for i, z in enumerate(r.zeta)]
    rows += [(f"monodromy{i}{j}", r.monodromy[i, j]) for i in range(cfg.n) for j in range(cfg.n)]
    rows += [("step_halving_error", r.error_estimate), ("ell_sampled", rep.ell), ("ell_fourier", rep.ell_bound),
             ("twist", rep.twist), ("displacement_max", rep.displacement_max),
             ("jacobian_dev_max", rep.jacobian_dev_max), ("bounds_hold", rep.ok)]
    if rep.twist and not K.is_zero:
        rng = np.random.default_rng(cfg.seed)
        probes = rng.uniform(-1, 1, (min(cfg.probes, 20), cfg.n))
        rows.append(("exactness_residual", exactness_residual(K, A, base, probes, cfg.step)))
    run.csv("flow_summary.csv", ["quantity", "value"], rows)
    if rep.twist and not K.is_zero and len(cfg.half_widths) and cfg.half_widths != [1.0]:
        oc = periodic_orbit_census(K, A, base, cfg.half_widths[-1])
        _census_csv(run, [oc.census(l) for l in cfg.half_widths], "orbit_census.csv")
    run.svg("trajectory.svg", [(t, r.path[:, j], f"omega{j}") for j in range(cfg.N)],
            title="torus trajectory", xlabel="t", ylabel="omega")


def cmd_mean_displacement(run: Run):
    from .flow import mean_displacement

    cfg = run.cfg
    md = mean_displacement(cfg.hamiltonian(), cfg.matrix(), cfg.samples, cfg.seed, cfg.shards)
    rows = [(i, m, s, abs(m) <= 3 * s + 1e-15) for i, (m, s) in enumerate(zip(md.mean, md.stderr))]
    run.csv("mean_displacement.csv", ["component", "mean", "stderr", "within_band"], rows)


def cmd_pb2d(run: Run):
    from .annulus import fixed_points_2d, twist_condition

    cfg = run.cfg
    prof = cfg.omega_profile()
    res = fixed_points_2d(prof, tuple(cfg.q_range))
    rows = [(x.q, x.p, x.type, x.eigenvalues[0].real, x.eigenvalues[1].real, x.psi2) for x in res.points]
    run.csv("annulus_fixed_points.csv", ["q", "p", "type", "eig0", "eig1", "psi2"], rows)
    tc = twist_condition(prof, q_range=tuple(cfg.q_range))
    run.csv("annulus_summary.csv", ["quantity", "value"],
            [("lambda_plus", res.lam_plus), ("lambda_minus", res.lam_minus), ("elliptic", res.elliptic),
             ("degenerate", res.degenerate), ("twist_condition_max", tc), ("monotone_twist", tc < 0)])
    for msg in res.warnings:
        warnings.warn(msg, UnresolvedFieldWarning)
    if cfg.svg:
        q0, q1 = cfg.q_range
        q = np.linspace(q0, min(q1, q0 + 20), 2000)
        psi = 1.0 / (2 * prof.c(q))
        marks = [(x.q, 1.0 / (2 * prof.c(x.q)), "#d62728" if x.type == "+" else "#1f77b4")
                 for x in res.points if x.q <= q[-1]]
        run.svg("psi.svg", [(q, psi, "psi")], title="psi and fixed points", xlabel="q", ylabel="psi",
                markers=marks)


HANDLERS = {
    "spectral-check": cmd_spectral_check, "fixed-points": cmd_fixed_points,
    "ergodic-density": cmd_ergodic_density, "kac-rice": cmd_kac_rice, "coarea": cmd_coarea,
    "flow": cmd_flow, "pb2d": cmd_pb2d, "xval": cmd_xval, "mean-displacement": cmd_mean_displacement,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsymp", description="Quasiperiodic symplectic twist-map laboratory.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    ap.add_argument("--samples", type=int, default=None, help="override the Monte Carlo sample count")
    ap.add_argument("--strict", action="store_true", help="exit 4 on unresolved-field warnings")
    return ap


def _error(out: Path | None, exc: QsympError, code: int) -> int:
    rec = exc.record()
    text = json.dumps(rec, sort_keys=True, default=str)
    print(text, file=sys.stderr)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(text + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    out = None
    try:
        raw = Path(args.config).read_bytes()
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.samples is not None:
            cfg.samples = args.samples
        out = Path(args.out if args.out else cfg.output_dir)
        need = NEEDS[args.command]
        if not getattr(cfg, need):
            raise ConfigError(f"command {args.command} needs '{need}' in the config")
        out.mkdir(parents=True, exist_ok=True)
        run = Run(cfg, out, args.threads)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            HANDLERS[args.command](run)
    except ConfigError as exc:
        return _error(out, exc, 2)
    except NumericalError as exc:
        return _error(out, exc, 3)
    except FileNotFoundError as exc:
        return _error(None, ConfigError(str(exc)), 2)
    msgs = list(cfg.warnings) + [str(w.message) for w in caught]
    unresolved = any(issubclass(w.category, UnresolvedFieldWarning) for w in caught)
    manifest = {
        "command": args.command,
        "config_digest": config_digest(raw),
        "seed": cfg.seed,
        "shards": cfg.shards,
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "warnings": msgs,
        "outputs": run.outputs,
        "normalization": "|a_m|^2 = (c^2 + s^2)/4 per {m, -m} pair",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for m in msgs:
        print(f"warning: {m}", file=sys.stderr)
    print(json.dumps({"command": args.command, "outputs": run.outputs}, sort_keys=True))
    if args.strict and unresolved:
        return 4
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
