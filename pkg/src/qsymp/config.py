"""Experiment configuration: strict JSON schema, named constants, validation.

A config is a JSON object.  Numbers that must be exact (entries of A,
frequencies of an annulus profile) may be given as strings such as
``"sqrt2"``, ``"golden"`` or ``"sqrt2-1"``; the original tokens are kept so a
loaded config serializes back to the same document.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .torus import QuasiPeriodicScalar, ergodicity_check, named_constant

KINDS = ("fixed-points", "ergodic-density", "kac-rice", "coarea", "flow", "pb2d", "xval")
MAP_KINDS = ("fixed-points",)
FIELD_KINDS = ("fixed-points", "ergodic-density", "kac-rice", "coarea", "xval")


@dataclass
class ExperimentConfig:
    kind: str
    d: int = 1
    N: int = 2
    A: list = dc_field(default_factory=list)
    base: list | None = None
    field: list = dc_field(default_factory=list)
    time_field: list = dc_field(default_factory=list)
    profile: dict | None = None
    q_range: list = dc_field(default_factory=lambda: [0.0, 1.0])
    half_widths: list = dc_field(default_factory=lambda: [1.0])
    eps_schedule: list = dc_field(default_factory=lambda: [0.1, 0.05, 0.025])
    samples: int = 1_000_000
    seed: int = 0
    shards: int = 8
    twist_margin: float = 0.9
    index_class: str = "any"
    step: float = 1e-3
    spread_bound: float = 0.03
    ergodic_radius: int = 50
    declared_ergodic: bool = False
    probes: int = 100
    svg: bool = False
    output_dir: str = "out"
    description: str = ""
    warnings: list = dc_field(default_factory=list, repr=False, compare=False)

    # derived objects
    @property
    def n(self) -> int:
        return 2 * self.d

    def matrix(self) -> np.ndarray:
        return np.array([[named_constant(v) for v in row] for row in self.A], dtype=float)

    def base_point(self) -> np.ndarray:
        return np.zeros(self.N) if self.base is None else np.array([named_constant(v) for v in self.base])

    def scalar_field(self) -> QuasiPeriodicScalar:
        return QuasiPeriodicScalar.from_terms(
            self.N, [(t["m"], named_constant(t.get("c", 0.0)), named_constant(t.get("s", 0.0))) for t in self.field]
        )

    def hamiltonian(self):
        from .flow import TimeField

        return TimeField.from_terms(
            self.N,
            [(t["m"], t.get("k", 0), named_constant(t.get("c", 0.0)), named_constant(t.get("s", 0.0)))
             for t in self.time_field],
        )

    def omega_profile(self):
        from .annulus import OmegaProfile

        p = self.profile or {}
        terms = tuple((named_constant(t["f"]), named_constant(t.get("c", 0.0)), named_constant(t.get("s", 0.0)))
                      for t in p.get("terms", []))
        return OmegaProfile(named_constant(p.get("scale", 1.0)), named_constant(p.get("beta", 0.0)), terms)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "warnings":
                continue
            out[f.name] = getattr(self, f.name)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_KEYS = {f.name for f in fields(ExperimentConfig)} - {"warnings"}
_MODE_KEYS = {"m", "c", "s"}
_TIME_KEYS = {"m", "k", "c", "s"}
_PROFILE_KEYS = {"scale", "beta", "terms"}
_TERM_KEYS = {"f", "c", "s"}


def config_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON experiment config; raises ConfigError listing every violation."""
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", path=str(path)) from None
    return from_dict(doc)


def from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    problems = []
    unknown = sorted(set(doc) - _KEYS)
    if unknown:
        problems.append(f"harness: unknown keys {unknown}")
    if "kind" not in doc:
        problems.append("harness: missing key 'kind'")
    if problems:
        raise ConfigError("; ".join(problems), violations=problems)
    cfg = ExperimentConfig(**doc)
    validate(cfg)
    return cfg


def _check_entries(entries, allowed, label, problems):
    for i, t in enumerate(entries):
        if not isinstance(t, dict):
            problems.append(f"{label}[{i}] must be an object")
            continue
        extra = sorted(set(t) - allowed)
        if extra:
            problems.append(f"{label}[{i}]: unknown keys {extra}")


def validate(cfg: ExperimentConfig) -> None:
    """Re-check every module precondition; collects all violations before raising."""
    p = []
    if cfg.kind not in KINDS:
        p.append(f"harness: kind must be one of {list(KINDS)}, got {cfg.kind!r}")
    if not isinstance(cfg.d, int) or cfg.d < 1:
        p.append("quasi_field: d must be a positive integer")
    if not isinstance(cfg.N, int) or cfg.N < 1:
        p.append("quasi_field: N must be a positive integer")
    if p:
        raise ConfigError("; ".join(p), violations=p)

    if cfg.kind != "pb2d":
        if cfg.N < cfg.n:
            p.append(f"quasi_field: dimension error, N={cfg.N} is smaller than n=2d={cfg.n}")
        try:
            A = cfg.matrix()
        except ConfigError as exc:
            p.append(f"quasi_field: A: {exc}")
            A = None
        if A is not None and A.shape != (cfg.N, cfg.n):
            p.append(f"quasi_field: A must be N x n = {cfg.N} x {cfg.n}, got {A.shape[0]} x {A.shape[1] if A.ndim > 1 else 0}")
            A = None
        if A is not None and cfg.N >= cfg.n and np.linalg.matrix_rank(A.T @ A) < cfg.n:
            p.append("quasi_field: A^T A is rank deficient (A must have full column rank)")
            A = None
        if cfg.base is not None and len(cfg.base) != cfg.N:
            p.append(f"quasi_field: base must have length N={cfg.N}")
    else:
        A = None

    if cfg.kind in FIELD_KINDS:
        _check_entries(cfg.field, _MODE_KEYS, "field", p)
        f = _safe(lambda: cfg.scalar_field(), p, "quasi_field: field")
        if f is not None:
            if any(isinstance(t, dict) and not any(t.get("m", [1])) for t in cfg.field):
                p.append("quasi_field: mean-zero violation, mode m = 0 present; a generating perturbation "
                         "w(Q, p) must have zero mean, otherwise the map is not a perturbation of the identity")
            if f.is_zero:
                p.append("critical_points: field is identically zero (every point is critical)")
            if A is not None:
                mA = f.mode_matrix @ A
                res = [md.m for md, v in zip(f.modes, np.linalg.norm(mA, axis=1)) if v < 1e-12 and any(md.m)]
                if res and cfg.declared_ergodic:
                    p.append(f"quasi_field: resonant modes {res} have mA = 0 although A is declared ergodic")
                if cfg.declared_ergodic:
                    rep = ergodicity_check(A, cfg.ergodic_radius)
                    if rep.zeros:
                        p.append(f"quasi_field: A declared ergodic but m A = 0 for m = {rep.argmin}")
                _twist_check(cfg, f, A, p)

    if cfg.kind == "flow":
        _check_entries(cfg.time_field, _TIME_KEYS, "time_field", p)
        K = _safe(lambda: cfg.hamiltonian(), p, "hamiltonian_flow: time_field")
        if K is not None and A is not None:
            gb, hb = K.fourier_bounds(A)
            ell = max(gb, hb)
            if math.exp(ell) >= 2.0 * 0.95:
                cfg.warnings.append(f"hamiltonian_flow: regularity bound l = {ell:.4g} gives e^l >= 1.9, "
                                    "time-one map may not be a twist map")
        if cfg.step <= 0 or abs(round(1 / cfg.step) * cfg.step - 1) > 1e-12:
            p.append(f"hamiltonian_flow: step {cfg.step} does not divide 1")

    if cfg.kind == "pb2d":
        prof = cfg.profile or {}
        extra = sorted(set(prof) - _PROFILE_KEYS)
        if extra:
            p.append(f"annulus2d: profile: unknown keys {extra}")
        _check_entries(prof.get("terms", []), _TERM_KEYS, "profile.terms", p)
        _safe(lambda: cfg.omega_profile(), p, "annulus2d: profile")
        if len(cfg.q_range) != 2 or not cfg.q_range[0] < cfg.q_range[1]:
            p.append("annulus2d: q_range must be [q0, q1] with q0 < q1")

    if not cfg.half_widths or any(h <= 0 for h in cfg.half_widths):
        p.append("critical_points: half_widths must be positive")
    elif any(b <= a for a, b in zip(cfg.half_widths, cfg.half_widths[1:])):
        p.append("critical_points: half_widths must be increasing")
    if any(e <= 0 for e in cfg.eps_schedule):
        p.append("density_estimators: eps values must be positive")
    if cfg.samples < 1 or cfg.shards < 1:
        p.append("density_estimators: samples and shards must be positive")
    if not 0.0 < cfg.twist_margin < 1.0:
        p.append("twist_map: twist_margin must lie in (0, 1)")
    if p:
        raise ConfigError("; ".join(p), violations=p)


def _safe(build, problems, label):
    try:
        return build()
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        problems.append(f"{label}: {exc}")
        return None


def _twist_check(cfg, f, A, problems):
    from .twist import twist_block_sup

    if cfg.n != A.shape[1] or A.shape[1] % 2:
        return
    sup = twist_block_sup(f, A)
    if sup > cfg.twist_margin:
        msg = f"twist_map: sup ||w_pQ|| = {sup:.4g} exceeds twist margin {cfg.twist_margin}"
        if cfg.kind in MAP_KINDS:
            problems.append(msg)
        else:
            # the critical set is scale invariant, so density runs only need the field
            cfg.warnings.append(msg + " (density run: map not constructed)")
