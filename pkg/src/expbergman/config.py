"""Run configuration and the task runner behind the command line.

A configuration is an INI file::

    [run]
    tasks = membership, lattice, schatten
    seed = 0
    output_dir = out

    [weight]
    family = EXP
    A = 1
    alpha = 1
    r_max = 0.95

    [lattice]
    r = 1.0
    s = 0.9

    [kernel]
    n_basis = 256

    [measures]
    names = atom_cluster, uniform

    [checks]
    p = 2
    q = 2
    delta = 1.0
    ratio_window = 100

Every key is optional; defaults are listed in :data:`DEFAULTS`.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .carleson import carleson_check, carleson_qlp_check, vanishing_check, write_profiles_csv
from .errors import ConfigError, ExpBergmanError, ParameterDomainError
from .geometry import (LatticeParams, build_lattice, low_discrepancy_sample,
                       separation_violations, verify_covering, write_lattice_csv)
from .kernel import (compute_moments, log_kappa_diag, log_norm_Kz, norm_ratio_statistic,
                     reproducing_residual)
from .measures import (CANONICAL_NAMES, DENSITY_FAMILIES, berezin_measure,
                       canonical_measures, read_atoms_csv)
from .toeplitz import (assemble, check_invariants, compact_tail, operator_berezin,
                       schatten_report, spectrum, write_eigenvalues_csv)
from .weights import check_membership, make_weight

OUTPUT_ENV = "EXPBERGMAN_OUTPUT_DIR"

TASKS = ("membership", "lattice", "kernel-verify", "carleson", "vanishing", "qlp",
         "toeplitz", "schatten", "tail")

DEFAULTS = {
    "run": {"tasks": "", "seed": "0", "output_dir": "expbergman-out"},
    "weight": {"family": "EXP", "A": "1.0", "alpha": "1.0", "r_max": "0.95", "rho_const": ""},
    "lattice": {"r": "1.0", "s": "0.9", "alpha_cap": "1.0", "budget": "50000",
                "check_samples": "100000"},
    "kernel": {"n_basis": "256", "verify_points": "20"},
    "measures": {"names": ", ".join(CANONICAL_NAMES), "atoms_csv": ""},
    "checks": {"p": "2", "q": "2", "qlp_p": "2", "qlp_q": "1", "delta": "",
               "p_list": "0.5, 1, 2", "dim": "200", "ratio_window": "100",
               "vanish_tol": "1e-6", "drift_tol": "1e-6", "r_sweep": "0.2, 0.4, 0.6, 0.8, 0.95",
               "thresholds": ""},
}


def _floats(text):
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _names(text):
    return [x.strip() for x in text.replace(";", ",").split(",") if x.strip()]


@dataclass
class RunConfig:
    tasks: list
    seed: int
    output_dir: str
    weight: dict
    lattice: dict
    n_basis: int
    verify_points: int
    measures: list
    atoms_csv: str
    checks: dict
    source: str = ""

    @classmethod
    def from_text(cls, text, origin="<string>"):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp.read_dict(DEFAULTS)
        try:
            cp.read_string(text, source=origin)
        except configparser.Error as exc:
            raise ConfigError(f"{origin}: {exc}") from exc
        for sec in cp.sections():
            if sec not in DEFAULTS:
                raise ConfigError(f"{origin}: unknown section [{sec}]")
            for key in cp[sec]:
                if key not in DEFAULTS[sec]:
                    raise ConfigError(f"{origin}: unknown key '{key}' in [{sec}]")

        def get(sec, key, conv):
            raw = cp[sec][key]
            try:
                return conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{origin}: [{sec}] {key} = {raw!r}: {exc}") from exc

        tasks = _names(cp["run"]["tasks"])
        bad = [t for t in tasks if t not in TASKS]
        if bad:
            raise ConfigError(f"{origin}: [run] tasks: unknown task(s) {', '.join(bad)}")
        measures = _names(cp["measures"]["names"])
        bad = [m for m in measures if m not in CANONICAL_NAMES]
        if bad:
            raise ConfigError(f"{origin}: [measures] names: unknown measure(s) {', '.join(bad)}")
        rho_const = cp["weight"]["rho_const"].strip()
        weight = {
            "family": cp["weight"]["family"].strip().upper(),
            "A": get("weight", "A", float),
            "alpha": get("weight", "alpha", float),
            "r_max": get("weight", "r_max", float),
            "rho_const": float(rho_const) if rho_const else None,
        }
        try:
            make_weight(**weight)
        except ParameterDomainError as exc:
            raise ConfigError(f"{origin}: [weight] {exc}") from exc
        lattice = {
            "r": get("lattice", "r", float),
            "s": get("lattice", "s", float),
            "alpha_cap": get("lattice", "alpha_cap", float),
            "budget": get("lattice", "budget", int),
            "check_samples": get("lattice", "check_samples", int),
        }
        delta = cp["checks"]["delta"].strip()
        checks = {
            "p": get("checks", "p", float),
            "q": get("checks", "q", float),
            "qlp_p": get("checks", "qlp_p", float),
            "qlp_q": get("checks", "qlp_q", float),
            "delta": float(delta) if delta else None,
            "p_list": get("checks", "p_list", _floats),
            "dim": get("checks", "dim", int),
            "ratio_window": get("checks", "ratio_window", float),
            "vanish_tol": get("checks", "vanish_tol", float),
            "drift_tol": get("checks", "drift_tol", float),
            "r_sweep": get("checks", "r_sweep", _floats),
            "thresholds": get("checks", "thresholds", _floats),
        }
        for key in ("ratio_window", "vanish_tol", "drift_tol"):
            if not checks[key] > 0:
                raise ConfigError(f"{origin}: [checks] {key} must be positive")
        return cls(tasks, get("run", "seed", int), cp["run"]["output_dir"].strip(), weight,
                   lattice, get("kernel", "n_basis", int), get("kernel", "verify_points", int),
                   measures, cp["measures"]["atoms_csv"].strip(), checks, text)

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = cls.from_text(text, str(path))
        if cfg.atoms_csv and not os.path.isabs(cfg.atoms_csv):
            cfg.atoms_csv = str(path.parent / cfg.atoms_csv)
        return cfg

    def config_hash(self):
        return hashlib.sha256(self.source.encode()).hexdigest()[:16]

    def resolved_output_dir(self):
        return os.environ.get(OUTPUT_ENV) or self.output_dir


@dataclass
class Assertion:
    name: str
    invariant: str
    passed: bool
    value: object = None
    limit: object = None

    def to_dict(self):
        return {"name": self.name, "invariant": self.invariant, "passed": bool(self.passed),
                "value": _plain(self.value), "limit": _plain(self.limit)}


@dataclass
class RunReport:
    provenance: dict
    results: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    error: dict | None = None

    @property
    def passed(self):
        return all(a.passed for a in self.assertions)

    def to_dict(self):
        return {
            "provenance": self.provenance,
            "results": _plain(self.results),
            "assertions": [a.to_dict() for a in self.assertions],
            "passed": self.passed,
            "error": self.error,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=True) + "\n"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


class _Context:
    """Lazily built shared objects, in dependency order."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self._cache = {}

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def weight(self):
        return self._get("weight", lambda: make_weight(**self.cfg.weight))

    @property
    def table(self):
        return self._get("table", lambda: compute_moments(self.weight, self.cfg.n_basis))

    @property
    def lattice(self):
        c = self.cfg.lattice
        params = LatticeParams(r=c["r"], s=c["s"], alpha_cap=c["alpha_cap"], budget=c["budget"])
        return self._get("lattice", lambda: build_lattice(self.weight, params, self.cfg.seed))

    @property
    def delta(self):
        d = self.cfg.checks["delta"]
        return self.cfg.lattice["r"] if d is None else d

    @property
    def measures(self):
        def build():
            allm = canonical_measures(self.weight, self.lattice)
            out = {k: allm[k] for k in self.cfg.measures}
            if self.cfg.atoms_csv:
                out["atoms_csv"] = read_atoms_csv(self.cfg.atoms_csv, "atoms_csv")
            return out
        return self._get("measures", build)


def _task_membership(ctx, rep):
    m = check_membership(ctx.weight, seed=ctx.cfg.seed)
    rep.results["membership"] = m.to_dict()
    if not ctx.weight.is_oracle:
        rep.assertions.append(Assertion("membership.min_laplacian", "weights: Laplacian of phi > 0",
                                        m.min_laplacian > 0, m.min_laplacian, 0.0))
        decay = [q for _, q in m.l0_decay]
        mono = all(b <= a + 1e-12 for a, b in zip(decay, decay[1:]))
        rep.assertions.append(Assertion("membership.l0_decay_monotone",
                                        "weights: nested decay suprema non-increasing",
                                        mono, decay))


def _task_lattice(ctx, rep):
    lat = ctx.lattice
    n = ctx.cfg.lattice["check_samples"]
    sample = low_discrepancy_sample(ctx.weight.r_max, n, ctx.cfg.seed)
    unc = verify_covering(lat, sample)
    sep = separation_violations(lat.points, lat.rho, lat.params.s * lat.params.r)
    rep.results["lattice"] = {"n_points": len(lat), "multiplicity": lat.multiplicity,
                              "n_scan": lat.n_scan, "n_repaired": lat.n_repaired,
                              "uncovered": int(len(unc)), "separation_violations": int(len(sep)),
                              "params": {"r": lat.params.r, "s": lat.params.s,
                                         "r_max": lat.params.r_max}}
    rep.assertions.append(Assertion("lattice.covering", "geometry: every sample in some D^r(w_k)",
                                    len(unc) == 0, int(len(unc)), 0))
    rep.assertions.append(Assertion("lattice.separation", "geometry: s r min(rho) separation",
                                    len(sep) == 0, int(len(sep)), 0))
    write_lattice_csv(lat, ctx.out / "lattice.csv")


def _task_kernel(ctx, rep):
    t = ctx.table
    w = ctx.weight
    rng = np.random.default_rng(ctx.cfg.seed)
    k = ctx.cfg.verify_points
    z = 0.9 * w.r_max * np.sqrt(rng.random(k)) * np.exp(2j * np.pi * rng.random(k))
    rkhs = [abs(2 * log_norm_Kz(t, zi, 2.0) - float(log_kappa_diag(t, zi)) - 2 * float(w.phi(zi)))
            for zi in z]
    resid = np.concatenate([reproducing_residual(t, np.eye(11), zi) for zi in z]).tolist()
    lh = t.log_h
    convex = lh[:-2] + lh[2:] - 2 * lh[1:-1]
    radii = np.linspace(0.0, 0.9 * w.r_max, 10)
    stats = norm_ratio_statistic(t, radii, (1.0, 2.0, 4.0))
    rep.results["kernel-verify"] = {
        "rkhs_max": max(rkhs), "reproducing_max": max(resid),
        "log_convexity_min": float(np.min(convex)),
        "norm_ratio": {p: {"spread": s, "slope": sl} for p, (_, s, sl) in stats.items()},
    }
    rep.assertions += [
        Assertion("kernel.rkhs_identity", "kernel: 2 log||K_z|| = log kappa(z,z) + 2 phi(z)",
                  max(rkhs) <= 1e-8, max(rkhs), 1e-8),
        Assertion("kernel.reproducing", "kernel: reproducing residual for monomials",
                  max(resid) <= 1e-8, max(resid), 1e-8),
        Assertion("kernel.log_convexity", "kernel: log h_n convex", bool(np.all(convex > 0)),
                  float(np.min(convex)), 0.0),
    ]
    with open(ctx.out / "moments.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "log_h"])
        for n, v in t.to_rows():
            wr.writerow([n, repr(v)])


def _window_assertions(rep, name, er, ctx, invariant):
    c = ctx.cfg.checks
    rep.assertions.append(Assertion(f"{name}.window", invariant,
                                    er.verdicts["within_window"], er.ratio_spread,
                                    c["ratio_window"]))
    if er.scaling_drift is not None:
        rep.assertions.append(Assertion(f"{name}.drift", "ratios invariant under mu -> 10 mu",
                                        er.scaling_drift <= c["drift_tol"], er.scaling_drift,
                                        c["drift_tol"]))


def _task_carleson(ctx, rep):
    c = ctx.cfg.checks
    out = {}
    for name, mu in ctx.measures.items():
        er = carleson_check(mu, ctx.weight, ctx.table, ctx.lattice, c["p"], c["q"], ctx.delta,
                            ratio_window=c["ratio_window"])
        out[name] = er.to_dict()
        _window_assertions(rep, f"carleson.{name}", er, ctx,
                           "carleson: q-Carleson quantities comparable")
        rep.assertions.append(Assertion(f"carleson.{name}.lower_bound",
                                        "carleson: test-family bound <= window * min",
                                        er.verdicts["lower_bound_valid"],
                                        er.quantities["test_lower"]))
    rep.results["carleson"] = out


def _task_vanishing(ctx, rep):
    c = ctx.cfg.checks
    out = {}
    for name, mu in ctx.measures.items():
        vr = vanishing_check(mu, ctx.weight, ctx.table, ctx.lattice, c["p"], c["q"], ctx.delta,
                             c["thresholds"] or None, c["vanish_tol"])
        out[name] = vr.to_dict()
        write_profiles_csv(vr, ctx.out / f"profiles_{name}.csv")
    rep.results["vanishing"] = out


def _task_qlp(ctx, rep):
    c = ctx.cfg.checks
    out = {}
    for name, mu in ctx.measures.items():
        er = carleson_qlp_check(mu, ctx.weight, ctx.table, ctx.lattice, c["qlp_p"], c["qlp_q"],
                                ctx.delta, ratio_window=c["ratio_window"])
        out[name] = er.to_dict()
        _window_assertions(rep, f"qlp.{name}", er, ctx, "carleson: q < p quantities comparable")
    rep.results["qlp"] = out


def _task_toeplitz(ctx, rep):
    c = ctx.cfg.checks
    t = ctx.table
    rng = np.random.default_rng(ctx.cfg.seed)
    z = 0.9 * ctx.weight.r_max * np.sqrt(rng.random(20)) * np.exp(2j * np.pi * rng.random(20))
    out = {}
    for name, mu in ctx.measures.items():
        M = assemble(mu, t, c["dim"])
        inv = check_invariants(M)
        sp = spectrum(M, c["p_list"])
        ob = np.array([operator_berezin(M, t, zi) for zi in z])
        bm = berezin_measure(mu, t, z).values
        dev = float(np.max(np.abs(ob - bm) / np.maximum(bm, 1e-300)))
        out[name] = {"invariants": inv, "spectrum": {k: v for k, v in sp.to_dict().items()
                                                     if k != "eigenvalues"},
                     "berezin_deviation": dev}
        rep.assertions += [
            Assertion(f"toeplitz.{name}.hermitian", "toeplitz: Hermitian",
                      inv["hermitian_defect"] <= 1e-12 * max(inv["lambda_max"], 1e-300),
                      inv["hermitian_defect"]),
            Assertion(f"toeplitz.{name}.psd", "toeplitz: positive semidefinite", inv["psd_ok"],
                      inv["min_eigenvalue"]),
            Assertion(f"toeplitz.{name}.trace", "toeplitz: trace equals eigenvalue sum",
                      abs(sp.trace - sp.diag_trace) <= 1e-8 * max(abs(sp.diag_trace), 1e-300),
                      [sp.trace, sp.diag_trace]),
            Assertion(f"toeplitz.{name}.berezin", "toeplitz: operator Berezin equals mu tilde",
                      dev <= 1e-6, dev, 1e-6),
        ]
        if M.radial:
            rep.assertions.append(Assertion(
                f"toeplitz.{name}.diagonal", "toeplitz: radial measure gives diagonal matrix",
                inv["offdiag_max"] <= 1e-10 * inv["lambda_max"], inv["offdiag_max"]))
        write_eigenvalues_csv(sp, ctx.out / f"eigenvalues_{name}.csv")
    rep.results["toeplitz"] = out


def _task_schatten(ctx, rep):
    c = ctx.cfg.checks
    out = {}
    for name, mu in ctx.measures.items():
        reps = schatten_report(mu, ctx.weight, ctx.table, ctx.lattice, ctx.delta, c["p_list"],
                               c["dim"], ratio_window=c["ratio_window"])
        out[name] = {repr(p): er.to_dict() for p, er in reps.items()}
        for p, er in reps.items():
            _window_assertions(rep, f"schatten.{name}.p={p:g}", er, ctx,
                               "toeplitz: Schatten quantities comparable")
    rep.results["schatten"] = out


def _task_tail(ctx, rep):
    c = ctx.cfg.checks
    out = {}
    for name, mu in ctx.measures.items():
        sweep = compact_tail(mu, ctx.table, c["dim"], c["r_sweep"])
        out[name] = [[R, v] for R, v in sweep]
        vals = [v for _, v in sweep]
        mono = all(b <= a * (1 + 1e-9) + 1e-300 for a, b in zip(vals, vals[1:]))
        rep.assertions.append(Assertion(f"tail.{name}.monotone",
                                        "toeplitz: ||T_mu - T_mu_R|| non-increasing in R",
                                        mono, vals))
        beyond = [v for R, v in sweep if R >= mu.support_radius]
        rep.assertions.append(Assertion(f"tail.{name}.zero_beyond_support",
                                        "toeplitz: difference vanishes once R covers support",
                                        all(v == 0.0 for v in beyond), beyond))
    rep.results["tail"] = out


RUNNERS = {
    "membership": _task_membership,
    "lattice": _task_lattice,
    "kernel-verify": _task_kernel,
    "carleson": _task_carleson,
    "vanishing": _task_vanishing,
    "qlp": _task_qlp,
    "toeplitz": _task_toeplitz,
    "schatten": _task_schatten,
    "tail": _task_tail,
}


def run(cfg: RunConfig) -> RunReport:
    """Execute the configured tasks in dependency order and write ``report.json``.

    Numerical errors propagate as :class:`ExpBergmanError` with the task name
    prefixed to the message; the partial report is still written.
    """
    out = Path(cfg.resolved_output_dir())
    out.mkdir(parents=True, exist_ok=True)
    rep = RunReport(provenance={"config_hash": cfg.config_hash(), "version": __version__,
                                "tasks": list(cfg.tasks),
                                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())})
    ctx = _Context(cfg, out)
    try:
        for task in [t for t in TASKS if t in cfg.tasks]:
            try:
                RUNNERS[task](ctx, rep)
            except ExpBergmanError as exc:
                exc.args = (f"task {task}: {exc}",) + exc.args[1:]
                rep.error = {"task": task, "type": type(exc).__name__, "message": str(exc)}
                raise
    finally:
        (out / "report.json").write_text(rep.to_json())
    return rep


def list_families() -> dict:
    return {
        "weight_families": {
            "EXP": "phi = A (1 - |z|^2)^(-alpha), A > 0, alpha > 0",
            "FLAT-oracle": "phi = 0 (config family FLAT); kernel (1 - z conj(w))^-2",
        },
        "oracle_modes": ["FLAT-oracle", "constant rho override (weight.rho_const)"],
        "density_families": sorted(DENSITY_FAMILIES),
        "canonical_measures": list(CANONICAL_NAMES),
        "tasks": list(TASKS),
    }


def strip_timestamp(report_text: str) -> str:
    """Report JSON with the timestamp removed, for determinism comparisons."""
    d = json.loads(report_text)
    d["provenance"].pop("timestamp", None)
    return json.dumps(d, sort_keys=True, indent=2)


__all__ = ["RunConfig", "RunReport", "Assertion", "run", "list_families", "TASKS",
           "OUTPUT_ENV", "strip_timestamp"]
