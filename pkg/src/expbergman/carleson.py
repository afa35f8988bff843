"""Carleson-type equivalence checks and the constructive test apparatus.

Each check evaluates several quantities that the theory declares mutually
comparable and reports their ratios.  All quantities are first-power
homogeneous in the measure, so the ratio matrix must be invariant under
``mu -> c mu``; the reported scaling drift measures that invariance.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ContractError
from .kernel import basis_vectors, kappa, kappa_rings, log_kappa_diag, log_norm_Kz
from .measures import (Measure, TransformField, _lp_seq, avg_function, berezin_measure,
                       decay_profile, lattice_values, lp_norm)
from .quadrature import field_grid

DEFAULT_RATIO_WINDOW = 100.0
DEFAULT_VANISH_TOL = 1e-6
NET_SAMPLES = 64
SCALE_PROBE = 10.0
RADIAL_NODES = 97
PROBE_RADIAL = 96
PROBE_THETA = 128


@dataclass
class EquivalenceReport:
    """Comparable quantities, their ratio matrix and verdicts.

    ``pairwise_ratios[i][j] = quantities[i] / quantities[j]``; entries are
    ``None`` unless both quantities are positive.
    """

    quantities: dict
    provenance: dict
    pairwise_ratios: list
    ratio_spread: float | None
    scaling_drift: float | None
    verdicts: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def names(self):
        return list(self.quantities)

    def to_dict(self) -> dict:
        return {
            "quantities": {k: float(v) for k, v in self.quantities.items()},
            "provenance": dict(self.provenance),
            "pairwise_ratios": self.pairwise_ratios,
            "ratio_spread": self.ratio_spread,
            "scaling_drift": self.scaling_drift,
            "verdicts": dict(self.verdicts),
            "extra": _plain(self.extra),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def ratio_matrix(values):
    v = np.asarray(values, dtype=float)
    if np.all(v > 0):
        return v[:, None] / v[None, :]
    return None


def equivalence_report(compute, mu, provenance, ratio_window=DEFAULT_RATIO_WINDOW,
                       scale=SCALE_PROBE, extra=None) -> EquivalenceReport:
    """Evaluate ``compute(mu)`` and ``compute(scale * mu)`` and compare ratios."""
    q = compute(mu)
    names = list(q)
    vals = np.array([q[k] for k in names], dtype=float)
    R = ratio_matrix(vals)
    drift = spread = None
    if R is not None:
        spread = float(vals.max() / vals.min())
        q2 = compute(mu.scaled(scale))
        R2 = ratio_matrix([q2[k] for k in names])
        drift = float(np.max(np.abs(R2 / R - 1.0))) if R2 is not None else float("inf")
    elif np.all(vals == 0):
        drift = 0.0
    verdicts = {
        "all_zero": bool(np.all(vals == 0)),
        "within_window": bool(np.all(vals == 0) or (spread is not None and spread <= ratio_window)),
        "ratio_window": ratio_window,
    }
    return EquivalenceReport(
        quantities=dict(zip(names, vals.tolist())),
        provenance={k: provenance.get(k, "") for k in names},
        pairwise_ratios=None if R is None else R.tolist(),
        ratio_spread=spread,
        scaling_drift=drift,
        verdicts=verdicts,
        extra=extra or {},
    )


# ---------------------------------------------------------------------------
# normalized test kernels on a net


_NORM_TABLES: dict = {}


def norm_table(table, p, radii=None, grid=None):
    """Spline of ``log ||K_t||_{A^p} - phi(t)`` over the radius.

    The norm of ``K_z`` depends only on ``|z|`` for a radial weight, so one
    radial sweep serves every net point.  Default sweeps are cached per
    moment table.
    """
    default = radii is None and grid is None
    key = (id(table), float(p))
    if default and key in _NORM_TABLES and _NORM_TABLES[key][0] is table:
        return _NORM_TABLES[key][1]
    if radii is None:
        radii = np.linspace(0.0, 0.9 * table.weight.r_max, 49)
    if p == 2 and grid is None:
        vals = 0.5 * log_kappa_diag(table, np.asarray(radii, dtype=complex))
    else:
        grid = table.grid if grid is None else grid
        vals = np.array([log_norm_Kz(table, t, p, grid) - float(table.weight.phi_radial(t))
                         for t in radii])
    spline = CubicSpline(radii, vals)
    if default:
        _NORM_TABLES[key] = (table, spline)
    return spline


def test_net(weight, lat, n_extra=NET_SAMPLES, radius=None):
    """Lattice points plus radial-angular samples, all within ``radius``.

    ``radius`` defaults to ``0.9 r_max``, where the truncated basis still
    resolves the test kernels.
    """
    radius = 0.9 * weight.r_max if radius is None else radius
    pts = lat.points[np.abs(lat.points) <= radius] if lat is not None else np.zeros(0, complex)
    m = int(np.sqrt(n_extra))
    rad = radius * (np.arange(1, m + 1) / m)
    ang = 2 * np.pi * (np.arange(n_extra // m) + 0.5) / (n_extra // m)
    extra = (rad[:, None] * np.exp(1j * ang)[None, :]).ravel()
    return np.concatenate([pts, extra])


def ring_layout(mu: Measure, weight, n_theta=256):
    """Densities of ``mu`` as ring quadrature.

    Returns a list of ``(radii, weights[n_r, n_theta], n_theta, radial)``.
    """
    out = []
    for d in mu.densities:
        if d.radial:
            pts, w = d.discretize(weight, n_theta)
            n_r = len(pts) // n_theta
            radii = np.abs(pts.reshape(n_r, n_theta)[:, 0])
            out.append((radii, w.reshape(n_r, n_theta), n_theta, True))
        else:
            g = d.grid
            w = g.weights * d.values * d.scale * (g.radii <= d.support_radius)[:, None]
            out.append((g.radii, w, g.n_theta, False))
    return out


def _ring_integrals(table, centers, radii, w, n_theta, q):
    out = np.empty(len(centers))
    for i, a in enumerate(centers):
        kr = kappa_rings(table, a, radii, n_theta)
        out[i] = np.sum(np.abs(kr) ** q * w)
    return out


def test_integrals(mu: Measure, table, centers, p, q, spline=None, layout=None):
    """``int |k_{p,a}|^q e^{-q phi} dmu`` for every center ``a``."""
    wt = table.weight
    centers = np.asarray(centers, dtype=complex)
    if spline is None:
        spline = norm_table(table, p)
    if layout is None:
        layout = ring_layout(mu, wt)
    # k_{p,a}(x) e^{-phi(x)} = kappa(x, a) e^{phi(a) - log||K_a||_p}
    if p == 2:
        scale = np.exp(-0.5 * log_kappa_diag(table, centers))
    else:
        scale = np.exp(-spline(np.abs(centers)))
    out = np.zeros(len(centers))
    if mu.n_atoms:
        kk = kappa(table, mu.points[None, :], centers[:, None])
        out += np.abs(kk) ** q @ mu.masses
    for radii, w, n_theta, radial in layout:
        if radial and len(centers) > RADIAL_NODES:
            # rotation invariance: the integral depends on |a| only
            mod = np.abs(centers)
            t = np.linspace(0.0, float(mod.max()), RADIAL_NODES)
            vals = _ring_integrals(table, t, radii, w, n_theta, q)
            out += np.exp(CubicSpline(t, np.log(vals))(mod))
        else:
            out += _ring_integrals(table, centers, radii, w, n_theta, q)
    return out * scale**q


# ---------------------------------------------------------------------------
# equivalence checks


def _samples(weight, lat, grid):
    """Grid points followed by the lattice points (which reach r_max)."""
    extra = np.zeros(0, complex)
    if lat is not None:
        extra = lat.points
    return np.concatenate([grid.points.ravel(), extra]), extra


def _sampled(transform, grid, extra):
    """A transform evaluated on the grid (fast ring paths) and extra points."""
    on_grid = transform(grid).values.ravel()
    if len(extra) == 0:
        return on_grid
    return np.concatenate([on_grid, transform(extra).values.ravel()])


def carleson_check(mu: Measure, weight, table, lat, p, q, delta=None, grid=None, net=None,
                   ratio_window=DEFAULT_RATIO_WINDOW, spline=None) -> EquivalenceReport:
    """q-Carleson quantities for A^p with ``p <= q``.

    (i) sampled sup of ``mu_tilde rho^e``, (ii) sampled sup of
    ``mu_hat_delta rho^e``, (iii) lattice sup of ``mu_hat_r rho^e`` with
    ``e = 2 - 2q/p``, and (iv) the lower bound ``sup_a ||k_{p,a}||^q_{L^q_mu}``
    over a test net.
    """
    if not (0 < p <= q):
        raise ContractError("carleson_check needs 0 < p <= q")
    delta = lat.params.r if delta is None else delta
    grid = field_grid(weight) if grid is None else grid
    e = 2.0 - 2.0 * q / p
    z, extra = _samples(weight, lat, grid)
    rho_e = weight.rho(z) ** e
    net = test_net(weight, lat) if net is None else net
    spline = norm_table(table, p) if (spline is None and not mu.is_zero()) else spline

    def compute(m):
        if m.is_zero():
            return dict.fromkeys(["berezin_sup", "avg_sup", "lattice_sup", "test_lower"], 0.0)
        bt = _sampled(lambda x: berezin_measure(m, table, x), grid, extra)
        av = _sampled(lambda x: avg_function(m, weight, delta, x), grid, extra)
        lv = lattice_values(m, weight, lat) * lat.rho**e
        low = test_integrals(m, table, net, p, q, spline)
        return {
            "berezin_sup": float(np.max(bt * rho_e)),
            "avg_sup": float(np.max(av * rho_e)),
            "lattice_sup": float(np.max(lv)),
            "test_lower": float(np.max(low)),
        }

    prov = {
        "berezin_sup": "Berezin transform times rho^(2-2q/p), sampled supremum",
        "avg_sup": "averaging function at delta times rho^(2-2q/p), sampled supremum",
        "lattice_sup": "lattice averages times rho^(2-2q/p), supremum",
        "test_lower": "sup of ||k_{p,a}||^q in L^q(mu) over the test net (lower bound for ||Id||^q)",
    }
    rep = equivalence_report(compute, mu, prov, ratio_window,
                             extra={"p": p, "q": q, "delta": delta, "exponent": e})
    vals = rep.quantities
    if rep.verdicts["all_zero"]:
        rep.verdicts["carleson"] = "Carleson with norm 0"
    else:
        rep.verdicts["carleson"] = "Carleson-consistent" if rep.verdicts["within_window"] \
            else "inconsistent"
    low = vals["test_lower"]
    top = min(vals["berezin_sup"], vals["avg_sup"], vals["lattice_sup"])
    rep.verdicts["lower_bound_valid"] = bool(low <= ratio_window * top)
    return rep


@dataclass
class VanishingReport:
    profiles: dict
    peaks: dict
    verdict: str
    vanish_tol: float
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "profiles": {k: [[t, v] for t, v in prof] for k, prof in self.profiles.items()},
            "peaks": dict(self.peaks),
            "verdict": self.verdict,
            "vanish_tol": self.vanish_tol,
            "extra": _plain(self.extra),
        }

    def profile_rows(self):
        rows = []
        for name, prof in self.profiles.items():
            rows.extend((name, t, v) for t, v in prof)
        return rows


def default_thresholds(weight, n=9, top=0.98):
    return [round(float(t), 6) for t in np.linspace(0.1, top, n) * weight.r_max]


def vanishing_check(mu: Measure, weight, table, lat, p, q, delta=None, thresholds=None,
                    vanish_tol=DEFAULT_VANISH_TOL, grid=None) -> VanishingReport:
    """Decay profiles of the vanishing q-Carleson quantities.

    The verdict is ``"vanishing-consistent"`` when every profile drops below
    ``vanish_tol`` times its peak by the last sampled band.
    """
    if not (0 < p <= q):
        raise ContractError("vanishing_check needs 0 < p <= q")
    delta = lat.params.r if delta is None else delta
    grid = field_grid(weight) if grid is None else grid
    thresholds = default_thresholds(weight) if thresholds is None else list(thresholds)
    e = 2.0 - 2.0 * q / p
    z, extra = _samples(weight, lat, grid)
    rho_e = weight.rho(z) ** e
    bt = _sampled(lambda x: berezin_measure(mu, table, x), grid, extra)
    av = _sampled(lambda x: avg_function(mu, weight, delta, x), grid, extra)
    fields = {
        "berezin": TransformField(z, bt * rho_e, "custom"),
        "avg": TransformField(z, av * rho_e, "custom"),
        "lattice": TransformField(lat.points, lattice_values(mu, weight, lat) * lat.rho**e,
                                  "custom"),
    }
    profiles = {k: decay_profile(f, thresholds) for k, f in fields.items()}
    peaks = {k: float(np.max(f.values)) if f.values.size else 0.0 for k, f in fields.items()}
    ok = all(prof[-1][1] <= vanish_tol * peaks[k] for k, prof in profiles.items())
    return VanishingReport(profiles, peaks, "vanishing-consistent" if ok else "not vanishing",
                           vanish_tol, {"p": p, "q": q, "delta": delta, "exponent": e})


def carleson_qlp_check(mu: Measure, weight, table, lat, p, q, delta=None, grid=None,
                       ratio_window=DEFAULT_RATIO_WINDOW) -> EquivalenceReport:
    """Quantities for ``q < p``: norms in ``L^s(dA)`` and ``l^s``, ``s = p/(p-q)``."""
    if not (0 < q < p):
        raise ContractError("carleson_qlp_check needs 0 < q < p")
    delta = lat.params.r if delta is None else delta
    grid = field_grid(weight) if grid is None else grid
    s = p / (p - q)
    e = 2.0 - 2.0 * q / p

    def compute(m):
        if m.is_zero():
            return {"berezin_norm": 0.0, "avg_norm": 0.0, "lattice_norm": 0.0}
        return {
            "berezin_norm": lp_norm(berezin_measure(m, table, grid), s),
            "avg_norm": lp_norm(avg_function(m, weight, delta, grid), s),
            "lattice_norm": _lp_seq(lattice_values(m, weight, lat) * lat.rho**e, s),
        }

    prov = {
        "berezin_norm": "L^{p/(p-q)}(dA) norm of the Berezin transform",
        "avg_norm": "L^{p/(p-q)}(dA) norm of the averaging function at delta",
        "lattice_norm": "l^{p/(p-q)} norm of lattice averages times rho^(2-2q/p)",
    }
    return equivalence_report(compute, mu, prov, ratio_window,
                              extra={"p": p, "q": q, "s": s, "delta": delta})


def lp_equivalence_check(mu: Measure, weight, table, lat, p, delta=None, grid=None,
                         ratio_window=DEFAULT_RATIO_WINDOW) -> EquivalenceReport:
    """L^p(dA) membership quantities of a measure.

    ``||mu_tilde||_{L^p}``, ``||mu_hat_delta||_{L^p}`` and the lattice sum
    ``(sum_k [mu_hat_r(a_k) rho(a_k)^(2/p)]^p)^(1/p)``.
    """
    if not p > 0:
        raise ContractError("lp_equivalence_check needs p > 0")
    delta = lat.params.r if delta is None else delta
    grid = field_grid(weight) if grid is None else grid

    def compute(m):
        if m.is_zero():
            return {"berezin_norm": 0.0, "avg_norm": 0.0, "lattice_norm": 0.0}
        return {
            "berezin_norm": lp_norm(berezin_measure(m, table, grid), p),
            "avg_norm": lp_norm(avg_function(m, weight, delta, grid), p),
            "lattice_norm": _lp_seq(lattice_values(m, weight, lat) * lat.rho ** (2.0 / p), p),
        }

    prov = {
        "berezin_norm": "L^p(dA) norm of the Berezin transform",
        "avg_norm": "L^p(dA) norm of the averaging function at delta",
        "lattice_norm": "l^p norm of lattice averages times rho^(2/p)",
    }
    return equivalence_report(compute, mu, prov, ratio_window, extra={"p": p, "delta": delta})


# ---------------------------------------------------------------------------
# atomic decomposition and Khinchine probe


@dataclass(frozen=True, eq=False)
class AtomicFunction:
    """``F = sum_k c_k k_{p,w_k}``, evaluated in the weighted form ``F e^{-phi}``."""

    table: object
    centers: np.ndarray
    coeffs: np.ndarray
    p: float
    log_norms: np.ndarray
    norm: float
    coeff_norm: float

    @property
    def ratio(self):
        return self.norm / self.coeff_norm if self.coeff_norm > 0 else float("nan")

    def _scales(self):
        wt = self.table.weight
        return self.coeffs * np.exp(wt.phi(self.centers) - self.log_norms)

    def weighted(self, x):
        x = np.asarray(x, dtype=complex)
        k = kappa(self.table, x[..., None], self.centers)
        return k @ self._scales()

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        return self.weighted(x) * np.exp(self.table.weight.phi(x))

    def report(self):
        return {"norm": self.norm, "coeff_norm": self.coeff_norm, "ratio": self.ratio,
                "p": self.p, "n_atoms": int(np.count_nonzero(self.coeffs))}


def atomic_grid(weight, n_theta=512):
    """Grid on the whole truncated disc for norms of atomic sums."""
    return field_grid(weight, radius=weight.r_max, n_theta=n_theta)


def build_atomic_function(lat, c, p, table, grid=None, max_atoms=500) -> AtomicFunction:
    """Atomic sum over lattice points with coefficients ``c`` (one per point).

    Normalizing norms and ``||F||_{A^p}`` use the same quadrature grid, so a
    single unit coefficient reproduces norm 1 to rounding.
    """
    c = np.asarray(c, dtype=complex)
    if len(c) != len(lat.points):
        raise ContractError("need one coefficient per lattice point")
    idx = np.nonzero(c)[0]
    if len(idx) > max_atoms:
        raise ContractError(f"at most {max_atoms} nonzero coefficients are supported")
    grid = atomic_grid(table.weight) if grid is None else grid
    centers = lat.points[idx]
    coeffs = c[idx]
    wt = table.weight
    log_norms = np.array([log_norm_Kz(table, a, p, grid) for a in centers])
    acc = np.zeros(grid.shape, dtype=complex)
    for a, ck, ln in zip(centers, coeffs, log_norms):
        acc += ck * np.exp(float(wt.phi_radial(abs(a))) - ln) * \
            kappa_rings(table, a, grid.radii, grid.n_theta)
    vals = np.abs(acc)
    top = float(np.max(vals)) if vals.size else 0.0
    norm = 0.0 if top == 0 else top * grid.integrate((vals / top) ** p) ** (1 / p)
    return AtomicFunction(table, centers, coeffs, float(p), log_norms, float(norm),
                          _lp_seq(np.abs(coeffs), p))


def khinchine_probe(mu: Measure, lat, c, p, q, table, trials=64, seed=0, r=None, grid=None):
    """Random-sign average of ``||sum eps_k c_k k_{p,w_k}||^q`` in ``L^q(mu)``.

    Returns ``(mc_mean, rhs, ratio)`` where ``rhs = sum |c_k|^q
    int_{D^r(w_k)} |k_{p,w_k} e^{-phi}|^q dmu``.
    """
    if trials < 64:
        raise ContractError("trials must be at least 64")
    wt = table.weight
    c = np.asarray(c, dtype=complex)
    idx = np.nonzero(c)[0]
    if mu.is_zero() or len(idx) == 0:
        return 0.0, 0.0, float("nan")
    r = lat.params.r if r is None else r
    grid = atomic_grid(wt) if grid is None else grid
    centers = lat.points[idx]
    ck = c[idx]
    log_norms = np.array([log_norm_Kz(table, a, p, grid) for a in centers])
    # a compact tensor rule keeps the point-by-center kernel matrix small
    x, m = mu.discretize(wt, n_theta=PROBE_THETA, n_radial=PROBE_RADIAL)
    keep = m > 0
    x, m = x[keep], m[keep]
    # kappa(x, a) = sum_n v_n(x) conj(v_n(a)) as one matrix product
    V = basis_vectors(table, x, table.n_basis)
    G = (V @ basis_vectors(table, centers, table.n_basis).conj().T) * \
        (ck * np.exp(wt.phi(centers) - log_norms))[None, :]
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(trials):
        eps = rng.choice([-1.0, 1.0], size=len(idx))
        total += float(np.abs(G @ eps) ** q @ m)
    mc_mean = total / trials
    local = np.abs(x[:, None] - centers[None, :]) < r * wt.rho(centers)[None, :]
    rhs = float(np.sum((np.abs(G) ** q * local) * m[:, None]))
    return mc_mean, rhs, (mc_mean / rhs if rhs > 0 else float("inf"))


def write_profiles_csv(rep: VanishingReport, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["quantity", "t", "sup"])
        for row in rep.profile_rows():
            wr.writerow([row[0], repr(row[1]), repr(row[2])])
