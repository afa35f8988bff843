"""Finite positive measures and their local transforms.

A :class:`Measure` is a sum of atoms and density components.  Densities are
either radial (a named profile ``g(|w|)`` cut off at a support radius) or
given by node values on a polar grid.  All transforms are linear in the
measure and are evaluated component by component.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from .errors import ContractError, DomainError
from .geometry import disc_quadrature
from .kernel import kappa, kappa_rings, log_kappa_diag, log_moments
from .quadrature import DiscGrid, gauss_legendre, moment_rule

DISC_NODES = (24, 48)


def _uniform(t):
    return np.ones_like(t)


def _boundary(t, power=0.5):
    return (1.0 - t) ** (-power)


def _power(t, exponent=1.0):
    return t**exponent


DENSITY_FAMILIES: dict[str, Callable] = {
    "uniform": _uniform,
    "boundary": _boundary,
    "power": _power,
}


@dataclass(frozen=True)
class RadialDensity:
    """``scale * g(|w|)`` on ``|w| <= support_radius``, zero outside."""

    name: str
    support_radius: float
    params: tuple = ()
    scale: float = 1.0
    radial = True

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        g = DENSITY_FAMILIES[self.name](t, **dict(self.params))
        return np.where(t <= self.support_radius, self.scale * g, 0.0)

    def log_profile(self, t):
        t = np.asarray(t, dtype=float)
        g = DENSITY_FAMILIES[self.name](np.minimum(t, self.support_radius), **dict(self.params))
        with np.errstate(divide="ignore"):
            return np.where(t <= self.support_radius, np.log(self.scale * g), -np.inf)

    def __call__(self, z):
        return self.profile(np.abs(z))

    def scaled(self, c):
        return replace(self, scale=self.scale * c)

    def restricted(self, R):
        return replace(self, support_radius=min(self.support_radius, R))

    def discretize(self, weight, n_theta=256, n_radial=None):
        """Ring quadrature nodes and dA masses.

        By default the radial rule is the panel rule used for moments; with
        ``n_radial`` a single Gauss-Legendre rule of that size is used, which
        is far smaller and adequate for smooth integrands.
        """
        if n_radial is None:
            rule = moment_rule(weight, self.support_radius, 64, order=16)
            t, wt = rule.nodes, rule.weights
        else:
            x, wx = gauss_legendre(n_radial)
            t, wt = 0.5 * self.support_radius * (x + 1), 0.5 * self.support_radius * wx
        th = 2 * np.pi * np.arange(n_theta) / n_theta
        pts = (t[:, None] * np.exp(1j * th)[None, :]).ravel()
        w = 2 * t * wt * self.profile(t) / n_theta
        return pts, np.repeat(w, n_theta)

    def mass(self, weight):
        rule = moment_rule(weight, self.support_radius, 8, order=16)
        return float(np.sum(2 * rule.nodes * rule.weights * self.profile(rule.nodes)))


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Non-negative node values on a polar :class:`DiscGrid`.

    Pointwise values interpolate linearly in radius and angle; integrals use
    the grid's own weights.
    """

    grid: DiscGrid
    values: np.ndarray
    scale: float = 1.0
    cutoff: float | None = None
    radial = False

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ContractError("grid density values must be non-negative")

    @property
    def support_radius(self):
        return self.grid.radius if self.cutoff is None else min(self.cutoff, self.grid.radius)

    def _mask(self, t):
        return t <= self.support_radius

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        t = np.abs(z)
        radii = self.grid.radii
        nt = self.grid.n_theta
        i = np.clip(np.searchsorted(radii, t) - 1, 0, len(radii) - 2)
        a = np.clip((t - radii[i]) / (radii[i + 1] - radii[i]), 0.0, 1.0)
        th = (np.angle(z) % (2 * np.pi)) * nt / (2 * np.pi)
        j = np.floor(th).astype(int) % nt
        b = th - np.floor(th)
        v = self.values
        j1 = (j + 1) % nt
        val = ((1 - a) * ((1 - b) * v[i, j] + b * v[i, j1])
               + a * ((1 - b) * v[i + 1, j] + b * v[i + 1, j1]))
        return np.where(self._mask(t) & (t <= self.grid.radius), self.scale * val, 0.0)

    def scaled(self, c):
        return GridDensity(self.grid, self.values, self.scale * c, self.cutoff)

    def restricted(self, R):
        return GridDensity(self.grid, self.values, self.scale,
                           R if self.cutoff is None else min(R, self.cutoff))

    def discretize(self, weight=None, n_theta=None):
        pts = self.grid.points.ravel()
        w = (self.grid.weights * self.values * self.scale).ravel()
        keep = self._mask(np.abs(pts)) & (w > 0)
        return pts[keep], w[keep]

    def mass(self, weight=None):
        return float(np.sum(self.discretize()[1]))


@dataclass(frozen=True, eq=False)
class Measure:
    """Atoms ``sum c_j delta_{w_j}`` plus density components."""

    points: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    masses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    densities: tuple = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=complex).ravel())
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float).ravel())
        if self.points.shape != self.masses.shape:
            raise ContractError("atoms need one mass per point")
        if np.any(self.masses < 0):
            raise ContractError("atom masses must be non-negative")

    @classmethod
    def zero(cls):
        return cls(name="zero")

    @classmethod
    def atoms(cls, points, masses, name="atoms"):
        return cls(points, masses, (), name)

    @classmethod
    def radial_density(cls, family, support_radius, scale=1.0, name=None, **params):
        d = RadialDensity(family, float(support_radius), tuple(sorted(params.items())), scale)
        return cls(densities=(d,), name=name or family)

    @property
    def n_atoms(self):
        return len(self.points)

    @property
    def is_radial(self):
        return all(d.radial for d in self.densities) and not np.any(self.points != 0)

    @property
    def support_radius(self):
        r = [float(np.max(np.abs(self.points[self.masses > 0])))] if np.any(self.masses > 0) else []
        r += [d.support_radius for d in self.densities]
        return max(r) if r else 0.0

    def total_mass(self, weight=None):
        return float(np.sum(self.masses)) + sum(d.mass(weight) for d in self.densities)

    def is_zero(self):
        return not np.any(self.masses > 0) and not self.densities

    def scaled(self, c):
        return Measure(self.points, self.masses * c, tuple(d.scaled(c) for d in self.densities),
                       self.name)

    def __add__(self, other):
        return Measure(np.concatenate([self.points, other.points]),
                       np.concatenate([self.masses, other.masses]),
                       self.densities + other.densities,
                       f"{self.name}+{other.name}")

    def restrict(self, R):
        """``mu_R(E) = mu(E cap closed disc of radius R)``."""
        if R >= self.support_radius:
            return self
        keep = np.abs(self.points) <= R
        dens = tuple(d.restricted(R) for d in self.densities)
        return Measure(self.points[keep], self.masses[keep], dens, self.name)

    def discretize(self, weight, n_theta=256, n_radial=None):
        """Atoms plus quadrature nodes of every density, as one atomic list.

        ``n_theta`` and ``n_radial`` apply to radial densities only.
        """
        pts = [self.points]
        wts = [self.masses]
        for d in self.densities:
            p, w = d.discretize(weight, n_theta, n_radial) if d.radial else d.discretize(weight)
            pts.append(p)
            wts.append(w)
        return np.concatenate(pts), np.concatenate(wts)

    def check_support(self, weight):
        if self.support_radius > weight.r_max * (1 + 1e-12):
            raise DomainError("measure has mass outside the truncated disc")


def restrict_measure(mu: Measure, R) -> Measure:
    if not (0 < R < 1):
        raise DomainError("R must lie in (0, 1)")
    return mu.restrict(R)


# ---------------------------------------------------------------------------
# transform fields


@dataclass(frozen=True, eq=False)
class TransformField:
    """Non-negative values at sample points, optionally on a standard grid."""

    points: np.ndarray
    values: np.ndarray
    kind: str
    grid: DiscGrid | None = None

    def __mul__(self, c):
        return TransformField(self.points, self.values * c, self.kind, self.grid)

    __rmul__ = __mul__

    def weighted(self, factor, kind=None):
        return TransformField(self.points, self.values * factor, kind or self.kind, self.grid)

    def to_rows(self):
        return [(float(p.real), float(p.imag), float(v))
                for p, v in zip(self.points.ravel(), self.values.ravel())]


def _as_points(pts):
    if isinstance(pts, DiscGrid):
        return pts.points, pts
    return np.asarray(pts, dtype=complex), None


def disc_mass(mu: Measure, weight, centers, radii, nodes=DISC_NODES):
    """``mu(D(c_i, R_i))`` intersected with the truncated disc."""
    centers = np.asarray(centers, dtype=complex)
    shape = centers.shape
    c = centers.ravel()
    R = np.broadcast_to(np.asarray(radii, dtype=float), shape).ravel()
    out = np.zeros(c.shape)
    if mu.n_atoms and len(c):
        tree = cKDTree(np.column_stack([mu.points.real, mu.points.imag]))
        hits = tree.query_ball_point(np.column_stack([c.real, c.imag]), R)
        for i, h in enumerate(hits):
            if h:
                h = np.asarray(h)
                inside = np.abs(mu.points[h] - c[i]) < R[i]
                out[i] += np.sum(mu.masses[h[inside]])
    for d in mu.densities:
        out += _density_disc_mass(d, weight, c, R, nodes)
    return out.reshape(shape)


def _density_disc_mass(d, weight, c, R, nodes, chunk=4096):
    out = np.zeros(c.shape)
    near = np.abs(c) - R <= d.support_radius
    idx = np.nonzero(near)[0]
    for s in range(0, len(idx), chunk):
        sl = idx[s:s + chunk]
        pts, wts = disc_quadrature(c[sl], R[sl], *nodes)
        vals = d(pts) * (np.abs(pts) <= weight.r_max)
        out[sl] = np.sum(vals * wts, axis=1)
    return out


def _radial_fast(mu, grid):
    return grid is not None and mu.n_atoms == 0 and all(d.radial for d in mu.densities)


def avg_function(mu: Measure, weight, r, pts, alpha_cap=1.0) -> TransformField:
    """``mu_hat_r(z) = mu(D^r(z)) / rho(z)^2``."""
    if not (0 < r <= alpha_cap):
        raise ContractError(f"r={r} must lie in (0, {alpha_cap}]")
    z, grid = _as_points(pts)
    if _radial_fast(mu, grid):
        t = grid.radii.astype(complex)
        ray = disc_mass(mu, weight, t, r * weight.rho(t)) / weight.rho(t) ** 2
        vals = np.broadcast_to(ray[:, None], grid.shape).copy()
    else:
        rho = weight.rho(z)
        vals = disc_mass(mu, weight, z, r * rho) / rho**2
    return TransformField(z, vals, f"avg({r})", grid)


def _atom_berezin(mu_pts, mu_mass, table, z, grid):
    if grid is not None:
        out = np.zeros(grid.shape)
        for p, m in zip(mu_pts, mu_mass):
            if m == 0:
                continue
            k = kappa_rings(table, p, grid.radii, grid.n_theta)
            out += m * np.abs(k) ** 2
        ldiag = log_kappa_diag(table, grid.radii.astype(complex))
        return out * np.exp(-ldiag)[:, None]
    zf = z.ravel()
    ldiag = log_kappa_diag(table, zf)
    out = np.zeros(zf.shape)
    keep = mu_mass > 0
    mu_pts, mu_mass = mu_pts[keep], mu_mass[keep]
    # blocks of atoms x points keep each kappa call near 2^16 pairs
    step = max(1, 65536 // max(len(zf), 1))
    for s in range(0, len(mu_pts), step):
        k = np.abs(kappa(table, zf[None, :], mu_pts[s:s + step, None])) ** 2
        out += mu_mass[s:s + step] @ k
    return (out * np.exp(-ldiag)).reshape(z.shape)


def radial_berezin_values(density: RadialDensity, table, radii):
    """Berezin transform of a radial density through its moments.

    With ``m_n = 2 int t^(2n+1) e^(-2 phi) g dt`` the transform at radius t is
    ``sum t^(2n) m_n / h_n^2 / sum t^(2n) / h_n``.
    """
    log_m, _ = log_moments(table.weight, table.n_basis, density.support_radius,
                           density.log_profile, check=False)
    radii = np.asarray(radii, dtype=float)
    n = np.arange(table.n_basis)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(n[None, :] == 0, 0.0, 2 * n[None, :] * np.log(radii)[:, None])
    num = logsumexp(lr + log_m[None, :] - 2 * table.log_h[None, :], axis=1)
    den = logsumexp(lr - table.log_h[None, :], axis=1)
    return np.exp(num - den)


def berezin_measure(mu: Measure, table, pts) -> TransformField:
    """``mu_tilde(z) = int |kappa(w, z)|^2 / kappa(z, z) dmu(w)``."""
    z, grid = _as_points(pts)
    if grid is not None:
        vals = np.zeros(grid.shape)
    else:
        vals = np.zeros(z.shape)
    vals = vals + _atom_berezin(mu.points, mu.masses, table, z, grid)
    for d in mu.densities:
        if d.radial:
            if grid is not None:
                ray = radial_berezin_values(d, table, grid.radii)
                vals = vals + ray[:, None]
            else:
                vals = vals + radial_berezin_values(d, table, np.abs(z).ravel()).reshape(z.shape)
        else:
            p, w = d.discretize(table.weight)
            vals = vals + _atom_berezin(p, w, table, z, grid)
    return TransformField(z, vals, "berezin", grid)


def berezin_function(f, table, pts, support_radius=None) -> TransformField:
    """Berezin transform of a non-negative function, i.e. of ``f dA``.

    ``f`` may be a :class:`RadialDensity`, a :class:`GridDensity` or a
    :class:`Measure` made of densities.
    """
    if isinstance(f, Measure):
        mu = f
    else:
        mu = Measure(densities=(f,), name="function")
    out = berezin_measure(mu, table, pts)
    return TransformField(out.points, out.values, "berezin_function", out.grid)


def lp_norm(field: TransformField, p, against="dA", weight=None) -> float:
    """``(int field^p dnu)^(1/p)`` with nu = dA or d lambda_rho = dA / rho^2."""
    if field.grid is None or field.values.shape != field.grid.shape:
        raise ContractError("field must be sampled on a standard quadrature grid")
    vals = np.asarray(field.values, dtype=float)
    if p == np.inf:
        return float(np.max(vals)) if vals.size else 0.0
    if not p > 0:
        raise ContractError("p must be positive")
    g = field.grid
    if against == "dA":
        ring_w = g.ring_weights
    elif against == "lambda_rho":
        if weight is None:
            raise ContractError("lambda_rho needs the weight model")
        ring_w = g.ring_weights / weight.rho_radial(g.radii) ** 2
    else:
        raise ContractError(f"unknown base measure {against!r}")
    top = float(np.max(vals)) if vals.size else 0.0
    if top == 0:
        return 0.0
    total = float(np.sum(np.sum((vals / top) ** p, axis=1) * ring_w))
    return top * total ** (1.0 / p)


def lattice_values(mu: Measure, weight, lat, r=None):
    """``mu_hat_r(a_k)`` at the lattice points (r defaults to the lattice scale)."""
    r = lat.params.r if r is None else r
    rho = lat.rho
    return disc_mass(mu, weight, lat.points, r * rho) / rho**2


def lattice_sum(mu: Measure, weight, lat, p, t_exp, r=None) -> float:
    """``(sum_k [mu_hat_r(a_k) rho(a_k)^t_exp]^p)^(1/p)``; p may be ``inf``."""
    v = lattice_values(mu, weight, lat, r) * lat.rho**t_exp
    return _lp_seq(v, p)


def _lp_seq(v, p):
    v = np.asarray(v, dtype=float)
    top = float(np.max(v)) if v.size else 0.0
    if top == 0:
        return 0.0
    if p == np.inf:
        return top
    return top * float(np.sum((v / top) ** p)) ** (1.0 / p)


def decay_profile(field: TransformField, thresholds):
    """``(t, sup_{|z| > t} value)`` for each threshold (a sampled supremum)."""
    t_all = np.abs(field.points).ravel()
    v = np.asarray(field.values).ravel()
    out = []
    for t in thresholds:
        sel = t_all > t
        if not np.any(sel):
            raise DomainError(f"no sample points beyond t={t}")
        out.append((float(t), float(np.max(v[sel]))))
    return out


# ---------------------------------------------------------------------------
# canonical test measures


def canonical_measures(weight, lat=None, support_fraction=0.8, n_lattice_atoms=50):
    """The five reference measures used by the equivalence checks.

    All are supported in ``|w| <= support_fraction * r_max``, where the
    truncated monomial basis resolves the kernel.
    """
    R = support_fraction * weight.r_max
    c0 = 0.5 * weight.r_max
    step = 0.5 * float(weight.rho(c0))
    ring = c0 + step * np.exp(2j * np.pi * np.arange(6) / 6)
    cluster = Measure.atoms(np.concatenate([[c0], ring]), np.ones(7), "atom_cluster")
    uniform = Measure.radial_density("uniform", R, name="uniform")
    boundary = Measure.radial_density("boundary", R, name="boundary", power=0.5)
    out = {"atom_cluster": cluster, "uniform": uniform, "boundary": boundary}
    if lat is not None:
        order = np.argsort(np.abs(lat.points), kind="stable")
        pick = order[:n_lattice_atoms]
        pick = pick[np.abs(lat.points[pick]) <= R]
        pts = lat.points[pick]
        out["lattice_atoms"] = Measure.atoms(pts, weight.rho(pts) ** 2, "lattice_atoms")
    mixed = cluster + uniform.scaled(0.5)
    out["mixed"] = Measure(mixed.points, mixed.masses, mixed.densities, "mixed")
    return out


CANONICAL_NAMES = ("atom_cluster", "uniform", "boundary", "lattice_atoms", "mixed")


# ---------------------------------------------------------------------------
# CSV interchange


def write_atoms_csv(mu: Measure, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["re", "im", "mass"])
        for p, m in zip(mu.points, mu.masses):
            wr.writerow([repr(float(p.real)), repr(float(p.imag)), repr(float(m))])


def read_atoms_csv(path, name="atoms") -> Measure:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    pts = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
    return Measure.atoms(pts, np.array([float(r["mass"]) for r in rows]), name)


def write_field_csv(field: TransformField, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["re", "im", "value"])
        for row in field.to_rows():
            wr.writerow([repr(v) for v in row])
