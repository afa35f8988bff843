"""Discs D^r(z), (rho, r)-lattices and the rho-metric.

A lattice is built as a greedy maximal separated set over a deterministic
spiral scan: rings whose spacing is a fixed fraction of ``r rho``, each ring
rotated by a golden-ratio offset, visited in order of increasing radius and
angle.  A candidate is accepted when it is at least
``s r min(rho(x), rho(w))`` away from every accepted ``w``.  Every rejected
scan point therefore lies in ``D^{sr}`` of an accepted point, and a scan
spacing below ``(1 - s) r rho`` yields covering at scale r.  Points found
uncovered on a check sample are appended; they never break separation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from functools import cached_property
from math import gcd

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import CapacityError, ContractError, DomainError
from .quadrature import gauss_legendre

GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)
DEFAULT_BUDGET = 50_000


def disc(z, r, w):
    """``D^r(z) = D(z, r rho(z))`` as ``(center, radius)``."""
    if abs(z) >= 1:
        raise DomainError("disc center must lie in the unit disc")
    return complex(z), float(r * w.rho(z))


def disc_quadrature(centers, radii, n_s=24, n_t=48):
    """Polar Gauss-Legendre x trapezoid rule on discs ``D(c, R)``.

    Returns points of shape ``(len(centers), n_s * n_t)`` and matching dA
    weights, which sum to ``R^2`` for each disc.
    """
    centers = np.atleast_1d(np.asarray(centers, dtype=complex))
    radii = np.broadcast_to(np.asarray(radii, dtype=float), centers.shape)
    x, wx = gauss_legendre(n_s)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * wx
    th = 2.0 * np.pi * (np.arange(n_t) + 0.5) / n_t
    loc = (s[:, None] * np.exp(1j * th)[None, :]).ravel()
    # dA = (1/pi) R^2 s ds dtheta
    base = (2.0 * s * ws / n_t)[:, None] * np.ones(n_t)[None, :]
    pts = centers[:, None] + radii[:, None] * loc[None, :]
    wts = (radii[:, None] ** 2) * base.ravel()[None, :]
    return pts, wts


@dataclass(frozen=True)
class LatticeParams:
    r: float = 0.5
    s: float = 0.5
    r_max: float | None = None
    alpha_cap: float = 1.0
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if not (0 < self.r <= self.alpha_cap):
            raise ContractError(f"lattice scale r={self.r} must lie in (0, {self.alpha_cap}]")
        if not (0 < self.s < 1):
            raise ContractError(f"separation s={self.s} must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class Lattice:
    """Lattice points ordered as accepted by the builder."""

    points: np.ndarray
    params: LatticeParams
    weight: object
    multiplicity: int
    n_scan: int = 0
    n_repaired: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @cached_property
    def rho(self):
        return self.weight.rho(self.points)

    @cached_property
    def tree(self):
        return cKDTree(np.column_stack([self.points.real, self.points.imag]))

    def to_rows(self):
        return [(float(p.real), float(p.imag), float(r)) for p, r in zip(self.points, self.rho)]


def _xy(z):
    return np.column_stack([np.real(z), np.imag(z)])


def scan_points(w, r, s, r_max, offset=0.0):
    """Spiral scan set with spacing ``(1 - s) r rho / 2`` in both directions."""
    c = 0.5 * (1.0 - s) * r
    rings = [np.array([0j])]
    t = 0.0
    i = 0
    while t < r_max:
        step = c * float(w.rho_radial(t))
        step = c * float(min(w.rho_radial(t), w.rho_radial(min(t + step, r_max))))
        t = min(t + step, r_max)
        i += 1
        m = max(6, int(np.ceil(2 * np.pi * t / (c * float(w.rho_radial(t))))))
        ang = 2 * np.pi * ((np.arange(m) + (i * GOLDEN + offset) % 1.0) / m)
        rings.append(t * np.exp(1j * ang))
    return rings


def build_lattice(w, params: LatticeParams, seed=0, check_samples=20_000) -> Lattice:
    """Greedy maximal separated lattice on the truncated disc.

    The construction itself is deterministic; ``seed`` only chooses the
    scrambled low-discrepancy sample used for the covering repair pass.
    """
    r, s = params.r, params.s
    r_max = w.r_max if params.r_max is None else params.r_max
    rings = scan_points(w, r, s, r_max)
    acc = []
    acc_rho = []
    acc_rad = []
    n_scan = 0
    for ring in rings:
        n_scan += len(ring)
        rho_ring = w.rho(ring)
        tr = float(np.abs(ring[0]))
        cand = np.ones(len(ring), dtype=bool)
        if acc:
            lo = np.searchsorted(acc_rad, tr - s * r * float(np.max(rho_ring)) * 1.000001)
            prev = np.asarray(acc[lo:])
            if len(prev):
                prho = np.asarray(acc_rho[lo:])
                tree = cKDTree(_xy(prev))
                kq = min(16, len(prev))
                d, j = tree.query(_xy(ring), k=kq,
                                  distance_upper_bound=s * r * float(np.max(rho_ring)))
                d = np.atleast_2d(d.T).T if kq == 1 else d
                j = np.atleast_2d(j.T).T if kq == 1 else j
                if kq == 1:
                    d, j = d.reshape(-1, 1), j.reshape(-1, 1)
                hit = np.isfinite(d)
                jj = np.where(hit, j, 0)
                lim = s * r * np.minimum(rho_ring[:, None], prho[jj])
                conflict = hit & (d < lim)
                cand = ~np.any(conflict, axis=1)
                # exhausted neighbour lists: fall back to an exact ball query
                full = hit[:, -1] & cand
                for q in np.nonzero(full)[0]:
                    nb = tree.query_ball_point(_xy(ring[q:q + 1])[0], s * r * rho_ring[q])
                    nb = np.asarray(nb, dtype=int)
                    if np.any(np.abs(prev[nb] - ring[q]) < s * r * np.minimum(rho_ring[q], prho[nb])):
                        cand[q] = False
        first = None
        last = None
        for q in np.nonzero(cand)[0]:
            x, rx = ring[q], rho_ring[q]
            ok = True
            for o in (last, first):
                if o is not None and abs(x - o[0]) < s * r * min(rx, o[1]):
                    ok = False
                    break
            if ok:
                acc.append(x)
                acc_rho.append(rx)
                acc_rad.append(tr)
                last = (x, rx)
                if first is None:
                    first = last
                if len(acc) > params.budget:
                    raise CapacityError(
                        f"lattice exceeded the budget of {params.budget} points near {x:.4f}")
    pts = np.asarray(acc)
    pts, n_rep = _repair(w, pts, r, s, r_max, seed, check_samples, params.budget)
    lat = Lattice(pts, replace(params, r_max=r_max), w, 0, n_scan, n_rep)
    mult = multiplicity(lat, deterministic_sample(w, r_max, 4 * check_samples))
    return Lattice(pts, lat.params, w, mult, n_scan, n_rep)


def _repair(w, pts, r, s, r_max, seed, n, budget):
    sample = np.concatenate([rho_adapted_sample(w, r_max, n, seed),
                             r_max * np.exp(2j * np.pi * np.arange(256) / 256)])
    added = 0
    pts = list(pts)
    for _ in range(20):
        arr = np.asarray(pts)
        cov = cover_counts(arr, w.rho(arr), r, sample)
        miss = np.nonzero(cov == 0)[0]
        if len(miss) == 0:
            break
        # add uncovered witnesses greedily; they are pairwise separated too
        for q in miss:
            x = sample[q]
            arr = np.asarray(pts)
            rho_all = w.rho(arr)
            if np.all(np.abs(arr - x) >= r * rho_all) and \
                    np.all(np.abs(arr - x) >= s * r * np.minimum(rho_all, w.rho(x))):
                pts.append(x)
                added += 1
                if len(pts) > budget:
                    raise CapacityError(f"lattice exceeded the budget of {budget} points "
                                        f"while covering {x:.4f}")
    return np.asarray(pts), added


def deterministic_sample(w, r_max, n):
    """Unscrambled Halton points, area-uniform on ``|z| <= r_max``."""
    u = qmc.Halton(d=2, scramble=False).random(n + 1)[1:]
    return r_max * np.sqrt(u[:, 0]) * np.exp(2j * np.pi * u[:, 1])


def low_discrepancy_sample(r_max, n, seed=0):
    """Scrambled Sobol points, area-uniform on ``|z| <= r_max``."""
    m = int(np.ceil(np.log2(max(n, 2))))
    u = qmc.Sobol(d=2, scramble=True, seed=seed).random_base2(m)[:n]
    return r_max * np.sqrt(u[:, 0]) * np.exp(2j * np.pi * u[:, 1])


def rho_adapted_sample(w, r_max, n, seed=0):
    """Sobol points distributed with density proportional to ``1/rho^2``.

    Uniform samples almost never land in the thin boundary layer where
    lattice discs are smallest; this sample places about equally many points
    in every unit of ``dA / rho^2``.
    """
    t = np.linspace(0.0, r_max, 4001)
    dens = 2 * t / w.rho_radial(t) ** 2
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
    cdf /= cdf[-1]
    m = int(np.ceil(np.log2(max(n, 2))))
    u = qmc.Sobol(d=2, scramble=True, seed=seed).random_base2(m)[:n]
    rad = np.interp(u[:, 0], cdf, t)
    return rad * np.exp(2j * np.pi * u[:, 1])


def cover_counts(points, rho_pts, scale, sample):
    """For each sample z, the number of k with ``|z - w_k| < scale rho(w_k)``."""
    if len(points) == 0:
        return np.zeros(len(sample), dtype=int)
    tree = cKDTree(_xy(sample))
    hits = tree.query_ball_point(_xy(points), scale * np.asarray(rho_pts))
    counts = np.zeros(len(sample), dtype=int)
    for k, h in enumerate(hits):
        if h:
            h = np.asarray(h)
            inside = np.abs(sample[h] - points[k]) < scale * rho_pts[k]
            counts[h[inside]] += 1
    return counts


def multiplicity(lat: Lattice, sample) -> int:
    """Measured overlap of the covering ``{D^{2r}(w_k)}`` on a sample."""
    counts = cover_counts(lat.points, lat.rho, 2 * lat.params.r,
                          np.concatenate([sample, lat.points]))
    return int(np.max(counts))


def verify_covering(lat: Lattice, sample):
    """Sample points not inside any ``D^r(w_k)``."""
    counts = cover_counts(lat.points, lat.rho, lat.params.r, sample)
    return sample[counts == 0]


def separation_violations(points, rho_pts, sep):
    """Pairs ``(i, j)`` with ``|w_i - w_j| < sep min(rho_i, rho_j)``."""
    points = np.asarray(points)
    if len(points) < 2:
        return np.empty((0, 2), dtype=int)
    tree = cKDTree(_xy(points))
    pairs = tree.query_pairs(sep * float(np.max(rho_pts)), output_type="ndarray")
    if len(pairs) == 0:
        return pairs
    i, j = pairs[:, 0], pairs[:, 1]
    bad = np.abs(points[i] - points[j]) < sep * np.minimum(rho_pts[i], rho_pts[j])
    return pairs[bad]


def split_lattice(lat: Lattice, k: int):
    """Split into subsequences separated at scale ``2^k r``.

    Each pass walks the remaining points in lattice order and keeps a point
    when it is at least ``2^k r min(rho_i, rho_j)`` away from every point
    already kept in the pass; kept points form one subsequence.
    """
    if k < 0:
        raise ContractError("k must be non-negative")
    sep = 2.0 ** k * lat.params.r
    pts, rho = lat.points, lat.rho
    n = len(pts)
    tree = lat.tree
    nbrs = tree.query_ball_point(_xy(pts), sep * rho)
    # conflicts with larger-rho neighbours outside the ball are impossible:
    # the threshold uses the minimum of the two radii
    adj = []
    for i, nb in enumerate(nbrs):
        nb = np.asarray(nb, dtype=int)
        nb = nb[nb != i]
        close = np.abs(pts[nb] - pts[i]) < sep * np.minimum(rho[i], rho[nb])
        adj.append(nb[close])
    remaining = np.ones(n, dtype=bool)
    groups = []
    while remaining.any():
        blocked = ~remaining.copy()
        chosen = []
        for i in np.nonzero(remaining)[0]:
            if blocked[i]:
                continue
            chosen.append(i)
            blocked[adj[i]] = True
        chosen = np.asarray(chosen)
        remaining[chosen] = False
        groups.append(chosen)
    return [Lattice(pts[g], lat.params, lat.weight, lat.multiplicity,
                    meta={"indices": g, "k": k}) for g in groups]


# ---------------------------------------------------------------------------
# rho-metric on a polar grid graph


def _stencil(radius):
    out = []
    for di in range(-radius, radius + 1):
        for dj in range(-radius, radius + 1):
            if (di, dj) > (0, 0) and gcd(abs(di), abs(dj)) == 1:
                out.append((di, dj))
    return out


@dataclass(frozen=True, eq=False)
class MetricGrid:
    """Polar grid graph with edge weights ``|dz| / rho(midpoint)``.

    Node 0 is the origin; node ``1 + i n_theta + j`` sits at radius
    ``(i + 1) r_max / n_r`` and angle ``2 pi j / n_theta``.  Edges join
    nodes whose index offsets are coprime within the stencil radius, so
    paths can follow many directions.
    """

    weight: object
    n_r: int
    n_theta: int
    stencil: int
    graph: sparse.csr_matrix

    @property
    def r_max(self):
        return self.weight.r_max

    @cached_property
    def nodes(self):
        rad = self.r_max * np.arange(1, self.n_r + 1) / self.n_r
        ang = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
        ring = (rad[:, None] * np.exp(1j * ang)[None, :]).ravel()
        return np.concatenate([[0j], ring])

    def nearest(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if np.any(np.abs(z) > self.r_max * (1 + 1e-12)):
            raise DomainError("points must satisfy |z| <= r_max")
        i = np.rint(np.abs(z) * self.n_r / self.r_max).astype(int)
        j = np.rint(np.angle(z) % (2 * np.pi) * self.n_theta / (2 * np.pi)).astype(int) % self.n_theta
        return np.where(i == 0, 0, 1 + (np.clip(i, 1, self.n_r) - 1) * self.n_theta + j)

    def distances_from(self, sources):
        """Shortest-path lengths from node indices ``sources`` to all nodes."""
        return dijkstra(self.graph, directed=False, indices=np.atleast_1d(sources))

    def is_connected(self):
        return connected_components(self.graph, directed=False)[0] == 1


def build_metric_grid(w, n_r=128, n_theta=256, stencil=3) -> MetricGrid:
    rad = w.r_max * np.arange(1, n_r + 1) / n_r
    ang = 2 * np.pi * np.arange(n_theta) / n_theta
    idx = np.arange(n_r * n_theta).reshape(n_r, n_theta) + 1
    pos = rad[:, None] * np.exp(1j * ang)[None, :]
    rows, cols, vals = [], [], []

    def add(a, b, za, zb):
        mid = 0.5 * (za + zb)
        rows.append(a.ravel())
        cols.append(b.ravel())
        vals.append((np.abs(za - zb) / w.rho(mid)).ravel())

    # the stencil is a half-plane of offsets, so each undirected edge appears once
    for di, dj in _stencil(stencil):
        hi = n_r - di
        if hi <= 0:
            continue
        add(idx[:hi], np.roll(idx, -dj, axis=1)[di:], pos[:hi], np.roll(pos, -dj, axis=1)[di:])
    # origin to the first rings
    for i in range(min(stencil, n_r)):
        add(np.zeros(n_theta, dtype=int), idx[i], np.zeros(n_theta, dtype=complex), pos[i])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    n = n_r * n_theta + 1
    g = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    g = g.maximum(g.T)
    return MetricGrid(w, n_r, n_theta, stencil, g.tocsr())


def approx_distance(grid: MetricGrid, z, w_pt) -> float:
    """Grid approximation of d_rho(z, w); symmetric by construction."""
    a, b = grid.nearest([z, w_pt])
    if a == b:
        return 0.0
    lo, hi = min(a, b), max(a, b)
    return float(grid.distances_from(lo)[0, hi])


def pairwise_metric(grid: MetricGrid, z, w):
    """``d_rho(z_i, w_i)`` for paired arrays, one Dijkstra run per distinct source."""
    a = grid.nearest(z)
    b = grid.nearest(w)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    src, inv = np.unique(lo, return_inverse=True)
    dist = grid.distances_from(src)
    return dist[inv, hi]


# ---------------------------------------------------------------------------
# CSV interchange


def write_lattice_csv(lat: Lattice, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["re_x", "im_y", "rho"])
        for row in lat.to_rows():
            wr.writerow([repr(v) for v in row])


def read_lattice_csv(path, w, params: LatticeParams) -> Lattice:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    pts = np.array([float(r["re_x"]) + 1j * float(r["im_y"]) for r in rows])
    lat = Lattice(pts, params, w, 0)
    r_max = w.r_max if params.r_max is None else params.r_max
    return Lattice(pts, params, w, multiplicity(lat, deterministic_sample(w, r_max, 80_000)))
