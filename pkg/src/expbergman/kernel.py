"""Reproducing kernel of the truncated weighted Bergman space.

For a radial weight the monomials are orthogonal and

    K(z, w) = sum_n (z conj(w))^n / h_n,   h_n = 2 int_0^r_max t^(2n+1) e^(-2 phi(t)) dt.

``K`` itself overflows near the edge, so everything is expressed through the
normalized product

    kappa(z, w) = K(z, w) exp(-phi(z) - phi(w)),

which is evaluated term by term in log magnitude with the largest term
factored out.  Quantities involving ``e^phi`` are returned as logarithms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError, DomainError, PrecisionError, TruncationError
from .quadrature import (
    RadialRule,
    integration_grid,
    log_radial_integral,
    moment_rule,
)

TAIL_TOL = 1e-10
REFINE_TOL = 1e-12
_CHUNK = 4096


def log_moments(weight, n, end=None, log_density=None, check=True):
    """``log m_k = log 2 int_0^end t^(2k+1) e^(-2 phi(t)) g(t) dt`` for k < n.

    ``log_density`` maps radii to ``log g``.  The rule is compared with its
    panel-bisected refinement; a relative change above ``1e-12`` raises
    :class:`PrecisionError`.
    """
    end = weight.r_max if end is None else float(end)
    rule = moment_rule(weight, end, n)
    out = _log_moments_on(weight, rule, n, log_density)
    if check:
        fine = _log_moments_on(weight, rule.refined(), n, log_density)
        finite = np.isfinite(out)
        change = np.max(np.abs(fine[finite] - out[finite]), initial=0.0)
        if change > REFINE_TOL or np.any(np.isfinite(fine) != finite):
            raise PrecisionError(
                f"moment quadrature not converged: relative change {change:.3e}")
    return out, rule


def _log_moments_on(weight, rule: RadialRule, n, log_density):
    t = rule.nodes
    lf = -2.0 * weight.phi_radial(t)
    if log_density is not None:
        lf = lf + log_density(t)
    k = np.arange(n)[:, None]
    with np.errstate(divide="ignore"):
        logt = np.log(t)[None, :]
    return np.log(2.0) + log_radial_integral((2 * k + 1) * logt + lf[None, :], rule)


@dataclass(frozen=True, eq=False)
class MomentTable:
    """Log-moments of ``e^(-2 phi)`` for a radial weight."""

    weight: object
    n_basis: int
    log_h: np.ndarray
    quad_spec: dict = field(default_factory=dict)

    @cached_property
    def grid(self):
        """Whole-disc integration grid shared by kernel norms."""
        return integration_grid(self.weight, self.n_basis)

    def h(self):
        return np.exp(self.log_h)

    def to_rows(self):
        return [(n, float(v)) for n, v in enumerate(self.log_h)]


def compute_moments(weight, n_basis=256) -> MomentTable:
    """Moment table for ``n_basis`` monomials."""
    if n_basis < 8:
        raise ContractError("n_basis must be at least 8")
    if not weight.radial:
        raise ContractError("kernel computations require a radial weight")
    log_h, rule = log_moments(weight, n_basis)
    return MomentTable(weight, int(n_basis), log_h, rule.describe())


# ---------------------------------------------------------------------------
# pointwise kernel


def _log_abs(z):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(z))


def _term_logs(table: MomentTable, z, w, n=None):
    """Log magnitudes and phases of the terms of kappa(z, w)."""
    n = table.n_basis if n is None else n
    k = np.arange(n)
    lz = _log_abs(z)[..., None]
    lw = _log_abs(w)[..., None]
    # n * log 0 with n = 0 contributes 0
    with np.errstate(invalid="ignore"):
        s = np.where(k == 0, 0.0, k * (lz + lw))
    wt = table.weight
    mag = s - table.log_h[:n] - (wt.phi(z) + wt.phi(w))[..., None]
    phase = k * (np.angle(z) - np.angle(w))[..., None]
    return mag, phase


def _tail_estimate(mag):
    """Relative remainder bound from the last two term magnitudes."""
    top = np.max(mag, axis=-1)
    last = mag[..., -1]
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = mag[..., -1] - mag[..., -2]
        q = np.exp(ratio)
        bound = np.where(q < 1.0, np.exp(last - top) * q / (1.0 - q), np.inf)
    return np.where(np.isneginf(last), 0.0, bound)


def _kappa_chunk(table, z, w, n):
    mag, phase = _term_logs(table, z, w, n)
    top = np.max(mag, axis=-1, keepdims=True)
    terms = np.exp(mag - top) * np.exp(1j * phase)
    val = np.exp(top[..., 0]) * np.sum(terms, axis=-1)
    return val, _tail_estimate(mag)


def kappa(table: MomentTable, z, w, n=None, return_tail=False):
    """Vectorized ``kappa(z, w)`` with broadcasting over ``z`` and ``w``."""
    z, w = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
    shape = z.shape
    zf, wf = z.ravel(), w.ravel()
    n = table.n_basis if n is None else int(n)
    val = np.empty(zf.shape, dtype=complex)
    tail = np.empty(zf.shape)
    for s in range(0, zf.size, _CHUNK):
        sl = slice(s, s + _CHUNK)
        val[sl], tail[sl] = _kappa_chunk(table, zf[sl], wf[sl], n)
    val, tail = val.reshape(shape), tail.reshape(shape)
    return (val, tail) if return_tail else val


def log_kappa_diag(table: MomentTable, z, n=None):
    """``log kappa(z, z)``, computed without cancellation."""
    z = np.asarray(z, dtype=complex)
    n = table.n_basis if n is None else n
    mag, _ = _term_logs(table, z, z, n)
    return logsumexp(mag, axis=-1)


def basis_vectors(table, w, dim):
    """``v_n(w_j) = w_j^n e^{-phi(w_j)} / sqrt(h_n)`` for ``n < dim``, shape (len(w), dim)."""
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    n = np.arange(dim)
    with np.errstate(divide="ignore"):
        lw = np.log(np.abs(w))[:, None]
    with np.errstate(invalid="ignore"):
        s = np.where(n[None, :] == 0, 0.0, n[None, :] * lw)
    mag = s - 0.5 * table.log_h[None, :dim] - table.weight.phi(w)[:, None]
    return np.exp(mag) * np.exp(1j * n[None, :] * np.angle(w)[:, None])


@dataclass(frozen=True)
class KernelValue:
    """``value = K(z, w) exp(-phi(z) - phi(w))`` with its tail bound."""

    value: np.ndarray
    z: np.ndarray
    w: np.ndarray
    tail: np.ndarray


def _check_domain(table, *pts):
    r = table.weight.r_max
    for p in pts:
        if np.any(np.abs(p) > r * (1 + 1e-12)):
            raise DomainError(f"points must satisfy |z| <= r_max = {r}")


def kernel_eval(table: MomentTable, z, w, check=True) -> KernelValue:
    """Evaluate kappa at paired points; raise when the tail exceeds 1e-10."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    _check_domain(table, z, w)
    val, tail = kappa(table, z, w, return_tail=True)
    if check and np.any(tail > TAIL_TOL):
        worst = float(np.max(tail))
        raise TruncationError(
            f"kernel tail {worst:.2e} exceeds {TAIL_TOL:.0e}; increase n_basis")
    return KernelValue(val, z, w, tail)


def kernel_full(table, z, w):
    """``K(z, w)`` itself; overflows for points near the truncation edge."""
    wt = table.weight
    return kappa(table, z, w) * np.exp(wt.phi(z) + wt.phi(w))


# ---------------------------------------------------------------------------
# ring evaluation through FFT


def kappa_rings(table: MomentTable, a, radii, n_theta, n=None):
    """``kappa(r_i e^{i theta_k}, a)`` for all ring radii and uniform angles.

    Returns an array of shape ``(len(radii), n_theta)``.  The angular sum is
    an inverse FFT; coefficients are folded modulo ``n_theta`` so the values
    are exact point evaluations for any ``n_theta``.
    """
    n = table.n_basis if n is None else int(n)
    radii = np.asarray(radii, dtype=float)
    a = complex(a)
    k = np.arange(n)
    la = -np.inf if a == 0 else np.log(abs(a))
    with np.errstate(divide="ignore"):
        lr = np.log(radii)[:, None]
    with np.errstate(invalid="ignore"):
        s = np.where(k == 0, 0.0, k * (lr + la))
    wt = table.weight
    mag = s - table.log_h[:n] - wt.phi_radial(radii)[:, None] - float(wt.phi_radial(abs(a)))
    top = np.max(mag, axis=1, keepdims=True)
    coef = np.exp(mag - top) * np.exp(-1j * k * np.angle(a))[None, :]
    if n > n_theta:
        pad = (-n) % n_theta
        coef = np.pad(coef, ((0, 0), (0, pad))).reshape(len(radii), -1, n_theta).sum(axis=1)
    else:
        coef = np.pad(coef, ((0, 0), (0, n_theta - n)))
    vals = np.fft.ifft(coef, axis=1) * n_theta
    return vals * np.exp(top)


# ---------------------------------------------------------------------------
# norms and normalized kernels


def log_norm_Kz(table: MomentTable, z, p, grid=None) -> float:
    """``log ||K_z||_{A^p}`` by polar quadrature of ``|kappa(z, .)|^p``."""
    if not (0 < p < np.inf):
        raise ContractError("p must lie in (0, inf)")
    z = complex(z)
    _check_domain(table, z)
    grid = table.grid if grid is None else grid
    vals = np.abs(kappa_rings(table, z, grid.radii, grid.n_theta))
    top = np.max(vals)
    integral = grid.integrate((vals / top) ** p)
    return float(table.weight.phi_radial(abs(z)) + np.log(top) + np.log(integral) / p)


def norm_Kz(table: MomentTable, z, p, grid=None) -> float:
    """``||K_z||_{A^p}``; may overflow to ``inf``, see :func:`log_norm_Kz`."""
    with np.errstate(over="ignore"):
        return float(np.exp(log_norm_Kz(table, z, p, grid)))


def log_norm_K2_exact(table, z):
    """``log ||K_z||_{A^2} = (log kappa(z,z)) / 2 + phi(z)`` from the series."""
    z = np.asarray(z, dtype=complex)
    return 0.5 * log_kappa_diag(table, z) + table.weight.phi(z)


@dataclass(frozen=True, eq=False)
class NormalizedKernel:
    """``k_{p,a} = K_a / ||K_a||_{A^p}``.

    Calling the object evaluates ``k_{p,a}(x)``; :meth:`weighted` returns the
    overflow-free ``k_{p,a}(x) e^{-phi(x)}``.
    """

    table: MomentTable
    center: complex
    p: float
    log_norm: float

    def weighted(self, x):
        x = np.asarray(x, dtype=complex)
        scale = np.exp(self.table.weight.phi_radial(abs(self.center)) - self.log_norm)
        return kappa(self.table, x, self.center) * scale

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        return self.weighted(x) * np.exp(self.table.weight.phi(x))


def normalized_kernel(table: MomentTable, z, p, grid=None) -> NormalizedKernel:
    if p == 2:
        ln = float(log_norm_K2_exact(table, complex(z)))
    else:
        ln = log_norm_Kz(table, z, p, grid)
    return NormalizedKernel(table, complex(z), float(p), ln)


def reproducing_residual(table: MomentTable, coeffs, z, grid=None):
    """``|int f(w) K(z,w) e^{-2 phi(w)} dA(w) - f(z)|`` for a polynomial f.

    ``coeffs`` are ascending.  A 2-D array holds one polynomial per row and
    gives an array of residuals.  The integrand is assembled as
    ``e^{phi(z)} f(w) e^{-phi(w)} kappa(z, w)``.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    single = coeffs.ndim == 1
    coeffs = np.atleast_2d(coeffs)
    if coeffs.shape[1] - 1 > table.n_basis - 2:
        raise ContractError("deg f must not exceed n_basis - 2")
    grid = table.grid if grid is None else grid
    z = complex(z)
    wt = table.weight
    kz = np.conj(kappa_rings(table, z, grid.radii, grid.n_theta))
    # the angular sum of w^n kz on a ring is an FFT coefficient of kz
    n = np.arange(coeffs.shape[1])
    ang = grid.n_theta * np.fft.ifft(kz, axis=1)[:, n]
    t = grid.radii[:, None]
    moments = (np.exp(-wt.phi_radial(grid.radii)) * grid.ring_weights) @ (t ** n * ang)
    approx = coeffs @ moments * np.exp(wt.phi_radial(abs(z)))
    exact = np.array([np.polynomial.polynomial.polyval(z, c) for c in coeffs])
    res = np.abs(approx - exact)
    return float(res[0]) if single else res


# ---------------------------------------------------------------------------
# diagnostics for the kernel estimates


def norm_ratio_statistic(table, radii, p_list=(1.0, 2.0, 4.0), grid=None):
    """``R_p(t) = ||K_t||_p / (e^{phi(t)} rho(t)^{2/p - 2})`` on a radial sample.

    Returns a dict ``p -> (log R_p array, spread, slope)`` where ``slope`` is
    the least-squares slope of ``log R_p`` against ``log(1 - t)``.
    """
    wt = table.weight
    radii = np.asarray(radii, dtype=float)
    out = {}
    for p in p_list:
        if p == 2:
            ln = log_norm_K2_exact(table, radii.astype(complex))
        else:
            ln = np.array([log_norm_Kz(table, t, p, grid) for t in radii])
        lr = ln - wt.phi_radial(radii) - (2.0 / p - 2.0) * wt.log_rho_radial(radii)
        slope = float(np.polyfit(np.log1p(-radii), lr, 1)[0])
        out[p] = (lr, float(np.exp(np.max(lr) - np.min(lr))), slope)
    return out


def diagonal_window(table, radii):
    """``|k_{2,w}(w)| e^{-phi(w)} rho(w) = sqrt(kappa(w,w)) rho(w)`` along radii."""
    radii = np.asarray(radii, dtype=float)
    return np.exp(0.5 * log_kappa_diag(table, radii.astype(complex))
                  + table.weight.log_rho_radial(radii))


def compact_sup(table, centers, inner=0.5, n_sample=2000, seed=0):
    """``sup_{|w| <= inner} |k_{2,z}(w)| e^{-phi(w)}`` for each center z."""
    rng = np.random.default_rng(seed)
    u, v = rng.random(n_sample), rng.random(n_sample)
    w = inner * np.sqrt(u) * np.exp(2j * np.pi * v)
    w = np.concatenate([w, inner * np.exp(2j * np.pi * np.arange(64) / 64)])
    out = []
    for z in np.atleast_1d(centers):
        k = np.abs(kappa(table, w, z))
        out.append(float(np.max(k) * np.exp(-0.5 * log_kappa_diag(table, complex(z)))))
    return np.asarray(out)


def submean_constants(table, r=0.25, n_samples=20, seed=0, n_s=24, n_t=48):
    """Measured constants in the local sub-mean inequality.

    For ``f = k_{2,a}`` with random ``a`` and random ``z`` near ``a`` returns
    ``|f(z) e^{-phi(z)}|^2 rho(z)^2 / int_{D^r(z)} |f e^{-phi}|^2 dA``.
    The ratio is independent of the normalization of f.
    """
    from .geometry import disc_quadrature

    wt = table.weight
    rng = np.random.default_rng(seed)
    lim = 0.8 * wt.r_max
    out = []
    for _ in range(n_samples):
        a = lim * np.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())
        z = a + 0.5 * float(wt.rho(a)) * rng.random() * np.exp(2j * np.pi * rng.random())
        if abs(z) > lim:
            z = z * lim / abs(z)
        pts, wts = disc_quadrature(np.array([z]), r * float(wt.rho(z)), n_s, n_t)
        vals = np.abs(kappa(table, pts[0], a)) ** 2
        inside = np.abs(pts[0]) <= wt.r_max
        integral = np.sum(vals * wts[0] * inside)
        center = abs(complex(kappa(table, z, a))) ** 2
        out.append(center * float(wt.rho(z)) ** 2 / integral)
    return np.asarray(out)


@dataclass(frozen=True)
class DecayFit:
    sigma: float
    log_C: float
    residual: float
    oracle: bool
    n_pairs: int

    def to_dict(self):
        return {"sigma": self.sigma, "log_C": self.log_C, "residual": self.residual,
                "oracle": self.oracle, "n_pairs": self.n_pairs}


def fit_decay_sigma(table, grid, n_pairs=500, seed=0, radius=None, n_bins=12) -> DecayFit:
    """Fit an upper envelope ``log(|kappa| rho rho) <= C - sigma d_rho``.

    Pairs are drawn uniformly in ``|z| <= radius``; the slope is fitted to
    the per-bin maxima in d_rho, then ``C`` is raised until every sampled
    pair, and every sampled diagonal value, lies below the envelope.
    """
    if n_pairs < 100:
        raise ContractError("n_pairs must be at least 100")
    from .geometry import pairwise_metric

    wt = table.weight
    radius = 0.9 * wt.r_max if radius is None else radius
    rng = np.random.default_rng(seed)
    u = rng.random((2, n_pairs))
    v = rng.random((2, n_pairs))
    pts = radius * np.sqrt(u) * np.exp(2j * np.pi * v)
    z, w = pts
    d = pairwise_metric(grid, z, w)
    keep = d > 0
    z, w, d = z[keep], w[keep], d[keep]
    y = np.log(np.abs(kappa(table, z, w))) + wt.log_rho_radial(np.abs(z)) + wt.log_rho_radial(np.abs(w))
    edges = np.linspace(0, np.max(d), n_bins + 1)
    idx = np.clip(np.digitize(d, edges) - 1, 0, n_bins - 1)
    bx, by = [], []
    for b in range(n_bins):
        sel = idx == b
        if np.any(sel):
            j = np.argmax(np.where(sel, y, -np.inf))
            bx.append(d[j])
            by.append(y[j])
    slope, icept = np.polyfit(bx, by, 1)
    sigma = float(-slope)
    resid = float(np.sqrt(np.mean((np.asarray(by) - (icept + slope * np.asarray(bx))) ** 2)))
    diag = log_kappa_diag(table, z) + 2 * wt.log_rho_radial(np.abs(z))
    log_c = float(max(np.max(y + sigma * d), np.max(diag)))
    return DecayFit(sigma, log_c, resid, wt.is_oracle, int(len(d)))
