"""Toeplitz matrices in the orthonormal monomial basis and their spectra.

With ``e_n(w) = w^n / sqrt(h_n)`` the matrix of ``T_mu`` has entries
``<T e_n, e_m> = int e_n conj(e_m) e^{-2 phi} dmu``.  For atoms the entries
are Gram sums of the vectors ``v_n(w) = e_n(w) e^{-phi(w)}``, which stay
bounded and are formed from log magnitudes.  Radial densities give diagonal
matrices whose entries are ratios of moments.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .carleson import DEFAULT_RATIO_WINDOW, EquivalenceReport, equivalence_report
from .errors import ContractError, DomainError, NumericalConsistencyError, TruncationError
from .kernel import basis_vectors, log_kappa_diag, log_moments
from .measures import (Measure, TransformField, _lp_seq, avg_function, lattice_values,
                       lp_norm)
from .quadrature import DiscGrid, field_grid

log = logging.getLogger(__name__)

DEFAULT_DIM = 200
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
ATOM_TAIL_TOL = 1e-10
SPECTRAL_TAIL_WARN = 1e-8


def _basis_tail(table, w, dim):
    """Share of ``kappa(w, w)`` carried by basis indices ``>= dim``."""
    w = np.asarray(w, dtype=complex)
    if dim >= table.n_basis:
        return np.zeros(w.shape)
    full = log_kappa_diag(table, w)
    head = log_kappa_diag(table, w, dim)
    return -np.expm1(head - full)


@dataclass(frozen=True, eq=False)
class ToeplitzMatrix:
    """Hermitian PSD truncation of ``T_mu`` to the first ``dim`` basis vectors."""

    dim: int
    entries: np.ndarray
    measure: Measure
    table: object
    radial: bool = False

    def to_rows(self):
        m, n = np.nonzero(np.ones_like(self.entries, dtype=bool))
        e = self.entries[m, n]
        return [(int(a), int(b), float(x.real), float(x.imag)) for a, b, x in zip(m, n, e)]

    def trace(self):
        return float(np.real(np.trace(self.entries)))


def _density_diagonal(d, table, dim):
    log_m, _ = log_moments(table.weight, dim, d.support_radius, d.log_profile, check=False)
    return np.exp(log_m - table.log_h[:dim])


def assemble(mu: Measure, table, dim=DEFAULT_DIM) -> ToeplitzMatrix:
    """Matrix of ``T_mu``: exact sums over atoms, quadrature for densities."""
    if not (1 <= dim <= table.n_basis):
        raise ContractError(f"dim must lie in [1, n_basis={table.n_basis}]")
    mu.check_support(table.weight)
    M = np.zeros((dim, dim), dtype=complex)
    parts = [(mu.points, mu.masses, True)]
    diag = np.zeros(dim)
    for d in mu.densities:
        if d.radial:
            diag += _density_diagonal(d, table, dim)
        else:
            parts.append(d.discretize(table.weight) + (False,))
    for pts, mass, atoms in parts:
        keep = mass > 0
        pts, mass = pts[keep], mass[keep]
        if len(pts) == 0:
            continue
        tail = _basis_tail(table, pts, dim) if atoms else np.zeros(1)
        if np.any(tail > ATOM_TAIL_TOL):
            j = int(np.argmax(tail))
            raise TruncationError(
                f"atom at {pts[j]:.4f} leaves {tail[j]:.1e} of its kernel outside the "
                f"first {dim} basis vectors")
        V = basis_vectors(table, pts, dim)
        # entry (m, n) = sum_j c_j v_n(w_j) conj(v_m(w_j))
        M += (V.conj().T * mass[None, :]) @ V
    M[np.diag_indices(dim)] += diag
    M = 0.5 * (M + M.conj().T)
    return ToeplitzMatrix(dim, M, mu, table, radial=mu.is_radial)


def check_invariants(M: ToeplitzMatrix) -> dict:
    E = M.entries
    herm = float(np.max(np.abs(E - E.conj().T), initial=0.0))
    lam = np.linalg.eigvalsh(E)
    top = float(np.max(np.abs(lam), initial=0.0))
    off = E - np.diag(np.diag(E))
    return {
        "hermitian_defect": herm,
        "min_eigenvalue": float(lam[0]) if len(lam) else 0.0,
        "lambda_max": top,
        "offdiag_max": float(np.max(np.abs(off), initial=0.0)),
        "psd_ok": bool(len(lam) == 0 or lam[0] >= -PSD_TOL * top),
    }


def apply(M: ToeplitzMatrix, f_coeffs):
    """Matrix action on coefficients in the orthonormal basis (zero-padded)."""
    f = np.asarray(f_coeffs, dtype=complex)
    if f.ndim != 1 or len(f) > M.dim:
        raise ContractError(f"expected at most {M.dim} coefficients")
    return M.entries[:, :len(f)] @ f


def kernel_coefficients(table, z, dim):
    """Coefficients of ``k_z`` in the first ``dim`` basis vectors.

    ``k_z = K_z / sqrt(K(z, z))`` has coefficients ``conj(z)^n / sqrt(h_n)``
    divided by ``sqrt(K(z, z))``; the full basis fixes the normalization.
    """
    z = complex(z)
    n = np.arange(dim)
    lz = -np.inf if z == 0 else np.log(abs(z))
    with np.errstate(invalid="ignore"):
        s = np.where(n == 0, 0.0, n * lz)
    norm = 0.5 * float(log_kappa_diag(table, z)) + float(table.weight.phi_radial(abs(z)))
    return np.exp(s - 0.5 * table.log_h[:dim] - norm) * np.exp(-1j * n * np.angle(z))


def operator_berezin(M: ToeplitzMatrix, table, z) -> float:
    """``<T k_z, k_z>`` from the matrix."""
    if abs(z) > table.weight.r_max * (1 + 1e-12):
        raise DomainError("z must satisfy |z| <= r_max")
    c = kernel_coefficients(table, z, M.dim)
    return max(float(np.real(np.vdot(c, M.entries @ c))), 0.0)


def operator_berezin_grid(M: ToeplitzMatrix, table, grid: DiscGrid) -> np.ndarray:
    """``<T k_z, k_z>`` on every node of a polar grid.

    On a ring ``|z| = t`` the form is a trigonometric polynomial in the
    angle whose coefficients are diagonal sums of ``a_m a_n M_mn``.
    """
    dim = M.dim
    n = np.arange(dim)
    radii = grid.radii
    with np.errstate(divide="ignore"):
        lr = np.log(radii)[:, None]
    with np.errstate(invalid="ignore"):
        s = np.where(n[None, :] == 0, 0.0, n[None, :] * lr)
    norm = 0.5 * log_kappa_diag(table, radii.astype(complex)) + table.weight.phi_radial(radii)
    a = np.exp(s - 0.5 * table.log_h[None, :dim] - norm[:, None])
    mm, nn = np.meshgrid(n, n, indexing="ij")
    d = (mm - nn).ravel() % grid.n_theta
    E = M.entries.ravel()
    out = np.empty(grid.shape)
    for i in range(len(radii)):
        w = (a[i][:, None] * a[i][None, :]).ravel() * E
        # c_m = a_m e^{-i m theta}; form = sum conj(c_m) M_mn c_n
        coef = np.bincount(d, weights=w.real, minlength=grid.n_theta) + \
            1j * np.bincount(d, weights=w.imag, minlength=grid.n_theta)
        out[i] = np.real(np.fft.ifft(coef) * grid.n_theta)
    return np.maximum(out, 0.0)


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    schatten: dict
    operator_norm: float
    trace: float
    diag_trace: float
    tail_ratio: float
    clipped: int = 0

    def to_dict(self):
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "schatten": {repr(float(k)): float(v) for k, v in self.schatten.items()},
            "operator_norm": self.operator_norm,
            "trace": self.trace,
            "diag_trace": self.diag_trace,
            "tail_ratio": self.tail_ratio,
            "clipped": self.clipped,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def schatten_norm(eigenvalues, p):
    return _lp_seq(eigenvalues, p)


def eigenvalues(M: ToeplitzMatrix):
    """Descending eigenvalues with rounding-level noise removed.

    Eigenvalues below ``dim * eps * lambda_max`` in magnitude are set to 0
    (they are not resolved by a backward-stable solver), and negative values
    within ``-1e-10 lambda_max`` are clipped.
    """
    if M.dim == 0:
        return np.zeros(0), 0
    lam = eigh(M.entries, eigvals_only=True, driver="evd")[::-1].copy()
    top = max(float(lam[0]), 0.0)
    if lam[-1] < -PSD_TOL * top:
        raise NumericalConsistencyError(
            f"matrix is not PSD: eigenvalue {lam[-1]:.3e} against lambda_max {top:.3e}")
    noise = M.dim * np.finfo(float).eps * top
    clipped = int(np.count_nonzero(lam < 0))
    lam[np.abs(lam) <= noise] = 0.0
    lam = np.maximum(lam, 0.0)
    return lam, clipped


def spectrum(M: ToeplitzMatrix, p_list=(0.5, 1.0, 2.0, 4.0)) -> SpectralReport:
    lam, clipped = eigenvalues(M)
    top = float(lam[0]) if len(lam) else 0.0
    tail = float(lam[-1] / top) if top > 0 else 0.0
    if tail > SPECTRAL_TAIL_WARN:
        log.warning("spectral tail lambda_N/lambda_max = %.2e; Schatten norms for small p "
                    "depend on the truncation", tail)
    return SpectralReport(
        eigenvalues=lam,
        schatten={float(p): schatten_norm(lam, p) for p in p_list},
        operator_norm=top,
        trace=float(np.sum(lam)),
        diag_trace=M.trace(),
        tail_ratio=tail,
        clipped=clipped,
    )


def operator_lp(values, grid, weight, p):
    """``(int values^p d lambda_rho)^(1/p)`` for node values on ``grid``."""
    return lp_norm(TransformField(grid.points, values, "custom", grid), p, "lambda_rho", weight)


def schatten_report(mu: Measure, weight, table, lat, delta=None, p_list=(0.5, 1.0, 2.0),
                    dim=DEFAULT_DIM, grid=None, r_avg=None,
                    ratio_window=DEFAULT_RATIO_WINDOW) -> dict:
    """Schatten-class quantities for each p.

    (i) ``S_p(T_mu)``, (ii) ``l^p`` norm of ``mu_hat_r`` on the lattice,
    (iii) ``L^p(lambda_rho)`` norm of ``mu_hat_delta`` and (iv) of the
    operator Berezin transform.  Returns ``{p: EquivalenceReport}``.
    """
    delta = lat.params.r if delta is None else delta
    grid = field_grid(weight) if grid is None else grid
    cache = {}

    def pieces(m):
        key = id(m)
        if key not in cache:
            if m.is_zero():
                cache[key] = None
            else:
                M = assemble(m, table, dim)
                lam, _ = eigenvalues(M)
                cache[key] = (lam, lattice_values(m, weight, lat, r_avg),
                              avg_function(m, weight, delta, grid).values,
                              operator_berezin_grid(M, table, grid))
        return cache[key]

    out = {}
    for p in p_list:
        def compute(m, p=p):
            got = pieces(m)
            if got is None:
                return dict.fromkeys(["schatten", "lattice", "avg", "operator_berezin"], 0.0)
            lam, lv, av, tb = got
            return {
                "schatten": schatten_norm(lam, p),
                "lattice": _lp_seq(lv, p),
                "avg": operator_lp(av, grid, weight, p),
                "operator_berezin": operator_lp(tb, grid, weight, p),
            }

        prov = {
            "schatten": "Schatten p-norm of the truncated Toeplitz matrix",
            "lattice": "l^p norm of lattice averages",
            "avg": "L^p(lambda_rho) norm of the averaging function at delta",
            "operator_berezin": "L^p(lambda_rho) norm of the operator Berezin transform",
        }
        out[p] = equivalence_report(compute, mu, prov, ratio_window,
                                    extra={"p": p, "delta": delta, "dim": dim})
    return out


def compact_tail(mu: Measure, table, dim=DEFAULT_DIM, R_sweep=()):
    """``(R, ||T_mu - T_{mu_R}||)`` over an increasing sweep of radii."""
    R_sweep = list(R_sweep)
    if any(b <= a for a, b in zip(R_sweep, R_sweep[1:])):
        raise ContractError("R_sweep must be increasing")
    if any(not (0 < R <= table.weight.r_max) for R in R_sweep):
        raise ContractError("R values must lie in (0, r_max]")
    if mu.is_zero():
        return [(float(R), 0.0) for R in R_sweep]
    full = assemble(mu, table, dim)
    out = []
    for R in R_sweep:
        mu_R = mu.restrict(R)
        if mu_R is mu:
            out.append((float(R), 0.0))
            continue
        D = full.entries - assemble(mu_R, table, dim).entries
        lam = np.linalg.eigvalsh(0.5 * (D + D.conj().T))
        out.append((float(R), float(np.max(np.abs(lam)))))
    return out


@dataclass
class BoundsReport:
    p: float
    schatten: float
    berezin_norm: float
    constant_a: float | None
    constant_b: float | None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {"p": self.p, "schatten": self.schatten, "berezin_norm": self.berezin_norm,
                "constant_a": self.constant_a, "constant_b": self.constant_b,
                "extra": dict(self.extra)}


def schatten_bounds_check(M: ToeplitzMatrix, table, p, grid=None) -> BoundsReport:
    """Measured constants in ``S_p <= C (int T~^p dlambda_rho)^(1/p)`` (p <= 1)
    and ``(int T~^p dlambda_rho)^(1/p) <= C S_p`` (p >= 1)."""
    weight = table.weight
    grid = field_grid(weight) if grid is None else grid
    lam, _ = eigenvalues(M)
    sp = schatten_norm(lam, p)
    tb = operator_lp(operator_berezin_grid(M, table, grid), grid, weight, p)
    ca = cb = None
    if p <= 1 and tb > 0:
        ca = sp / tb
    if p >= 1 and sp > 0:
        cb = tb / sp
    return BoundsReport(float(p), sp, tb, ca, cb, {"trace": float(np.sum(lam))})


# ---------------------------------------------------------------------------
# exports


def write_matrix_csv(M: ToeplitzMatrix, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["m", "n", "re", "im"])
        for row in M.to_rows():
            wr.writerow([row[0], row[1], repr(row[2]), repr(row[3])])


def write_eigenvalues_csv(rep: SpectralReport, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "eigenvalue"])
        for i, v in enumerate(rep.eigenvalues):
            wr.writerow([i, repr(float(v))])


__all__ = [
    "ToeplitzMatrix", "SpectralReport", "BoundsReport", "EquivalenceReport", "assemble",
    "apply", "operator_berezin", "operator_berezin_grid", "spectrum", "eigenvalues",
    "schatten_report", "compact_tail", "schatten_bounds_check", "check_invariants",
    "kernel_coefficients", "basis_vectors", "write_matrix_csv", "write_eigenvalues_csv",
]
