"""Weight models phi, their Laplacians and the radius function rho.

The built-in family is ``EXP(A, alpha)``::

    phi(z) = A (1 - |z|^2)^(-alpha)
    Laplacian phi(z) = 4 A alpha (1 + alpha |z|^2) (1 - |z|^2)^(-alpha - 2)
    rho(z) = (Laplacian phi(z))^(-1/2)

Two oracle modes exist for cross-checks: ``FLAT`` (phi = 0, rho = 1, whose
Bergman kernel is ``(1 - z conj(w))^-2``) and a constant-rho override on any
family.  Oracle models are flagged and are not members of the weight class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, ParameterDomainError

FAMILIES = ("EXP", "FLAT")
DECAY_THRESHOLDS = tuple(round(0.1 * k, 1) for k in range(10))


@dataclass(frozen=True)
class WeightModel:
    """Radial weight with closed-form phi, Laplacian and rho.

    Parameters
    ----------
    family : {"EXP", "FLAT"}
    A, alpha : float
        Amplitude and exponent of the EXP family (ignored for FLAT).
    r_max : float
        Truncation radius; every integral, supremum and lattice lives on
        ``|z| <= r_max``.
    rho_const : float, optional
        Constant override for rho (geometry oracle mode).
    """

    family: str = "EXP"
    A: float = 1.0
    alpha: float = 1.0
    r_max: float = 0.95
    rho_const: float | None = None
    radial: bool = field(default=True, init=False)

    @property
    def is_oracle(self) -> bool:
        return self.family == "FLAT" or self.rho_const is not None

    @property
    def in_w0(self) -> bool:
        return not self.is_oracle

    # radial profiles, t = |z| >= 0
    def phi_radial(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "FLAT":
            return np.zeros_like(t)
        return self.A * (1.0 - t * t) ** (-self.alpha)

    def dphi_radial(self, t):
        """Derivative of the radial profile of phi."""
        t = np.asarray(t, dtype=float)
        if self.family == "FLAT":
            return np.zeros_like(t)
        a = self.alpha
        return 2.0 * self.A * a * t * (1.0 - t * t) ** (-a - 1.0)

    def laplacian_radial(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "FLAT":
            return np.zeros_like(t)
        a = self.alpha
        u = 1.0 - t * t
        return 4.0 * self.A * a * (1.0 + a * t * t) * u ** (-a - 2.0)

    def rho_radial(self, t):
        t = np.asarray(t, dtype=float)
        if self.rho_const is not None:
            return np.full_like(t, self.rho_const)
        if self.family == "FLAT":
            return np.ones_like(t)
        return self.laplacian_radial(t) ** -0.5

    def log_rho_radial(self, t):
        return np.log(self.rho_radial(t))

    # planar versions
    def phi(self, z):
        return self.phi_radial(np.abs(z))

    def laplacian_phi(self, z):
        return self.laplacian_radial(np.abs(z))

    def rho(self, z):
        return self.rho_radial(np.abs(z))

    def rho_max(self) -> float:
        """Largest value of rho on the truncated disc (attained at 0 for EXP)."""
        t = np.linspace(0.0, self.r_max, 2001)
        return float(np.max(self.rho_radial(t)))

    def boundary_ratio(self) -> float:
        """Smallest s with ``rho(z) <= s (1 - |z|)`` on the truncated disc."""
        t = np.linspace(0.0, self.r_max, 4001)
        ratio = self.rho_radial(t) / (1.0 - t)
        k = int(np.argmax(ratio))
        lo, hi = t[max(k - 1, 0)], t[min(k + 1, len(t) - 1)]
        res = minimize_scalar(lambda x: -float(self.rho_radial(x)) / (1.0 - x),
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        return float(max(ratio[k], -res.fun))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "A": self.A,
            "alpha": self.alpha,
            "r_max": self.r_max,
            "rho_const": self.rho_const,
        }


def make_weight(family="EXP", A=1.0, alpha=1.0, r_max=0.95, rho_const=None):
    """Instantiate a weight model after validating its parameters.

    ``FLAT`` accepts ``r_max = 1`` so that its moments reproduce the
    classical Bergman space exactly; every other model needs
    ``0 < r_max < 1``.
    """
    family = str(family).upper()
    if family not in FAMILIES:
        raise ParameterDomainError(f"unknown weight family {family!r}")
    if family == "EXP" and not (A > 0 and alpha > 0):
        raise ParameterDomainError(f"EXP needs A > 0 and alpha > 0, got A={A}, alpha={alpha}")
    upper_ok = r_max <= 1.0 if family == "FLAT" else r_max < 1.0
    if not (r_max > 0 and upper_ok):
        raise DomainError(f"r_max must lie in (0, 1), got {r_max}")
    if rho_const is not None and not rho_const > 0:
        raise ParameterDomainError(f"rho override must be positive, got {rho_const}")
    return WeightModel(family, float(A), float(alpha), float(r_max),
                       None if rho_const is None else float(rho_const))


def fd_laplacian(w: WeightModel, z, h=None):
    """Centered five-point Laplacian of phi at the points ``z``.

    The step scales with the distance to the unit circle so the relative
    truncation error stays uniform.
    """
    z = np.asarray(z, dtype=complex)
    if h is None:
        h = 5e-4 * (1.0 - np.abs(z))
    f = w.phi
    return (f(z + h) + f(z - h) + f(z + 1j * h) + f(z - 1j * h) - 4.0 * f(z)) / h**2


def sample_disc(n, radius, rng):
    """``n`` points uniform with respect to area on ``|z| <= radius``."""
    u = rng.random(n)
    v = rng.random(n)
    return radius * np.sqrt(u) * np.exp(2j * np.pi * v)


@dataclass
class MembershipReport:
    min_laplacian: float
    lipschitz_estimate: float
    l0_decay: list
    rho_over_one_minus_mod: float
    oracle: bool

    def to_dict(self) -> dict:
        return {
            "min_laplacian": self.min_laplacian,
            "lipschitz_estimate": self.lipschitz_estimate,
            "l0_decay": [[t, q] for t, q in self.l0_decay],
            "rho_over_one_minus_mod": self.rho_over_one_minus_mod,
            "oracle": self.oracle,
        }


def check_membership(w: WeightModel, n_samples=2000, seed=0) -> MembershipReport:
    """Sampled diagnostics for the weight class.

    Lipschitz quotients are taken over two pair populations: independent
    random pairs, and close pairs at a step of ``1e-3 (1 - |z|)`` which
    resolve the local gradient of rho.  The decay table uses nested pair
    sets (both ends beyond ``t``), so its suprema are non-increasing in t.
    """
    if n_samples < 100:
        raise ParameterDomainError("n_samples must be at least 100")
    rng = np.random.default_rng(seed)
    z = sample_disc(n_samples, w.r_max, rng)
    z[0] = 0.0
    lap = w.laplacian_phi(z)

    a = sample_disc(n_samples, w.r_max, rng)
    b = sample_disc(n_samples, w.r_max, rng)
    step = 1e-3 * (1.0 - np.abs(z))
    near = z + step * np.exp(2j * np.pi * rng.random(n_samples))
    keep = np.abs(near) <= w.r_max
    za = np.concatenate([a, z[keep]])
    zb = np.concatenate([b, near[keep]])
    dist = np.abs(za - zb)
    ok = dist > 0
    za, zb, dist = za[ok], zb[ok], dist[ok]
    quot = np.abs(w.rho(za) - w.rho(zb)) / dist
    inner = np.minimum(np.abs(za), np.abs(zb))
    decay = []
    for t in DECAY_THRESHOLDS:
        sel = inner >= t
        decay.append((t, float(np.max(quot[sel])) if np.any(sel) else 0.0))

    return MembershipReport(
        min_laplacian=float(np.min(lap)),
        lipschitz_estimate=float(np.max(quot)),
        l0_decay=decay,
        rho_over_one_minus_mod=w.boundary_ratio(),
        oracle=w.is_oracle,
    )
