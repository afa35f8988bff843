"""Composite Gauss-Legendre rules on radial intervals and polar disc grids.

Radial rules are built from panel breakpoints.  Moment rules halve panel
widths toward the outer end and split every panel until the logarithmic
derivative of the integrand, times the panel width, stays small.  Disc grids
combine a radial rule with a uniform angular rule; on circles the trapezoid
rule integrates trigonometric polynomials of degree below ``n_theta``
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

NODES_PER_PANEL = 32


@lru_cache(maxsize=None)
def gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class RadialRule:
    """Nodes and weights for integrals over ``[0, end]`` in the radius."""

    breakpoints: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    @property
    def end(self) -> float:
        return float(self.breakpoints[-1])

    def refined(self) -> "RadialRule":
        b = self.breakpoints
        mid = 0.5 * (b[:-1] + b[1:])
        nb = np.empty(2 * len(b) - 1)
        nb[0::2] = b
        nb[1::2] = mid
        return rule_from_breakpoints(nb, self.order)

    def describe(self) -> dict:
        return {"panels": len(self.breakpoints) - 1, "order": self.order,
                "end": self.end}


def rule_from_breakpoints(breakpoints, order=NODES_PER_PANEL) -> RadialRule:
    b = np.asarray(breakpoints, dtype=float)
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(b)
    mid = 0.5 * (b[:-1] + b[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return RadialRule(b, nodes, weights, order)


def moment_breakpoints(weight, end, n_max, order=NODES_PER_PANEL, inner_panels=4,
                       max_halvings=60):
    """Breakpoints for integrands ``t^(2n+1) exp(-2 phi(t)) g(t)`` on [0, end].

    The interval ``[0, end/2]`` is split uniformly; beyond that, panels halve
    toward ``end`` until the last width resolves the steepest exponential
    rate, and each panel is subdivided so width times rate stays below
    ``order / 4``.
    """
    rate_end = (2 * n_max + 1) / end + 2.0 * float(weight.dphi_radial(end))
    pts = list(np.linspace(0.0, 0.5 * end, inner_panels + 1))
    k = 1
    while k < max_halvings:
        k += 1
        nxt = end * (1.0 - 2.0 ** -k)
        pts.append(nxt)
        if end - nxt < 1.0 / rate_end:
            break
    pts.append(end)
    b = np.unique(np.asarray(pts))
    out = [b[0]]
    budget = order / 4.0
    for a, c in zip(b[:-1], b[1:]):
        rate = (2 * n_max + 1) / max(a, 0.5 * end / inner_panels) + 2.0 * float(weight.dphi_radial(c))
        m = max(1, int(np.ceil((c - a) * rate / budget)))
        out.extend(np.linspace(a, c, m + 1)[1:])
    return np.asarray(out)


def moment_rule(weight, end, n_max, order=NODES_PER_PANEL) -> RadialRule:
    return rule_from_breakpoints(moment_breakpoints(weight, end, n_max, order), order)


def rho_breakpoints(weight, end, step=0.25, start=0.0):
    """Breakpoints spaced by ``step * rho(t)``, ending exactly at ``end``."""
    pts = [start]
    t = start
    while True:
        h = step * float(weight.rho_radial(t))
        # predictor-corrector: rho decreases outward for the built-in family
        h = step * float(min(weight.rho_radial(t), weight.rho_radial(min(t + h, end))))
        t = t + h
        if t >= end - 0.25 * h:
            break
        pts.append(t)
    pts.append(end)
    return np.asarray(pts)


def log_radial_integral(log_integrand, rule: RadialRule):
    """``log`` of ``int log_integrand`` along the last axis of node values.

    ``log_integrand`` has shape ``(..., n_nodes)``; entries of ``-inf`` are
    allowed.
    """
    return logsumexp(log_integrand + np.log(rule.weights), axis=-1)


@dataclass(frozen=True)
class DiscGrid:
    """Polar product grid for integrals against ``dA = dx dy / pi``.

    Attributes
    ----------
    radial : RadialRule
        Rule on ``[0, radius]``.
    n_theta : int
        Number of uniformly spaced angles.
    """

    radial: RadialRule
    n_theta: int

    @property
    def radius(self) -> float:
        return self.radial.end

    @property
    def radii(self) -> np.ndarray:
        return self.radial.nodes

    @property
    def thetas(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def shape(self) -> tuple:
        return (len(self.radial.nodes), self.n_theta)

    @property
    def points(self) -> np.ndarray:
        return self.radii[:, None] * np.exp(1j * self.thetas)[None, :]

    @property
    def ring_weights(self) -> np.ndarray:
        """dA weight of one node on each ring (angles share it equally)."""
        return 2.0 * self.radial.nodes * self.radial.weights / self.n_theta

    @property
    def weights(self) -> np.ndarray:
        return np.broadcast_to(self.ring_weights[:, None], self.shape)

    def integrate(self, values):
        """Integral of node values (shape ``(n_r, n_theta)``) against dA."""
        return float(np.sum(np.sum(values, axis=1) * self.ring_weights))

    def key(self) -> tuple:
        return (self.radius, self.n_theta, len(self.radial.nodes), self.radial.order)


def field_grid(weight, radius=None, n_theta=512, step=0.25, order=8) -> DiscGrid:
    """Standard grid for transform fields: rho-adapted radial panels.

    ``radius`` defaults to ``0.9 r_max``; kernel-based fields cannot be
    resolved by a finite monomial basis right up to the truncation edge.
    """
    if radius is None:
        radius = 0.9 * weight.r_max
    b = rho_breakpoints(weight, radius, step)
    return DiscGrid(rule_from_breakpoints(b, order), n_theta)


def integration_grid(weight, n_basis, radius=None, n_theta=None, order=16) -> DiscGrid:
    """Grid for norms of kernel functions over the whole truncated disc.

    Panels merge the moment breakpoints with rho-adapted breakpoints, so
    both high-degree monomials and localized kernels are resolved.  With the
    default ``n_theta = 2 n_basis`` products of two basis polynomials are
    integrated exactly on every circle.
    """
    if radius is None:
        radius = weight.r_max
    if n_theta is None:
        n_theta = 2 * n_basis
    b = np.union1d(moment_breakpoints(weight, radius, n_basis, order),
                   rho_breakpoints(weight, radius, 0.5))
    b = b[np.concatenate([[True], np.diff(b) > 1e-14 * radius])]
    return DiscGrid(rule_from_breakpoints(b, order), n_theta)
