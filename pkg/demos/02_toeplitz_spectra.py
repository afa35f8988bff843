"""Toeplitz operators of measures and their Schatten norms.

For a positive measure mu the Toeplitz operator T_mu is assembled as a
matrix in the orthonormal monomial basis.  The demo shows

1. that area measure on the truncated disc gives the identity;
2. that a single atom gives a rank-one operator whose Schatten norms all
   coincide with a closed form;
3. the Schatten-class report, which compares S_p(T_mu) with three
   measure-side quantities for each canonical test measure;
4. how fast ||T_mu - T_{mu_R}|| decays as the restriction radius R grows.

Run with ``python demos/02_toeplitz_spectra.py`` (about half a minute).
Eigenvalue CSVs go to ``$EXPBERGMAN_OUTPUT_DIR`` (default ``demo-out``).
"""

import os
from pathlib import Path

import numpy as np

from expbergman.geometry import LatticeParams, build_lattice
from expbergman.kernel import compute_moments
from expbergman.measures import CANONICAL_NAMES, Measure, canonical_measures
from expbergman.quadrature import field_grid
from expbergman.toeplitz import (assemble, compact_tail, schatten_report, spectrum,
                                 write_eigenvalues_csv)
from expbergman.weights import make_weight

out = Path(os.environ.get("EXPBERGMAN_OUTPUT_DIR", "demo-out"))
out.mkdir(parents=True, exist_ok=True)

w = make_weight("EXP", 1.0, 1.0, 0.95)
table = compute_moments(w, 256)

# Area measure reproduces every basis function.
eye = assemble(Measure.radial_density("uniform", w.r_max), table, 200)
print(f"T_dA: max |T - I| = {np.max(np.abs(eye.entries - np.eye(200))):.1e}")

# One atom of mass c at a: T = c e^{-2 phi(a)} k_a (x) k_a, so every S_p is the same.
rep = spectrum(assemble(Measure.atoms([0.5j], [0.8]), table), (0.5, 1, 2, 4))
print("single atom S_p:", {p: f"{v:.10f}" for p, v in rep.schatten.items()})

# The Schatten-class report at lattice scale r = 1 with separation 0.9.
lat = build_lattice(w, LatticeParams(r=1.0, s=0.9), seed=0)
grid = field_grid(w)
canon = canonical_measures(w, lat)
print(f"\n{'measure':14s} {'p':>4s} {'S_p':>10s} {'lattice':>10s} {'avg':>10s} "
      f"{'Berezin':>10s} {'spread':>8s}")
for name in CANONICAL_NAMES:
    for p, er in schatten_report(canon[name], w, table, lat, 1.0, (0.5, 1.0, 2.0),
                                 grid=grid).items():
        q = er.quantities
        print(f"{name:14s} {p:4g} {q['schatten']:10.4g} {q['lattice']:10.4g} {q['avg']:10.4g} "
              f"{q['operator_berezin']:10.4g} {er.ratio_spread:8.2f}")
    write_eigenvalues_csv(spectrum(assemble(canon[name], table)), out / f"eig_{name}.csv")

# Restricting the measure to |w| <= R leaves a difference that vanishes once R
# passes the support (0.76 here).
sweep = [0.2, 0.4, 0.6, 0.7, 0.76, 0.8]
print("\n||T_mu - T_mu_R|| for the boundary density:")
for R, v in compact_tail(canon["boundary"], table, 200, sweep):
    print(f"  R = {R:.2f}: {v:.3e}")
