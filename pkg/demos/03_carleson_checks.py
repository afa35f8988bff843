"""Carleson-type checks for a few measures.

A measure mu is q-Carleson for A^p when the embedding A^p -> L^q(mu) is
bounded.  For p <= q this is detected by any of three sampled suprema (the
Berezin transform, the local averages at scale delta, and the lattice
averages, each weighted by rho^(2 - 2q/p)), and the normalized test kernels
give a lower bound for the embedding norm.  The demo prints all four and their
spread, then contrasts a vanishing (compactly supported) measure with area
measure, whose averages never decay.

Run with ``python demos/03_carleson_checks.py`` (about half a minute).  Decay
profiles are written to ``$EXPBERGMAN_OUTPUT_DIR`` (default ``demo-out``).
"""

import os
from pathlib import Path

from expbergman.carleson import (carleson_check, carleson_qlp_check, lp_equivalence_check,
                                 vanishing_check, write_profiles_csv)
from expbergman.geometry import LatticeParams, build_lattice
from expbergman.kernel import compute_moments
from expbergman.measures import Measure, canonical_measures
from expbergman.quadrature import field_grid
from expbergman.weights import make_weight

out = Path(os.environ.get("EXPBERGMAN_OUTPUT_DIR", "demo-out"))
out.mkdir(parents=True, exist_ok=True)

w = make_weight("EXP", 1.0, 1.0, 0.95)
table = compute_moments(w, 256)
lat = build_lattice(w, LatticeParams(r=1.0, s=0.9), seed=0)
grid = field_grid(w)
canon = canonical_measures(w, lat)
delta = 1.0

print("p <= q: sampled suprema and the test-kernel lower bound")
for name in ("atom_cluster", "uniform"):
    for p, q in ((2, 2), (1, 2)):
        rep = carleson_check(canon[name], w, table, lat, p, q, delta, grid)
        vals = ", ".join(f"{k} {v:.4g}" for k, v in rep.quantities.items())
        print(f"  {name:12s} p={p} q={q}: {vals}; spread {rep.ratio_spread:.2f}, "
              f"drift under mu -> 10 mu {rep.scaling_drift:.1e}")

print("\nq < p: L^{p/(p-q)} norms for area measure on the truncated disc")
rep = carleson_qlp_check(Measure.radial_density("uniform", w.r_max), w, table, lat, 2, 1, delta,
                         grid)
print("  ", {k: round(v, 4) for k, v in rep.quantities.items()}, f"spread {rep.ratio_spread:.2f}")

print("\nL^p membership of the Berezin transform and of the local averages")
for p in (0.5, 1.0, 2.0):
    rep = lp_equivalence_check(canon["boundary"], w, table, lat, p, delta, grid)
    print(f"  boundary density, p={p:g}:",
          {k: round(v, 4) for k, v in rep.quantities.items()}, f"spread {rep.ratio_spread:.2f}")

print("\nvanishing checks (p = q = 2)")
for name, mu in (("compact atoms", Measure.atoms([0.3, 0.4j], [1.0, 2.0])),
                 ("area measure", Measure.radial_density("uniform", w.r_max))):
    vr = vanishing_check(mu, w, table, lat, 2, 2, delta, grid=grid)
    tail = {k: f"{prof[-1][1]:.2e}" for k, prof in vr.profiles.items()}
    print(f"  {name}: {vr.verdict}; values beyond |z| = {vr.profiles['avg'][-1][0]:.3f}: {tail}")
    write_profiles_csv(vr, out / f"profiles_{name.replace(' ', '_')}.csv")
