"""Weights, kernels and lattices for an exponential weight.

The demo walks through the objects every later check is built on:

1. the weight phi = A (1 - |z|^2)^(-alpha) and its radius function rho;
2. the moment table behind the reproducing kernel, checked against the
   unweighted disc where the kernel is known in closed form;
3. a (rho, r)-lattice with its measured overlap multiplicity.

Run with ``python demos/01_kernel_and_lattice.py``.  A lattice CSV is written
to ``$EXPBERGMAN_OUTPUT_DIR`` (default ``demo-out``).
"""

import os
from pathlib import Path

import numpy as np

from expbergman.geometry import (LatticeParams, build_lattice, low_discrepancy_sample,
                                 verify_covering, write_lattice_csv)
from expbergman.kernel import (compute_moments, kernel_full, log_kappa_diag, log_norm_Kz,
                               reproducing_residual)
from expbergman.weights import check_membership, make_weight, sample_disc

out = Path(os.environ.get("EXPBERGMAN_OUTPUT_DIR", "demo-out"))
out.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(0)

# The weight.  rho(0) = 1/2 for A = alpha = 1, and rho shrinks like (1 - |z|)^2.
w = make_weight("EXP", A=1.0, alpha=1.0, r_max=0.95)
print("rho at |z| = 0, 0.5, 0.9:", np.round(w.rho(np.array([0, 0.5, 0.9])), 4))
m = check_membership(w)
print(f"min Laplacian of phi {m.min_laplacian:.3f}, Lipschitz estimate of rho "
      f"{m.lipschitz_estimate:.3f}")

# Unweighted disc first: h_n = 1/(n+1) and K(z, w) = (1 - z conj(w))^-2.
flat = compute_moments(make_weight("FLAT", r_max=1.0), 256)
z, v = sample_disc(200, 0.9, rng), sample_disc(200, 0.9, rng)
err = np.max(np.abs(kernel_full(flat, z, v) * (1 - z * np.conj(v)) ** 2 - 1))
print(f"unweighted kernel against the closed form: max relative error {err:.1e}")

# The exponential weight.  Kernel values are kept in the weighted form
# kappa = K e^{-phi(z) - phi(w)}, which never overflows.
table = compute_moments(w, 256)
a = 0.6 + 0.3j
lhs = 2 * log_norm_Kz(table, a, 2.0)
rhs = float(log_kappa_diag(table, a)) + 2 * float(w.phi(a))
print(f"2 log||K_a|| = {lhs:.10f}, log kappa(a,a) + 2 phi(a) = {rhs:.10f}")
res = reproducing_residual(table, np.eye(11), a)
print(f"reproducing residual for z^0..z^10 at a: max {res.max():.1e}")
for p in (1.0, 2.0, 4.0):
    print(f"  log ||K_a||_p for p = {p:g}: {log_norm_Kz(table, a, p):.4f}")

# A lattice at scale r = 0.5 with separation s = 0.5.
lat = build_lattice(w, LatticeParams(r=0.5, s=0.5), seed=0)
sample = low_discrepancy_sample(w.r_max, 100_000, seed=1)
print(f"lattice: {len(lat)} points, multiplicity {lat.multiplicity}, "
      f"uncovered samples {len(verify_covering(lat, sample))}")
write_lattice_csv(lat, out / "lattice_r0.5.csv")
print("lattice written to", out / "lattice_r0.5.csv")
