import json

import numpy as np
import pytest

from expbergman.carleson import (
    atomic_grid,
    build_atomic_function,
    carleson_check,
    carleson_qlp_check,
    khinchine_probe,
    lp_equivalence_check,
    test_integrals as kernel_test_integrals,
    test_net as kernel_test_net,
    vanishing_check,
    write_profiles_csv,
)
from expbergman.errors import ContractError
from expbergman.kernel import kappa, log_norm_Kz
from expbergman.measures import Measure, avg_function, berezin_measure
from expbergman.toeplitz import assemble, eigenvalues

from conftest import EQ_DELTA


@pytest.fixture(scope="module")
def agrid(weight):
    return atomic_grid(weight)


@pytest.fixture(scope="module")
def inner_idx(eq_lattice):
    return np.argsort(np.abs(eq_lattice.points), kind="stable")[:100]


def test_zero_measure(weight, table, eq_lattice, grid):
    rep = carleson_check(Measure.zero(), weight, table, eq_lattice, 2, 2, EQ_DELTA, grid)
    assert all(v == 0 for v in rep.quantities.values())
    assert rep.verdicts["carleson"] == "Carleson with norm 0"
    json.loads(rep.to_json())


def test_contract(weight, table, eq_lattice, grid):
    with pytest.raises(ContractError):
        carleson_check(Measure.zero(), weight, table, eq_lattice, 2, 1, grid=grid)
    with pytest.raises(ContractError):
        carleson_qlp_check(Measure.zero(), weight, table, eq_lattice, 1, 2, grid=grid)


def test_single_atom_p_equals_q(weight, table, eq_lattice, grid):
    a = eq_lattice.points[3]
    mu = Measure.atoms([a], [0.4])
    direct = avg_function(mu, weight, EQ_DELTA, [a]).values[0]
    assert direct == pytest.approx(0.4 / weight.rho(a) ** 2, rel=1e-14)
    rep = carleson_check(mu, weight, table, eq_lattice, 1, 1, EQ_DELTA, grid)
    assert rep.quantities["avg_sup"] >= direct


def test_p2_lower_bound_is_berezin_on_net(weight, table, eq_lattice, grid, canon):
    mu = canon["atom_cluster"]
    net = kernel_test_net(weight, eq_lattice)
    rep = carleson_check(mu, weight, table, eq_lattice, 2, 2, EQ_DELTA, grid, net=net)
    on_net = berezin_measure(mu, table, net).values
    assert rep.quantities["test_lower"] == pytest.approx(np.max(on_net), rel=1e-8)
    lam_max = eigenvalues(assemble(mu, table))[0][0]
    assert rep.quantities["test_lower"] <= lam_max + 1e-8
    assert rep.quantities["berezin_sup"] <= lam_max + 1e-8


def test_test_integrals_match_direct_sum(weight, table, eq_lattice):
    mu = Measure.atoms([0.2, 0.5j, -0.4 - 0.1j], [1.0, 0.3, 0.7])
    centers = eq_lattice.points[:5]
    got = kernel_test_integrals(mu, table, centers, 1.0, 2.0)
    for a, g in zip(centers, got):
        k = np.abs(kappa(table, mu.points, a)) * np.exp(weight.phi(a) - log_norm_Kz(table, a, 1.0))
        assert g == pytest.approx(np.sum(k ** 2 * mu.masses), rel=1e-6)


def test_avg_sup_independent_of_pq_when_equal(weight, table, eq_lattice, grid, canon):
    mu = canon["mixed"]
    a = carleson_check(mu, weight, table, eq_lattice, 1, 1, EQ_DELTA, grid)
    b = carleson_check(mu, weight, table, eq_lattice, 2, 2, EQ_DELTA, grid)
    assert a.quantities["avg_sup"] == b.quantities["avg_sup"]
    assert a.quantities["lattice_sup"] == b.quantities["lattice_sup"]


def test_canonical_lower_bound_valid(weight, table, eq_lattice, grid, canon):
    for name in ("atom_cluster", "uniform"):
        rep = carleson_check(canon[name], weight, table, eq_lattice, 1, 2, EQ_DELTA, grid)
        assert rep.verdicts["lower_bound_valid"]
        assert rep.scaling_drift <= 1e-6


def test_vanishing_compact_atoms(weight, table, eq_lattice, grid, tmp_path):
    mu = Measure.atoms([0.3, 0.4j], [1.0, 2.0])
    rep = vanishing_check(mu, weight, table, eq_lattice, 2, 2, EQ_DELTA, grid=grid)
    assert rep.verdict == "vanishing-consistent"
    big = vanishing_check(mu.scaled(10), weight, table, eq_lattice, 2, 2, EQ_DELTA, grid=grid)
    assert big.verdict == rep.verdict
    for k in rep.profiles:
        a = np.array([v for _, v in rep.profiles[k]])
        b = np.array([v for _, v in big.profiles[k]])
        assert np.allclose(b, 10 * a, rtol=1e-12, atol=0)
    write_profiles_csv(rep, tmp_path / "profiles.csv")
    assert (tmp_path / "profiles.csv").read_text().startswith("quantity,")


def test_vanishing_area_measure(weight, table, eq_lattice, grid):
    mu = Measure.radial_density("uniform", weight.r_max)
    rep = vanishing_check(mu, weight, table, eq_lattice, 2, 2, EQ_DELTA, grid=grid)
    assert rep.verdict == "not vanishing"
    # the averaging function of dA is the constant disc-area ratio delta^2 inside
    assert rep.profiles["avg"][0][1] == pytest.approx(EQ_DELTA ** 2, rel=1e-6)


def test_qlp(weight, table, eq_lattice, grid):
    zero = carleson_qlp_check(Measure.zero(), weight, table, eq_lattice, 2, 1, EQ_DELTA, grid)
    assert all(v == 0 for v in zero.quantities.values())
    mu = Measure.radial_density("uniform", weight.r_max)
    rep = carleson_qlp_check(mu, weight, table, eq_lattice, 2, 1, EQ_DELTA, grid)
    assert rep.extra["s"] == 2
    assert rep.verdicts["within_window"] and rep.scaling_drift <= 1e-6


def test_atomic_single_coefficient(table, eq_lattice, agrid, inner_idx):
    c = np.zeros(len(eq_lattice), dtype=complex)
    c[inner_idx[7]] = 1.0
    for p in (1.0, 2.0):
        F = build_atomic_function(eq_lattice, c, p, table, agrid)
        assert F.norm == pytest.approx(1, abs=1e-6)
        F2 = build_atomic_function(eq_lattice, 2 * c, p, table, agrid)
        assert F2.norm == pytest.approx(2 * F.norm, rel=1e-12)


def test_atomic_function_pointwise(table, eq_lattice, agrid, inner_idx):
    c = np.zeros(len(eq_lattice), dtype=complex)
    c[inner_idx[:3]] = [1.0, -0.5j, 0.25]
    F = build_atomic_function(eq_lattice, c, 2.0, table, agrid)
    x = np.array([0.1 + 0.1j, -0.3])
    expected = sum(ck * kappa(table, x, a) * np.exp(table.weight.phi(a) - log_norm_Kz(table, a, 2.0, agrid))
                   for ck, a in zip(c[inner_idx[:3]], eq_lattice.points[inner_idx[:3]]))
    assert np.allclose(F.weighted(x), expected, rtol=1e-12)


def test_atomic_contract(table, eq_lattice):
    with pytest.raises(ContractError):
        build_atomic_function(eq_lattice, np.ones(3), 2.0, table)


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_atomic_ratio_stable_across_seeds(table, eq_lattice, agrid, inner_idx, p):
    ratios = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        c = np.zeros(len(eq_lattice), dtype=complex)
        c[inner_idx] = rng.standard_normal(100)
        ratios.append(build_atomic_function(eq_lattice, c, p, table, agrid).ratio)
    ratios = np.array(ratios)
    med = np.median(ratios)
    print(f"p={p}: atomic ratios {np.round(ratios, 3)}")
    assert np.all(np.abs(ratios / med - 1) <= 0.5)


def test_khinchine_zero_and_single(table, eq_lattice, agrid, inner_idx, weight):
    c = np.zeros(len(eq_lattice), dtype=complex)
    c[inner_idx[4]] = 0.7
    mc, rhs, _ = khinchine_probe(Measure.zero(), eq_lattice, c, 2.0, 2.0, table, grid=agrid)
    assert mc == 0.0
    mu = Measure.atoms([0.1, -0.2j, 0.3 + 0.3j], [1.0, 2.0, 0.5])
    mc, rhs, _ = khinchine_probe(mu, eq_lattice, c, 2.0, 1.5, table, grid=agrid)
    a = eq_lattice.points[inner_idx[4]]
    k = 0.7 * np.abs(kappa(table, mu.points, a)) * np.exp(weight.phi(a) - log_norm_Kz(table, a, 2.0, agrid))
    assert mc == pytest.approx(np.sum(k ** 1.5 * mu.masses), rel=1e-12)


def test_khinchine_lower_bound(table, eq_lattice, agrid, inner_idx, canon):
    rng = np.random.default_rng(5)
    c = np.zeros(len(eq_lattice), dtype=complex)
    c[inner_idx] = rng.standard_normal(100)
    mu = canon["mixed"]
    a = khinchine_probe(mu, eq_lattice, c, 2.0, 2.0, table, trials=64, seed=1, grid=agrid)
    b = khinchine_probe(mu, eq_lattice, c, 2.0, 2.0, table, trials=64, seed=1, grid=agrid)
    assert a == b
    # the kernel matrix built from basis vectors agrees with the pointwise kernel
    lone = np.zeros(len(eq_lattice), dtype=complex)
    lone[inner_idx[0]] = 1.0
    single = Measure.atoms([0.2 - 0.1j], [1.0])
    got, _, _ = khinchine_probe(single, eq_lattice, lone, 2.0, 2.0, table, grid=agrid)
    z0 = eq_lattice.points[inner_idx[0]]
    k = np.abs(kappa(table, 0.2 - 0.1j, z0)) * np.exp(table.weight.phi(z0) - log_norm_Kz(table, z0, 2.0, agrid))
    assert got == pytest.approx(k ** 2, rel=1e-10)
    mc, rhs, ratio = a
    print(f"Khinchine probe: mean {mc:.4e}, local sum {rhs:.4e}, ratio {ratio:.3f}")
    assert rhs > 0 and 0 < ratio < np.inf
    with pytest.raises(ContractError):
        khinchine_probe(mu, eq_lattice, c, 2.0, 2.0, table, trials=10)


def test_lp_equivalence(weight, table, eq_lattice, grid, canon):
    zero = lp_equivalence_check(Measure.zero(), weight, table, eq_lattice, 1.0, EQ_DELTA, grid)
    assert all(v == 0 for v in zero.quantities.values()) and zero.scaling_drift == 0
    rep = lp_equivalence_check(canon["atom_cluster"], weight, table, eq_lattice, 1.0, EQ_DELTA, grid)
    # for p = 1 the averaging integral is the total mass times the disc-area ratio
    # up to the rho variation across each disc
    assert rep.quantities["avg_norm"] == pytest.approx(7 * EQ_DELTA ** 2, rel=0.3)
    assert rep.verdicts["within_window"] and rep.scaling_drift <= 1e-6
    with pytest.raises(ContractError):
        lp_equivalence_check(Measure.zero(), weight, table, eq_lattice, 0.0, grid=grid)
