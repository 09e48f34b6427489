import numpy as np
import pytest
from scipy.linalg import expm

from fockdirichlet import (AdmissibleKernel, DerivationDirection, LatticeConfig,
                           ModelSpec, assemble_generator, build_model,
                           graph_laplacian, heat_comparison,
                           lieb_robinson_probe, polynomial_decay_probe,
                           quadratic_form_energy, rayleigh_scaling,
                           site_operator, spectral_gap)


# --------------------------------------------------------------------------
# spectral gaps
# --------------------------------------------------------------------------

def test_meanfield_gap_positive_and_kernel(kernel):
    lat = LatticeConfig(1, 1, "chain", 1.0, 4)
    built = build_model(ModelSpec("mean_field", lat))
    K = assemble_generator(built.directions, built.metric, kernel)
    rep = spectral_gap(K, built.metric)
    assert rep.gap > 0
    assert rep.kernel_dim == 1
    assert rep.unit_kernel_residual < 1e-10
    assert rep.eigenvalues.min() > -1e-9


def test_gap_requires_symmetry_flag(kernel):
    lat = LatticeConfig(1, 1, "chain", 1.0, 3)
    built = build_model(ModelSpec("mean_field", lat))
    K = assemble_generator(built.directions, built.metric, kernel, check=False)
    with pytest.raises(ValueError):
        spectral_gap(K, built.metric)


def test_selfadjoint_w_model_not_ergodic(kernel):
    lat = LatticeConfig(1, 2, "chain", 1.0, 2)
    built = build_model(ModelSpec("w_ops", lat,
                                  params={"n": 1, "m": 1, "selfadjoint": True}))
    K = assemble_generator(built.directions, built.metric, kernel)
    rep = spectral_gap(K, built.metric)
    assert rep.kernel_dim > 1


def test_quadratic_form_matches_superoperator(kernel, rng):
    from fockdirichlet import KmsMetric, dirichlet_energy
    lat = LatticeConfig(1, 2, "chain", 1.0, 2)
    built = build_model(ModelSpec("z_power", lat, params={"n": 1, "m": 1}))
    K = assemble_generator(built.directions, built.metric, kernel)
    from conftest import random_op
    for _ in range(5):
        f = random_op(rng, lat)
        direct = quadratic_form_energy(built.directions, built.metric, kernel, f)
        via_superop = dirichlet_energy(f, K)
        assert direct == pytest.approx(via_superop, abs=1e-9 * max(1, abs(via_superop)))


# --------------------------------------------------------------------------
# Rayleigh scaling
# --------------------------------------------------------------------------

def test_z_model_surface_volume_scaling(kernel):
    rep = rayleigh_scaling("z_power", "sum_adag", range(3, 9), n_max=1,
                           kernel=kernel, params={"n": 1, "m": 1, "half": True})
    assert -1.1 <= rep.exponent <= -0.9
    assert rep.e_over_boundary_spread < 0.10
    # energies stay flat (boundary pairs only), variances grow linearly
    assert max(rep.energies) / min(rep.energies) < 1.01
    v = np.asarray(rep.variances)
    assert np.allclose(v / v[0], np.asarray(rep.sizes) / rep.sizes[0], rtol=1e-10)


def test_aij_model_scaling(kernel):
    rep = rayleigh_scaling("invariant_aij", "sum_n", range(3, 9), n_max=1,
                           kernel=kernel,
                           params={"sites_i": [0], "sites_j": [1]})
    assert -1.1 <= rep.exponent <= -0.9
    assert rep.e_over_boundary_spread < 0.10


def test_meanfield_ratio_does_not_decay(kernel):
    rep = rayleigh_scaling("mean_field", "sum_adag", [2, 3, 4], n_max=2,
                           kernel=kernel)
    assert rep.exponent > -0.2


# --------------------------------------------------------------------------
# heat-sector reduction
# --------------------------------------------------------------------------

def test_heat_constant_value(kernel):
    assert 4 * kernel.fourier(0.0).real * np.sinh(0.5) == pytest.approx(
        2 * np.sinh(0.5), abs=1e-14)
    assert 2 * np.sinh(0.5) == pytest.approx(1.042190, abs=1e-6)


def test_heat_comparison_two_site(kernel):
    lat = LatticeConfig(1, 2, "chain", 1.0, 2)
    rep = heat_comparison(lat, kernel=kernel)
    assert rep.span_residual < 1e-9
    assert rep.restriction_deviation < 1e-8
    assert rep.C_predicted == pytest.approx(2 * np.sinh(0.5), abs=1e-12)
    # single Fourier mode decays at rate 2C
    C = rep.C_predicted
    k0 = np.array([1.0, -1.0]) / np.sqrt(2)
    RA = rep.restriction[:2, :2]
    for t in (0.3, 1.0):
        got = expm(-t * RA) @ k0
        assert np.allclose(got, np.exp(-2 * C * t) * k0, atol=1e-10)
    # truncation backreaction of the raw semigroup is visible but modest
    assert rep.trajectory_deviation < 1e-6
    # measured cutoff backreaction of the raw truncated semigroup
    assert 1e-4 < rep.full_semigroup_deviation < 1.0
    assert rep.raw_span_residual > 1e-3


def test_heat_cycle_laplacian_spectrum(kernel):
    lat = LatticeConfig(1, 4, "cycle", 1.0, 2)
    rep = heat_comparison(lat, kernel=kernel, t_grid=(0.5,))
    C = rep.C_predicted
    ev = np.sort(np.linalg.eigvalsh(graph_laplacian(lat)))
    assert np.allclose(ev, [0, 2, 2, 4], atol=1e-12)
    got = np.sort(rep.restriction_eigenvalues)
    want = np.sort(np.concatenate([C * ev, C * ev]))
    assert np.max(np.abs(got - want)) < 1e-8


def test_heat_unordered_convention_halves_constant(kernel):
    lat = LatticeConfig(1, 2, "chain", 1.0, 2)
    rep = heat_comparison(lat, kernel=kernel, edges="unordered", t_grid=(0.5,))
    assert rep.C_predicted == pytest.approx(np.sinh(0.5), abs=1e-12)
    assert rep.restriction_deviation < 1e-8


# --------------------------------------------------------------------------
# polynomial decay
# --------------------------------------------------------------------------

def test_decay_probe_ring16(kernel):
    rep = polynomial_decay_probe((16,), kernel=kernel, cross_check_length=4,
                                 cross_check_n_max=2)
    assert abs(rep.slopes[0] + 0.5) <= 0.15
    assert rep.t0_check == pytest.approx(1.0)
    cc = rep.cross_check
    assert cc is not None
    assert cc.span_residual < 1e-9
    assert cc.restriction_deviation < 1e-8
    assert cc.trajectory_deviation < 1e-6


def test_decay_window_guard(kernel):
    with pytest.raises(ValueError):
        polynomial_decay_probe((2,), kernel=kernel, cross_check_length=None)


# --------------------------------------------------------------------------
# finite speed of propagation
# --------------------------------------------------------------------------

def test_lieb_robinson_probe():
    rep = lieb_robinson_probe(5, 2, lam=0.5, epsilon=1.0)
    assert rep.fit_m > 0
    assert rep.bound_ok
    assert rep.t0_max < 1e-12
    # at each fixed time the light cone decays with distance
    for row in rep.B:
        assert np.all(np.diff(row) < 0)
    # first-order Dyson growth at d = 0
    assert rep.short_time_ratio == pytest.approx(1.0, abs=5e-3)
    assert rep.c_phi > 0


def test_lieb_robinson_rejects_short_chain():
    with pytest.raises(ValueError):
        lieb_robinson_probe(3, 2)


def test_gap_iterative_solver_agrees_with_dense(kernel):
    lat = LatticeConfig(1, 1, "chain", 1.0, 4)
    built = build_model(ModelSpec("mean_field", lat))
    K = assemble_generator(built.directions, built.metric, kernel)
    dense = spectral_gap(K, built.metric)
    iterative = spectral_gap(K, built.metric, k=6, dense_limit=0)
    assert iterative.metadata["solver"] == "shift-invert"
    assert iterative.gap == pytest.approx(dense.gap, abs=1e-8)
    assert iterative.kernel_dim == dense.kernel_dim
