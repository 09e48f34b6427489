"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL
line.  Criterion 5's cutoff-stability clause is asserted exactly as stated
and is expected to stay red at beta = 1 (see the decisions ledger); the
measured values are printed either way.
"""

import json

import numpy as np
import pytest
import scipy.sparse as sp

from fockdirichlet import (AdmissibleKernel, DerivationDirection, KmsMetric,
                           LatticeConfig, ModelSpec, assemble_generator,
                           bogolubov_pair, build_model, build_mode_ops,
                           commutator, dirichlet_energy, gamma1,
                           gamma1_closed_form, gamma1_contour_form,
                           gibbs_state, heat_comparison, identity_operator,
                           lieb_robinson_probe, minkowski_field, modular_flow,
                           polynomial_decay_probe, rayleigh_scaling,
                           semigroup_apply, site_operator, spectral_gap,
                           vec, verify_algebra)
from fockdirichlet.bogolubov import BogolubovParams, number_polynomial, \
    quasi_invariance_rep
from fockdirichlet.dirichlet import left_mult, right_mult
from fockdirichlet.analysis import symmetrized_generator

from conftest import random_op

KERNEL = AdmissibleKernel()


def report(criterion, ok, detail=""):
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'}"
          f"{' -- ' + detail if detail else ''}")
    return ok


def catalog(small=True):
    """Catalog instances within |Lambda| <= 3, n_max <= 3."""
    return [
        ModelSpec("mean_field", LatticeConfig(1, 2, "chain", 1.0, 2)),
        ModelSpec("mean_field_n", LatticeConfig(1, 2, "chain", 1.0, 3),
                  params={"n": 2, "eps": 0.5}),
        ModelSpec("z_field", LatticeConfig(1, 3, "chain", 1.0, 1),
                  params={"kappa": [1.0, 0.5]}),
        ModelSpec("zjk_quadratic", LatticeConfig(1, 2, "chain", 1.0, 2),
                  params={"kappa": 1.0, "eps": 1.0}),
        ModelSpec("y_field", LatticeConfig(1, 2, "chain", 1.0, 2),
                  params={"kappa": [1.0], "xi": [0.5]}),
        ModelSpec("w_ops", LatticeConfig(1, 2, "chain", 1.0, 2),
                  params={"n": 1, "m": 1, "selfadjoint": True}),
        ModelSpec("z_power", LatticeConfig(1, 2, "chain", 1.0, 3),
                  params={"n": 2, "m": 1}),
        ModelSpec("y_power", LatticeConfig(1, 2, "chain", 1.0, 3),
                  params={"n": 1, "m": 2}),
        ModelSpec("g_model", LatticeConfig(1, 1, "chain", 1.0, 3),
                  params={"kappa": np.sqrt(2), "xi": 1.0}),
        ModelSpec("invariant_aij", LatticeConfig(1, 3, "chain", 1.0, 1),
                  params={"sites_i": [0], "sites_j": [1]}),
    ]


# --------------------------------------------------------------------------

def test_criterion_1_exact_algebra():
    worst = 0.0
    details = []
    # ladder relations, exact on the truncated space
    n_max = 5
    A, Adag, N = build_mode_ops(n_max)
    levels = np.arange(n_max + 1, dtype=float)
    h = lambda x: 0.3 - 1.2 * x + 0.7 * x ** 2
    hN, hNm, hNp = (sp.diags(h(levels + s)) for s in (0.0, -1.0, 1.0))
    worst = max(worst, abs(Adag @ hN - hNm @ Adag).max(),
                abs(hN @ Adag - Adag @ hNp).max())
    # model identity suites with clean-subspace residuals
    suite = [
        ModelSpec("mean_field", LatticeConfig(1, 2, "chain", 1.0, 3)),
        ModelSpec("w_ops", LatticeConfig(1, 3, "chain", 1.0, 2),
                  params={"n": 1, "m": 1, "selfadjoint": True}),
        ModelSpec("z_power", LatticeConfig(1, 1, "chain", 1.0, 4),
                  params={"n": 2, "m": 2}),
        ModelSpec("g_model", LatticeConfig(1, 1, "chain", 1.0, 10),
                  params={"kappa": np.sqrt(2), "xi": 1.0}),
        ModelSpec("mean_field_n", LatticeConfig(1, 3, "chain", 1.0, 6),
                  params={"n": 3, "eps": 0.5}),
        ModelSpec("invariant_aij", LatticeConfig(1, 3, "chain", 1.0, 2),
                  params={"sites_i": [0], "sites_j": [1]}),
    ]
    for spec in suite:
        rep = verify_algebra(spec)
        worst = max(worst, rep.worst())
        details.append(f"{spec.kind}:{rep.worst():.1e}")
    ok = worst <= 1e-10
    assert report("1 exact-algebra", ok, f"max residual {worst:.2e}"), details


def test_criterion_2_kms_selfadjointness():
    rng = np.random.default_rng(11)
    worst_sym, worst_unit, worst_psd = 0.0, 0.0, 0.0
    for spec in catalog():
        built = build_model(spec)
        K = assemble_generator(built.directions, built.metric, KERNEL,
                               path="eigen", check=False)
        metric = built.metric
        D = spec.lattice.dim
        unit = np.linalg.norm(K.matrix @ vec(identity_operator(spec.lattice)))
        worst_unit = max(worst_unit, unit)
        for _ in range(50):
            f = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
            g = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
            vf, vg = f.reshape(-1, order="F"), g.reshape(-1, order="F")
            lhs = metric.vec_inner(vf, K.matrix @ vg)
            rhs = metric.vec_inner(K.matrix @ vf, vg)
            scale = np.sqrt(abs(metric.vec_inner(vf, vf))
                            * abs(metric.vec_inner(vg, vg)))
            worst_sym = max(worst_sym, abs(lhs - rhs) / max(scale, 1e-300))
        S = symmetrized_generator(K, metric)
        S = S.toarray() if sp.issparse(S) else S
        ev = np.linalg.eigvalsh(0.5 * (S + S.conj().T))
        worst_psd = min(worst_psd, float(ev.min()))
    ok = worst_sym <= 1e-9 and worst_unit <= 1e-12 and worst_psd >= -1e-9
    assert report("2 kms-selfadjointness", ok,
                  f"sym {worst_sym:.2e}, L(I) {worst_unit:.2e}, "
                  f"min eig {worst_psd:.2e}")


def test_criterion_3_generator_equivalence():
    # (a) eigen assembly reproduces the explicit collective-model generator
    lat = LatticeConfig(1, 1, "chain", 1.0, 4)
    a = site_operator(lat, "a", 0)
    state = gibbs_state(site_operator(lat, "n", 0), 1.0)
    metric = KmsMetric(state)
    K = assemble_generator([DerivationDirection(a)], metric, KERNEL)
    eta0 = KERNEL.fourier(0.0).real
    X, Xd = a.matrix, a.dag().matrix
    cX = left_mult(X) - right_mult(X)
    cXd = left_mult(Xd) - right_mult(Xd)
    direct = eta0 * (-np.exp(-0.5) * right_mult(Xd) @ cX
                     + np.exp(0.5) * left_mult(Xd) @ cX
                     - np.exp(0.5) * right_mult(X) @ cXd
                     + np.exp(-0.5) * left_mult(X) @ cXd)
    dev_closed = abs(K.matrix - direct).max()
    # (b) eigen vs quadrature on the whole catalog
    dev_paths = 0.0
    for spec in catalog():
        built = build_model(spec)
        Ke = assemble_generator(built.directions, built.metric, KERNEL,
                                path="eigen", check=False)
        Kq = assemble_generator(built.directions, built.metric, KERNEL,
                                path="quadrature", check=False)
        dev_paths = max(dev_paths, abs(Ke.matrix - Kq.matrix).max())
    # (c) kernel transform closed form vs quadrature on the frequency grids
    dev_ker = 0.0
    beta = 1.0
    for kern in (KERNEL, AdmissibleKernel(0.0, 2, 0.0),
                 AdmissibleKernel(0.0, 1, 0.5)):
        for (n, m) in [(1, 1), (2, 1), (1, 2), (2, 2)]:
            for s in {0.0, (n - m) * beta, (m - n) * beta, (n + m) * beta,
                      -(n + m) * beta, 2 * beta, -2 * beta}:
                dev_ker = max(dev_ker, abs(kern.fourier(s) - kern.fourier_quad(s)))
    ok = dev_closed <= 1e-10 and dev_paths <= 1e-6 and dev_ker <= 1e-8
    assert report("3 generator-equivalence", ok,
                  f"closed {dev_closed:.2e}, paths {dev_paths:.2e}, "
                  f"kernel {dev_ker:.2e}")


def test_criterion_4_gamma1_suite():
    rng = np.random.default_rng(23)
    # eigenvector models: collective single mode, invariant hopping monomial
    lat = LatticeConfig(1, 1, "chain", 1.0, 4)
    a = site_operator(lat, "a", 0)
    state = gibbs_state(site_operator(lat, "n", 0), 1.0)
    metric = KmsMetric(state)
    d = DerivationDirection(a)
    K = assemble_generator([d], metric, KERNEL)

    lat2 = LatticeConfig(1, 2, "chain", 1.0, 2)
    built_w = build_model(ModelSpec("w_ops", lat2, params={"n": 1, "m": 1}))
    Kw = assemble_generator(built_w.directions, built_w.metric, KERNEL)

    dev_forms = 0.0
    for _ in range(4):
        f = random_op(rng, lat)
        g = gamma1(f, K)
        dev_forms = max(dev_forms,
                        (g - gamma1_closed_form(f, [d], metric, KERNEL)).norm(),
                        (g - gamma1_contour_form(f, [d], metric, KERNEL)).norm())
    for _ in range(2):
        f = random_op(rng, lat2)
        g = gamma1(f, Kw)
        dev_forms = max(dev_forms, (g - gamma1_closed_form(
            f, built_w.directions, built_w.metric, KERNEL)).norm())

    min_eig = 0.0
    smooth = AdmissibleKernel(0.0, 1, 0.5)
    built_y = build_model(ModelSpec("y_field", lat2,
                                    params={"kappa": [1.0], "xi": [0.5]}))
    Ky = assemble_generator(built_y.directions, built_y.metric, smooth)
    for _ in range(4):
        for lt, gen in ((lat, K), (lat2, Ky)):
            f = random_op(rng, lt)
            ev = np.linalg.eigvalsh(gamma1(f, gen).toarray())
            min_eig = min(min_eig, float(ev.min()))

    schwartz_min = 0.0
    for _ in range(2):
        f = random_op(rng, lat)
        f = f * (1.0 / f.norm())
        for t in (0.1, 1.0, 5.0):
            pff = semigroup_apply(K, f.dag() @ f, t)
            pf = semigroup_apply(K, f, t)
            ev = np.linalg.eigvalsh((pff - pf.dag() @ pf).toarray())
            schwartz_min = min(schwartz_min, float(ev.min()))

    link_dev = 0.0
    for _ in range(4):
        f = random_op(rng, lat)
        ft = modular_flow(f, state, -0.25j)
        lhs = metric.expectation(gamma1(ft, K)).real
        rhs = dirichlet_energy(f, K)
        link_dev = max(link_dev, abs(lhs - rhs) / max(1.0, abs(rhs)))

    ok = (dev_forms <= 1e-8 and min_eig >= -1e-8 and schwartz_min >= -1e-8
          and link_dev <= 1e-7)
    assert report("4 gamma1-suite", ok,
                  f"forms {dev_forms:.2e}, psd {min_eig:.2e}, "
                  f"schwartz {schwartz_min:.2e}, link {link_dev:.2e}")


def test_criterion_5_poincare_failure_scaling():
    z = rayleigh_scaling("z_power", "sum_adag", range(3, 9), n_max=1,
                         kernel=KERNEL, params={"n": 1, "m": 1, "half": True})
    aij = rayleigh_scaling("invariant_aij", "sum_n", range(3, 9), n_max=1,
                           kernel=KERNEL,
                           params={"sites_i": [0], "sites_j": [1]})
    gap4 = _meanfield_gap(4)
    ok = (-1.1 <= z.exponent <= -0.9 and z.e_over_boundary_spread < 0.10
          and -1.1 <= aij.exponent <= -0.9 and aij.e_over_boundary_spread < 0.10
          and gap4 > 0)
    assert report("5a poincare-failure scaling + positive gap", ok,
                  f"z exp {z.exponent:.3f} (spread {z.e_over_boundary_spread:.2%}), "
                  f"aij exp {aij.exponent:.3f} "
                  f"(spread {aij.e_over_boundary_spread:.2%}), gap {gap4:.4f}")


def _meanfield_gap(n_max, beta=1.0):
    lat = LatticeConfig(1, 1, "chain", 1.0, n_max)
    built = build_model(ModelSpec("mean_field", lat, beta=beta))
    K = assemble_generator(built.directions, built.metric, KERNEL)
    return spectral_gap(K, built.metric).gap


def test_criterion_5_gap_truncation_stability():
    # stated clause: gap stable within 5% from n_max = 4 to 6 (beta = 1).
    # The hard cutoff perturbs the gap by ~ n_max^2 exp(-beta n_max), which
    # at beta = 1 is still 12% between these cutoffs; the criterion is
    # asserted as written and the measured drift is printed.  See the
    # decisions ledger for the blocking analysis (at beta = 2 the same
    # quantity is ~0.5% and passes).
    g4, g6 = _meanfield_gap(4), _meanfield_gap(6)
    drift = abs(g4 - g6) / g6
    g4b, g6b = _meanfield_gap(4, beta=2.0), _meanfield_gap(6, beta=2.0)
    drift_b2 = abs(g4b - g6b) / g6b
    ok = drift <= 0.05
    assert report("5b mean-field gap stability (beta=1, n_max 4->6)", ok,
                  f"gaps {g4:.5f} -> {g6:.5f}, drift {drift:.1%} "
                  f"(beta=2 drift {drift_b2:.2%})"), \
        "cutoff drift exceeds the stated 5%; see decisions ledger"


def test_criterion_6_polynomial_decay():
    ring4 = LatticeConfig(1, 4, "cycle", 1.0, 2)
    heat = heat_comparison(ring4, kernel=KERNEL, t_grid=(0.3, 1.0, 2.0))
    C = heat.C_predicted
    decay = polynomial_decay_probe((16,), kernel=KERNEL, cross_check_length=None)
    ok = (heat.span_residual <= 1e-9
          and heat.restriction_deviation <= 1e-8
          and abs(C - 1.042190) <= 1e-6
          and heat.trajectory_deviation <= 1e-6
          and abs(decay.slopes[0] + 0.5) <= 0.15)
    assert report("6 polynomial-decay", ok,
                  f"span {heat.span_residual:.2e}, restriction "
                  f"{heat.restriction_deviation:.2e}, C {C:.6f}, "
                  f"trajectories {heat.trajectory_deviation:.2e} "
                  f"(raw backreaction {heat.full_semigroup_deviation:.2e}), "
                  f"slope {decay.slopes[0]:.3f}")


def test_criterion_7_finite_speed():
    rep = lieb_robinson_probe(5, 2, lam=0.5, epsilon=1.0)
    ok = rep.fit_m > 0 and rep.bound_ok and rep.t0_max <= 1e-12
    assert report("7 finite-speed", ok,
                  f"m {rep.fit_m:.3f}, C {rep.fit_C:.3f}, D {rep.fit_D:.3f}, "
                  f"bound_ok {rep.bound_ok}, B(0,d>=1) {rep.t0_max:.1e}, "
                  f"c_phi {rep.c_phi:.3f}")


def test_criterion_8_bogolubov():
    from fockdirichlet.fock import clean_projector, compressed
    lat = LatticeConfig(1, 6, "chain", 1.0, 5)
    ccr = 0.0
    lat1 = LatticeConfig(1, 1, "chain", 1.0, 6)
    _, _, rep = bogolubov_pair(BogolubovParams.boost(0.3), lat1)
    ccr = max(ccr, rep.clean_norm)
    # Minkowski relation on two modes
    lat2 = LatticeConfig(1, 2, "chain", 1.0, 5)
    I2 = identity_operator(lat2)
    S = minkowski_field(2.0, [1.0, 1.0], lat2)
    mink = np.linalg.norm(compressed(
        commutator(S, S.dag()) - I2 * 2.0, clean_projector(lat2, 2)), 2)
    # boost group law
    comp = BogolubovParams.boost(0.7).compose(BogolubovParams.boost(0.4))
    want = BogolubovParams.boost(1.1)
    law = max(abs(comp.tau - want.tau), abs(comp.theta - want.theta))
    # V_s unitarity residual trend
    residuals = [quasi_invariance_rep(number_polynomial(),
                                      BogolubovParams.boost,
                                      number_polynomial(), 0.1, nm).unitarity_residual
                 for nm in (4, 6, 8)]
    monotone = residuals[0] >= residuals[1] - 1e-12 and \
        residuals[1] >= residuals[2] - 1e-12
    ok = ccr <= 1e-10 and mink <= 1e-10 and law <= 1e-13 and monotone
    assert report("8 bogolubov", ok,
                  f"ccr {ccr:.2e}, minkowski {mink:.2e}, law {law:.1e}, "
                  f"residuals {['%.2e' % r for r in residuals]}")


def test_criterion_9_determinism(tmp_path):
    from fockdirichlet.cli import main
    cfgs = []
    for name, experiment, params in [
            ("verify.json", "verify", None),
            ("scal.json", "scaling",
             {"sizes": [3, 4], "kind": "z_power", "test": "sum_adag",
              "model_params": {"n": 1, "m": 1, "half": True}})]:
        cfg = {"schema_version": 1, "experiment": experiment, "seed": 5,
               "kernel": {"kappa": 0.0, "n": 1, "sigma": 0.0},
               "output": {"json": name.replace(".json", "_report.json"),
                          "csv": name.replace(".json", ".csv")}}
        if experiment == "verify":
            cfg["model"] = {"kind": "mean_field",
                            "lattice": {"dims": 1, "extent": 1,
                                        "geometry": "chain", "n_max": 3}}
        if params:
            cfg["params"] = params
        p = tmp_path / name
        p.write_text(json.dumps(cfg))
        cfgs.append(name)
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps(cfgs))
    for d in ("run1", "run2"):
        assert main(["--manifest", str(manifest),
                     "--out", str(tmp_path / d)]) == 0
    identical = True
    for name in ("verify_report.json", "scal_report.json", "scal.csv"):
        b1 = (tmp_path / "run1" / name).read_bytes()
        b2 = (tmp_path / "run2" / name).read_bytes()
        identical = identical and (b1 == b2)
    assert report("9 determinism", identical,
                  "byte-identical reports (timestamps isolated in sidecars)")
