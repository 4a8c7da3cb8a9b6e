use landau_factor::analysis::suite::{build_model, isotropic_setup};
use landau_factor::analysis::{fit_power_law, index_distance, phase_extract};
use landau_factor::geometry::{shoelace, wrap_pi, PathFamily, SpherePath};
use landau_factor::hamiltonians::{build_h_xi, rotation_generator, HamiltonianBundle};
use landau_factor::hilbert::{operator_polynomial, BasisConfig, Factors, PhysicalParams};
use landau_factor::linalg::{dagger, frobenius, identity, unitarity_residual, zeros, OperatorMatrix, C64};
use landau_factor::propagators::{
    assemble_evolution, axial_factor, displacement_series, factorization_bundle, gauge_unitary, magnetic_translation,
    perturbative_u_eps, rotation_operator, time_ordered_propagator, u_eps_brute, AssemblyMode, IntegratorConfig,
};
use ndarray::Array1;
use std::f64::consts::{FRAC_PI_3, PI};

fn params(length: f64, stiffness: f64) -> PhysicalParams {
    PhysicalParams::harmonic(1.0, -1.0, 1.0, length, stiffness)
}

fn rel(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
    frobenius((a - b).view()) / frobenius(b.view()).max(1e-300)
}

#[test]
fn j3_is_the_ladder_number_difference() {
    let (p, basis) = isotropic_setup(&params(1.0, 25.0), 4, 1);
    let model = build_model(p, basis, &SpherePath::cone(FRAC_PI_3, 0.05), 1.0).unwrap();
    let ops = model.operator_set();
    let f = &model.factors;
    let want = f.planar_full(&(dagger(&f.a).dot(&f.a) - dagger(&f.b).dot(&f.b)));
    assert!(index_distance(&ops.j3, &want, &model.interior()) < 1e-12);
}

#[test]
fn axial_ground_state_width() {
    for k in [4.0, 25.0, 100.0] {
        let f = Factors::new(&params(1.0, k), &BasisConfig::new(2, 2, 8, 1)).unwrap();
        let xi2 = f.xi0.dot(&f.xi0);
        assert!((xi2[[0, 0]].re - 1.0 / (2.0 * k.sqrt())).abs() < 1e-8);
    }
}

#[test]
fn operator_polynomial_edge_coefficients() {
    let f = Factors::new(&params(1.0, 25.0), &BasisConfig::new(2, 2, 6, 1)).unwrap();
    assert_eq!(operator_polynomial(&f.xi0, &[0.0]), zeros(f.dc));
    assert_eq!(operator_polynomial(&f.xi0, &[1.0]), identity(f.dc));
    let quad = operator_polynomial(&f.xi0, &[1.0, 0.0, 2.0]);
    assert!(rel(&quad, &(identity(f.dc) + f.xi0.dot(&f.xi0).mapv(|z| 2.0 * z))) < 1e-14);
}

#[test]
fn rotating_hamiltonian_at_start_is_lab_minus_rotation_generator() {
    let model = build_model(params(1.0, 25.0), BasisConfig::new(3, 3, 4, 1), &SpherePath::cone(FRAC_PI_3, 0.05), 2.0).unwrap();
    let b = HamiltonianBundle::build(model.operator_set(), &model.params, &model.drive, 0.0).unwrap();
    let k0 = rotation_generator(&model.factors, &model.drive).dense_at(0.0);
    assert!(index_distance(&b.h1, &(&b.h_lab - &k0), &model.interior()) < 1e-10);
    assert!(b.max_hermiticity_residual() < 1e-12);
}

#[test]
fn quarter_period_two_forms_agree() {
    let path = SpherePath::cone(FRAC_PI_3, 0.05);
    let t = 0.25 * path.duration;
    let model = build_model(params(1.0, 25.0), BasisConfig::new(3, 3, 4, 1), &path, t).unwrap();
    let b = HamiltonianBundle::build(model.operator_set(), &model.params, &model.drive, t).unwrap();
    assert!(index_distance(&b.h1, &b.h1_kinematic, &model.interior()) < 1e-9);
}

#[test]
fn gauge_unitary_is_trivial_at_rest_and_unitary_in_motion() {
    let rest = build_model(params(1.0, 25.0), BasisConfig::new(3, 3, 4, 1), &SpherePath::cone(0.0, 0.05), 5.0).unwrap();
    assert!(rel(&gauge_unitary(&rest, 3.0), &identity(rest.dim())) < 1e-15);
    let moving = build_model(params(1.0, 25.0), BasisConfig::new(3, 3, 4, 1), &SpherePath::cone(FRAC_PI_3, 0.05), 5.0).unwrap();
    let g = gauge_unitary(&moving, 4.0);
    assert!(unitarity_residual(&g) / (g.nrows() as f64).sqrt() < 1e-11);
}

#[test]
fn gauge_rate_term_matches_central_difference() {
    // −ig⁻¹ġ against a central difference; halving h quarters the residual.
    // G holds products of positions, exact only well inside the cutoffs, so
    // compare on the interior of a basis with wide margins.
    let model = build_model(params(1.0, 25.0), BasisConfig::per_mode(5, 5, 6, [4, 4, 5]), &SpherePath::cone(FRAC_PI_3, 0.05), 10.0).unwrap();
    let t = 5.0;
    let b = HamiltonianBundle::build(model.operator_set(), &model.params, &model.drive, t).unwrap();
    let fd = |h: f64| {
        let gdot = (gauge_unitary(&model, t + h) - gauge_unitary(&model, t - h)).mapv(|z| z / (2.0 * h));
        let term = dagger(&b.g).dot(&gdot).mapv(|z| -C64::i() * z);
        index_distance(&term, &b.g_dot_term, &model.interior())
    };
    let (r1, r2) = (fd(0.4), fd(0.2));
    assert!(r1 < 1e-3, "{r1}");
    let ratio = r1 / r2;
    assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
}

#[test]
fn axial_coupling_at_start_and_at_rest() {
    let path = SpherePath::cone(FRAC_PI_3, 0.05);
    let model = build_model(params(1.0, 25.0), BasisConfig::new(3, 3, 4, 1), &path, 4.0).unwrap();
    let ops = model.operator_set();
    let b = HamiltonianBundle::build(ops, &model.params, &model.drive, 0.0).unwrap();
    let hxi = build_h_xi(ops, &model.params, &model.drive, 0.0, &identity(model.factors.dc)).unwrap();
    assert!(index_distance(&hxi, &b.hxi0, &model.interior()) < 1e-12);

    let rest = build_model(params(1.0, 25.0), BasisConfig::new(3, 3, 4, 1), &SpherePath::cone(0.0, 0.05), 4.0).unwrap();
    let u1d = axial_factor(&rest, 2.0);
    let hxi = build_h_xi(rest.operator_set(), &rest.params, &rest.drive, 2.0, &u1d).unwrap();
    assert!(frobenius(hxi.view()) < 1e-14);
}

#[test]
fn displacement_amplitude_bound_and_area_phase() {
    let path = SpherePath::cone(FRAC_PI_3, 0.02);
    let t_end = 0.5 / 0.02;
    let model = build_model(params(1.0, 25.0), BasisConfig::per_mode(4, 10, 0, [2, 4, 0]), &path, t_end).unwrap();
    let p = &model.params;
    let n = 4000;
    let times: Vec<f64> = (1..=n).map(|j| t_end * j as f64 / n as f64).collect();
    let series = displacement_series(p, &model.drive, &times);
    // |δ(t)| ≤ (L/4l_B)∫|α|, and |α| = ε sinθ on the cone.
    let scale = p.length / (4.0 * p.l_b());
    for (t, (delta, _)) in times.iter().zip(&series) {
        assert!(delta.norm() <= scale * 0.02 * FRAC_PI_3.sin() * t * (1.0 + 1e-9));
    }
    // γ is minus twice the signed area swept by δ from the origin.
    let mut xs = vec![0.0];
    let mut ys = vec![0.0];
    xs.extend(series.iter().map(|(d, _)| d.re));
    ys.extend(series.iter().map(|(d, _)| d.im));
    let area = shoelace(&xs, &ys);
    let gamma = series[n - 1].1;
    assert!(gamma.abs() > 1e-6);
    assert!((gamma + 2.0 * area).abs() < 1e-4 * gamma.abs(), "γ {gamma} vs area {area}");
}

#[test]
fn first_order_number_coefficients_coincide() {
    let path = SpherePath::cone(FRAC_PI_3, 0.05);
    let model = build_model(params(1.0, 25.0), BasisConfig::per_mode(3, 6, 0, [1, 2, 0]), &path, 20.0).unwrap();
    let (c, _) = perturbative_u_eps(&model.factors, &model.params, &model.drive, &model.dpath, 20.0);
    assert_eq!(c.c4, c.c5);
    assert_eq!(c.c4.re, 0.0);
    assert!(c.c4.im > 0.0);
}

#[test]
fn first_order_remainder_quarters_when_eps_halves() {
    let rem = |eps: f64| {
        let path = SpherePath::cone(FRAC_PI_3, eps);
        let t = 1.0 / eps;
        let model = build_model(params(1.0, 25.0), BasisConfig::per_mode(4, 10, 0, [2, 4, 0]), &path, t).unwrap();
        let (_, first) = perturbative_u_eps(&model.factors, &model.params, &model.drive, &model.dpath, t);
        index_distance(&u_eps_brute(&model, t), &first, &model.basis.planar_interior_indices())
    };
    let ratio = rem(0.01) / rem(0.005);
    assert!((ratio - 4.0).abs() < 0.3 * 4.0, "ratio {ratio}");
}

#[test]
fn assembly_at_time_zero_is_identity() {
    let path = SpherePath::cone(FRAC_PI_3, 0.05);
    let model = build_model(params(1.0, 25.0), BasisConfig::new(2, 2, 3, 1), &path, 1.0).unwrap();
    let b = factorization_bundle(&model, 0.0, &IntegratorConfig::magnus4(1e-10, 0.2)).unwrap();
    let id = identity(model.dim());
    for mode in [AssemblyMode::Full, AssemblyMode::StrongConfinement, AssemblyMode::Adiabatic] {
        assert!(rel(&assemble_evolution(&b, mode), &id) < 1e-12, "{mode:?}");
    }
}

#[test]
fn adiabatic_assembly_approaches_full_at_order_eps() {
    let cfg = IntegratorConfig::magnus4(1e-9, 0.2);
    let eps = [0.005, 0.01, 0.02, 0.05];
    let diffs: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let t = 0.2 / e;
            let model = build_model(params(1.0, 25.0), BasisConfig::per_mode(3, 3, 4, [1, 1, 2]), &SpherePath::cone(FRAC_PI_3, e), t).unwrap();
            let b = factorization_bundle(&model, t, &cfg).unwrap();
            index_distance(&assemble_evolution(&b, AssemblyMode::Full), &assemble_evolution(&b, AssemblyMode::Adiabatic), &model.interior())
        })
        .collect();
    let fit = fit_power_law(&eps, &diffs);
    assert!((fit.exponent - 1.0).abs() < 0.2, "exponent {} from {diffs:?}", fit.exponent);
}

#[test]
fn rotation_and_translation_phases_combine() {
    // Tiny L keeps M(T) close to the phase e^{iβ} on |1, 0, 0⟩.
    let base = PhysicalParams { length: 1e-6, ..params(1.0, 25.0) };
    let (_, basis) = isotropic_setup(&base, 3, 1);
    let path = SpherePath::new(PathFamily::PolarTriangle { theta: FRAC_PI_3, delta_phi: PI, eps: 0.05 }).unwrap();
    let t = path.duration;
    let model = build_model(base, basis.clone(), &path, t).unwrap();
    let cfg = IntegratorConfig::magnus4(1e-11, 0.5);
    let r = rotation_operator(&model, t, &cfg).unwrap();
    let (m, beta) = magnetic_translation(&model.factors, &model.params, &model.dpath, t);
    let m = model.factors.planar_full(&m);
    let mut psi = Array1::zeros(model.dim());
    psi[basis.index(1, 0, 0)] = C64::new(1.0, 0.0);
    let states = [psi];
    let both = phase_extract(&r.dot(&m), &states).remove(0);
    let pr = phase_extract(&r, &states).remove(0);
    let pm = phase_extract(&m, &states).remove(0);
    assert!(both.meaningful && pr.meaningful && pm.meaningful);
    assert!(wrap_pi(both.phase - pr.phase - pm.phase).abs() < 1e-9);
    assert!(wrap_pi(pr.phase + 0.5 * PI).abs() < 1e-4);
    assert!(wrap_pi(pm.phase - beta).abs() < 1e-9);
    let direct = time_ordered_propagator(&rotation_generator(&model.factors, &model.drive), &[0.0, t], &cfg).unwrap();
    assert!(rel(direct.last(), &r) < 1e-9);
}
