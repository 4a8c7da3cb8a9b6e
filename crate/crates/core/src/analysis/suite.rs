//! The verification checks: identity suites, holonomy phases and scaling scans,
//! each turned into a pass/fail outcome with the numbers behind it.

use super::{block_distance, index_distance, phase_extract, IdentityReport, ScalingResult, ScanControl};
use crate::geometry::{holonomy_angle, rest_start_e1, shoelace, solid_angle, transport_frame, uniform_grid, wrap_pi, GeometryError, PathFamily, SpherePath};
use crate::hamiltonians::{build_lab_hamiltonian, rotation_generator, HamiltonianBundle};
use crate::hilbert::{operator_polynomial, BasisConfig, HilbertError, PhysicalParams};
use crate::linalg::{commutator, dagger, frobenius, identity, unit_columns, OperatorMatrix, C64, IM};
use crate::propagators::{
    displacement_series, displacement_operator, factorized_action, frame_grid, gauge_split_check, lab_action,
    landau_evolution, magnetic_translation, perturbative_u_eps, solve_u_xi, time_ordered_propagator,
    translation_exponential, u_eps_brute, IntegratorConfig, Model, PropagatorError, U2dSource,
};
use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Hamiltonian(#[from] crate::hamiltonians::HamiltonianError),
    #[error(transparent)]
    Analysis(#[from] super::AnalysisError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, SuiteError>;

/// The scenario pieces every check starts from.
#[derive(Clone, Debug)]
pub struct SuiteContext {
    pub params: PhysicalParams,
    pub basis: BasisConfig,
    pub path: SpherePath,
    pub integrator: IntegratorConfig,
    pub end_time_fraction: f64,
    pub sample_count: usize,
}

impl SuiteContext {
    /// T₁ = 1/ε.
    pub fn t1(&self) -> f64 {
        1.0 / self.path.eps()
    }

    pub fn end_time(&self) -> f64 {
        (self.end_time_fraction * self.t1()).min(self.path.duration)
    }

    /// Sample times (k + ½)T/n, k = 0..n.
    pub fn sample_times(&self) -> Vec<f64> {
        let t = self.end_time();
        let n = self.sample_count;
        (0..n).map(|k| t * (k as f64 + 0.5) / n as f64).collect()
    }

    fn with_params(&self, params: PhysicalParams) -> Self {
        SuiteContext { params, ..self.clone() }
    }
}

/// Verdict of one check with its supporting numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub identities: Vec<IdentityReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scalings: Vec<ScalingResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases: Vec<PhaseRow>,
}

impl CheckOutcome {
    pub fn from_reports(id: &str, title: &str, reports: Vec<IdentityReport>) -> Self {
        let passed = reports.iter().all(|r| r.passed);
        let summary = reports
            .iter()
            .map(|r| format!("{} {:.2e} (tol {:.0e})", r.name, r.max_residual(), r.tolerance))
            .collect::<Vec<_>>()
            .join(", ");
        CheckOutcome {
            id: id.into(),
            title: title.into(),
            passed,
            summary,
            identities: reports,
            scalings: vec![],
            phases: vec![],
        }
    }

    /// Outcome for a check that could not be evaluated.
    pub fn failed(id: &str, title: &str, err: &dyn std::fmt::Display) -> Self {
        CheckOutcome {
            id: id.into(),
            title: title.into(),
            passed: false,
            summary: format!("error: {err}"),
            identities: vec![],
            scalings: vec![],
            phases: vec![],
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.title, self.summary)
    }
}

fn mode_basis(n: [usize; 3], buffer: [usize; 3]) -> BasisConfig {
    BasisConfig::per_mode(n[0], n[1], n[2], buffer)
}

/// Cutoffs and per-mode margins in config form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cutoffs {
    pub n: [usize; 3],
    pub buffer: [usize; 3],
}

impl Cutoffs {
    pub fn basis(&self) -> BasisConfig {
        mode_basis(self.n, self.buffer)
    }
}

fn cut(n: [usize; 3], buffer: [usize; 3]) -> Cutoffs {
    Cutoffs { n, buffer }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameCheck {
    pub thetas: Vec<f64>,
    pub eps: f64,
    pub angle_tol: f64,
    pub drift_tol: f64,
}

impl Default for FrameCheck {
    fn default() -> Self {
        FrameCheck { thetas: vec![PI / 6.0, PI / 3.0, PI / 2.0], eps: 0.01, angle_tol: 1e-6, drift_tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolonomyCheck {
    pub theta: f64,
    pub delta_phi: f64,
    pub eps: f64,
    /// Largest |m| in the phase table.
    pub max_m: usize,
    pub tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for HolonomyCheck {
    fn default() -> Self {
        HolonomyCheck {
            theta: PI / 3.0,
            delta_phi: PI,
            eps: 0.05,
            max_m: 2,
            tol: 1e-4,
            integrator: IntegratorConfig::magnus4(1e-11, 0.5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamiltonianCheck {
    pub tol: f64,
}

impl Default for HamiltonianCheck {
    fn default() -> Self {
        HamiltonianCheck { tol: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationCheck {
    /// Cutoff of every mode in the isotropic basis.
    pub cutoff: usize,
    pub conjugation_tol: f64,
    pub schrodinger_tol: f64,
    /// Central-difference step for Ṙ.
    pub fd_step: f64,
    pub integrator: IntegratorConfig,
}

impl Default for RotationCheck {
    fn default() -> Self {
        RotationCheck {
            cutoff: 4,
            conjugation_tol: 1e-7,
            schrodinger_tol: 1e-6,
            fd_step: 0.1,
            integrator: IntegratorConfig::magnus4(1e-11, 0.5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaugeCheck {
    pub basis: Cutoffs,
    pub tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for GaugeCheck {
    fn default() -> Self {
        GaugeCheck { basis: cut([4, 4, 6], [2, 2, 3]), tol: 1e-6, integrator: IntegratorConfig::magnus4(1e-10, 0.2) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorizationCheck {
    pub basis: Cutoffs,
    pub tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for FactorizationCheck {
    fn default() -> Self {
        FactorizationCheck {
            basis: cut([7, 7, 10], [6, 6, 9]),
            tol: 1e-4,
            integrator: IntegratorConfig::magnus4(1e-8, 0.2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfinementCheck {
    pub basis: Cutoffs,
    pub eps: f64,
    pub stiffness: Vec<f64>,
    pub expected: f64,
    pub band: f64,
    pub integrator: IntegratorConfig,
}

impl Default for ConfinementCheck {
    fn default() -> Self {
        ConfinementCheck {
            basis: cut([2, 2, 8], [1, 1, 4]),
            eps: 0.05,
            stiffness: vec![25.0, 50.0, 100.0, 250.0],
            expected: -0.5,
            band: 0.15,
            integrator: IntegratorConfig::magnus4(1e-8, 0.2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceCheck {
    pub basis: Cutoffs,
    pub eps: f64,
    /// Largest allowed relative decrease of ‖U_ξ − I‖ when ε is halved.
    pub max_decrease: f64,
    pub integrator: IntegratorConfig,
}

impl Default for ResonanceCheck {
    fn default() -> Self {
        ResonanceCheck {
            basis: cut([2, 2, 8], [1, 1, 4]),
            eps: 0.01,
            max_decrease: 0.2,
            integrator: IntegratorConfig::magnus4(1e-8, 0.2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdiabaticCheck {
    pub basis: Cutoffs,
    pub eps: Vec<f64>,
    pub first_order: (f64, f64),
    pub second_order: (f64, f64),
    /// Minimum number of samples of ‖Ũ_ε(t) − I‖ over (0, T₁].
    pub min_samples: usize,
}

impl Default for AdiabaticCheck {
    fn default() -> Self {
        AdiabaticCheck {
            basis: cut([4, 10, 0], [2, 4, 0]),
            eps: vec![0.005, 0.01, 0.02, 0.05],
            first_order: (1.0, 0.2),
            second_order: (2.0, 0.3),
            min_samples: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationCheck {
    pub basis: Cutoffs,
    pub tol: f64,
    pub area_tol: f64,
    /// Polygon vertices for the coarse shoelace estimate; the fine one doubles it.
    pub shoelace_points: usize,
}

impl Default for TranslationCheck {
    fn default() -> Self {
        TranslationCheck { basis: cut([2, 30, 0], [1, 24, 0]), tol: 1e-8, area_tol: 1e-8, shoelace_points: 1 << 16 }
    }
}

/// Per-check settings; every field has a pinned default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSettings {
    pub frame: FrameCheck,
    pub holonomy: HolonomyCheck,
    pub hamiltonians: HamiltonianCheck,
    pub rotation: RotationCheck,
    pub gauge: GaugeCheck,
    pub factorization: FactorizationCheck,
    pub confinement: ConfinementCheck,
    pub resonance: ResonanceCheck,
    pub adiabatic: AdiabaticCheck,
    pub translation: TranslationCheck,
}

/// Closed-cone frame holonomy against 2π(1 − cosθ), plus orthonormality drift.
pub fn check_frame(s: &FrameCheck) -> Result<CheckOutcome> {
    let mut angle = vec![];
    let mut drift = vec![];
    for &theta in &s.thetas {
        let path = SpherePath::cone(theta, s.eps);
        let frame = transport_frame(&path, &frame_grid(&path, path.duration), 1.0, None)?;
        angle.push(wrap_pi(holonomy_angle(&frame) - 2.0 * PI * (1.0 - theta.cos())).abs());
        drift.push(frame.drift);
    }
    Ok(CheckOutcome::from_reports(
        "frame",
        "frame geometry",
        vec![
            IdentityReport::new("holonomy_angle", s.thetas.clone(), angle, None, s.angle_tol),
            IdentityReport::new("orthonormality_drift", s.thetas.clone(), drift, None, s.drift_tol),
        ],
    ))
}

/// One row of a holonomy phase table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub m: i64,
    pub state: [usize; 3],
    pub phase: f64,
    pub expected: f64,
    pub error: f64,
    pub eigen_residual: f64,
    pub meaningful: bool,
}

/// Basis whose complete shells carry an exact rotation: axial frequency ω/2
/// puts all three modes at the same quantum, and L = 0 centres the axial mode.
pub fn isotropic_setup(params: &PhysicalParams, cutoff: usize, buffer: usize) -> (PhysicalParams, BasisConfig) {
    let p = PhysicalParams { length: 0.0, ..params.clone() };
    let mut basis = BasisConfig::per_mode(cutoff, cutoff, cutoff, [buffer; 3]);
    basis.axial_ref_freq = Some(0.5 * p.omega());
    (p, basis)
}

/// Phases of R(T) on the J₃ eigenstates |n_a, n_b, 0⟩ with |m| ≤ max_m for a
/// closed path starting at the e₃(0) axis, against −mΩ.
pub fn holonomy_phases(
    params: &PhysicalParams,
    path: &SpherePath,
    max_m: usize,
    cfg: &IntegratorConfig,
) -> Result<(f64, Vec<PhaseRow>)> {
    let omega = solid_angle(path)?;
    // One spare quantum keeps the planar products in J exact up to shell max_m.
    let (p, basis) = isotropic_setup(params, max_m + 1, 1);
    let model = build_model(p, basis.clone(), path, path.duration)?;
    let gen = rotation_generator(&model.factors, &model.drive);
    let r = time_ordered_propagator(&gen, &[0.0, path.duration], cfg)?.last().clone();
    let mut states = vec![];
    let mut labels = vec![];
    for m in -(max_m as i64)..=(max_m as i64) {
        let (na, nb) = if m >= 0 { (m as usize, 0) } else { (0, (-m) as usize) };
        let mut v = Array1::zeros(model.dim());
        v[basis.index(na, nb, 0)] = C64::new(1.0, 0.0);
        states.push(v);
        labels.push((m, [na, nb, 0]));
    }
    let rows = phase_extract(&r, &states)
        .into_iter()
        .zip(labels)
        .map(|(rd, (m, state))| {
            let expected = wrap_pi(-(m as f64) * omega);
            PhaseRow {
                m,
                state,
                phase: rd.phase,
                expected,
                error: wrap_pi(rd.phase - expected).abs(),
                eigen_residual: rd.residual,
                meaningful: rd.meaningful,
            }
        })
        .collect();
    Ok((omega, rows))
}

fn phase_outcome(id: &str, title: &str, omega: f64, rows: Vec<PhaseRow>, tol: f64) -> CheckOutcome {
    let ms: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let errs: Vec<f64> = rows.iter().map(|r| if r.meaningful { r.error } else { f64::INFINITY }).collect();
    let mut out = CheckOutcome::from_reports(id, title, vec![IdentityReport::new("phase_vs_minus_m_omega", ms, errs, None, tol)]);
    out.summary = format!("Ω = {omega:.6}, {}", out.summary);
    out.phases = rows;
    out
}

/// R(T) phases for the polar-triangle loop.
pub fn check_holonomy(ctx: &SuiteContext, s: &HolonomyCheck) -> Result<CheckOutcome> {
    let path = SpherePath::new(PathFamily::PolarTriangle { theta: s.theta, delta_phi: s.delta_phi, eps: s.eps })?;
    let (omega, rows) = holonomy_phases(&ctx.params, &path, s.max_m, &s.integrator)?;
    Ok(phase_outcome("holonomy", "holonomy phases", omega, rows, s.tol))
}

/// R(T) phases for the scenario path, which must be closed.
pub fn scenario_holonomy(ctx: &SuiteContext, s: &HolonomyCheck) -> Result<CheckOutcome> {
    let (omega, rows) = holonomy_phases(&ctx.params, &ctx.path, s.max_m, &s.integrator)?;
    Ok(phase_outcome("scenario_holonomy", "scenario loop phases", omega, rows, s.tol))
}

/// Model on [0, t_end], supplying e₁(0) when the path starts at rest.
pub fn build_model(params: PhysicalParams, basis: BasisConfig, path: &SpherePath, t_end: f64) -> Result<Model> {
    Ok(Model::new(params, basis, path, t_end, rest_start_e1(path)?)?)
}

fn full_indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// H₁ two-form and H₀ three-form identities at the sample times.
pub fn check_hamiltonians(ctx: &SuiteContext, s: &HamiltonianCheck) -> Result<CheckOutcome> {
    let model = build_model(ctx.params.clone(), ctx.basis.clone(), &ctx.path, ctx.end_time())?;
    let ops = model.operator_set();
    let idx = model.interior();
    let all = full_indices(model.dim());
    let times = ctx.sample_times();
    let pairs: Vec<Vec<(f64, f64)>> = times
        .par_iter()
        .map(|&t| {
            let b = HamiltonianBundle::build(ops, &model.params, &model.drive, t)?;
            let dec = &b.h1d + &b.h2d + &b.hxi0;
            let d = |x: &OperatorMatrix, y: &OperatorMatrix| (index_distance(x, y, &idx), index_distance(x, y, &all));
            Ok(vec![
                d(&b.h1, &b.h1_kinematic),
                d(&b.h0_conjugated, &b.h0_closed),
                d(&b.h0_conjugated, &dec),
                d(&b.h0_closed, &dec),
            ])
        })
        .collect::<Result<_>>()?;
    let names = ["h1_angular_vs_kinematic", "h0_conjugated_vs_closed", "h0_conjugated_vs_decomposed", "h0_closed_vs_decomposed"];
    let reports = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let interior: Vec<f64> = pairs.iter().map(|p| p[k].0).collect();
            let full = pairs.iter().map(|p| p[k].1).fold(0.0, f64::max);
            IdentityReport::new(name, times.clone(), interior, Some(full), s.tol)
        })
        .collect();
    Ok(CheckOutcome::from_reports("hamiltonians", "H0 three-form and H1 two-form", reports))
}

/// R⁻¹(e_i·x)R = x_i, R⁻¹(e_i·p)R = p_i, R⁻¹V(x·n)R = V(x₃) and the
/// rotating-frame Schrödinger relation H₁ = R⁻¹H R − iR⁻¹Ṙ, in the isotropic
/// basis at the scenario end time.
pub fn check_rotation(ctx: &SuiteContext, s: &RotationCheck) -> Result<CheckOutcome> {
    let (p, basis) = isotropic_setup(&ctx.params, s.cutoff, s.cutoff - 1);
    let t = ctx.end_time();
    let h = s.fd_step.min(0.25 * t);
    let model = build_model(p, basis, &ctx.path, (t + h).min(ctx.path.duration))?;
    let t = t.min(model.end_time() - h);
    let ops = model.operator_set();
    let idx = model.interior();
    let gen = rotation_generator(&model.factors, &model.drive);
    let res = time_ordered_propagator(&gen, &[0.0, t - h, t, t + h], &s.integrator)?;
    let (rm, r, rp) = (&res.u[1], &res.u[2], &res.u[3]);
    let rd = dagger(r);
    let conj = |x: &OperatorMatrix| rd.dot(x).dot(r);
    let frame = &model.drive.frame;
    let e = frame.at(t);
    let comps: Vec<_> = e.iter().map(|v| frame.components(v)).collect();
    let dot = |c: &crate::geometry::Vec3, v: [&OperatorMatrix; 3]| {
        v[0].mapv(|z| z * c.x) + v[1].mapv(|z| z * c.y) + v[2].mapv(|z| z * c.z)
    };
    let mut vec_res = vec![];
    for (i, c) in comps.iter().enumerate() {
        vec_res.push(index_distance(&conj(&dot(c, ops.x())), ops.x()[i], &idx));
        vec_res.push(index_distance(&conj(&dot(c, ops.p())), ops.p()[i], &idx));
    }
    let coeffs = model.params.potential_coeffs();
    let n_comp = comps[2];
    let v_lab = operator_polynomial(&dot(&n_comp, ops.x()), &coeffs);
    let v_res = index_distance(&conj(&v_lab), &operator_polynomial(&ops.x3, &coeffs), &idx);
    let h_lab = build_lab_hamiltonian(ops, &model.params, &model.drive, t)?;
    let rdot = (rp - rm).mapv(|z| z / (2.0 * h));
    let h1_fd = conj(&h_lab) - rd.dot(&rdot).mapv(|z| IM * z);
    let b = HamiltonianBundle::build(ops, &model.params, &model.drive, t)?;
    let schr = index_distance(&b.h1, &h1_fd, &idx);
    Ok(CheckOutcome::from_reports(
        "rotation",
        "rotation conjugation",
        vec![
            IdentityReport::new("vector_conjugation", vec![t], vec![vec_res.iter().copied().fold(0.0, f64::max)], None, s.conjugation_tol),
            IdentityReport::new("potential_conjugation", vec![t], vec![v_res], None, s.conjugation_tol),
            IdentityReport::new("rotating_frame_schrodinger", vec![t], vec![schr], None, s.schrodinger_tol),
        ],
    ))
}

fn reduced_model(ctx: &SuiteContext, basis: BasisConfig, t: f64) -> Result<Model> {
    build_model(ctx.params.clone(), basis, &ctx.path, t)
}

/// U₁ = g U₀ g⁻¹(0) and U₀ = U₁d𝔘 on the interior columns at the end time.
pub fn check_gauge(ctx: &SuiteContext, s: &GaugeCheck) -> Result<CheckOutcome> {
    let t = ctx.end_time();
    let model = reduced_model(ctx, s.basis.basis(), t)?;
    let idx = model.interior();
    let r = gauge_split_check(&model, t, &s.integrator, &idx)?;
    Ok(CheckOutcome::from_reports(
        "gauge",
        "gauge relation and splitting",
        vec![
            IdentityReport::new("gauge_relation", vec![t], vec![block_distance(&r.u1, &r.gauge_side, &idx)], None, s.tol),
            IdentityReport::new("axial_splitting", vec![t], vec![block_distance(&r.u0, &r.split_side, &idx)], None, s.tol),
        ],
    ))
}

/// Assembled factorization against the lab propagator on the interior columns.
pub fn check_factorization(ctx: &SuiteContext, s: &FactorizationCheck) -> Result<CheckOutcome> {
    let t = ctx.end_time();
    let model = reduced_model(ctx, s.basis.basis(), t)?;
    let idx = model.interior();
    let v = unit_columns(model.dim(), &idx);
    let (lab, fac) = rayon::join(|| lab_action(&model, t, &s.integrator, &v), || factorized_action(&model, t, &s.integrator, &v));
    let res = block_distance(&lab?, &fac?, &idx);
    Ok(CheckOutcome::from_reports(
        "factorization",
        "full factorization vs lab oracle",
        vec![IdentityReport::new("factorized_vs_lab", vec![t], vec![res], None, s.tol)],
    ))
}

/// ‖U_ξ(T₁) − I‖ on the interior.
fn u_xi_response(ctx: &SuiteContext, basis: BasisConfig, eps: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let path = ctx.path.with_eps(eps);
    let t = 1.0 / eps;
    let model = build_model(ctx.params.clone(), basis, &path, t)?;
    let u = solve_u_xi(&model, t, cfg, U2dSource::Brute, None)?;
    Ok(index_distance(u.last(), &identity(model.dim()), &model.interior()))
}

/// ‖U_ξ − I‖ at T₁ against the axial stiffness k.
pub fn check_confinement(ctx: &SuiteContext, s: &ConfinementCheck) -> Result<CheckOutcome> {
    super::validate_scan_values(&s.stiffness)?;
    let scan = super::scaling_scan("u_xi_vs_stiffness", ScanControl::StiffnessK, &s.stiffness, s.expected, s.band, |k| {
        let p = PhysicalParams { v2: 0.5 * k, ..ctx.params.clone() };
        u_xi_response(&ctx.with_params(p), s.basis.basis(), s.eps, &s.integrator)
    })?;
    Ok(scaling_outcome("confinement", "strong-confinement scaling", vec![scan]))
}

fn scaling_outcome(id: &str, title: &str, scans: Vec<ScalingResult>) -> CheckOutcome {
    let passed = scans.iter().all(|s| s.passed);
    let summary = scans
        .iter()
        .map(|s| format!("{} exponent {:.3} (expected {} ± {})", s.name, s.fit.exponent, s.expected, s.band))
        .collect::<Vec<_>>()
        .join(", ");
    CheckOutcome { id: id.into(), title: title.into(), passed, summary, identities: vec![], scalings: scans, phases: vec![] }
}

/// At Δ = ω, halving ε must not shrink ‖U_ξ(T₁) − I‖ by more than the allowed fraction.
pub fn check_resonance(ctx: &SuiteContext, s: &ResonanceCheck) -> Result<CheckOutcome> {
    let p = &ctx.params;
    let resonant = PhysicalParams { v2: 0.5 * p.m * p.omega().powi(2), v3: 0.0, v4: 0.0, ..p.clone() };
    let rctx = ctx.with_params(resonant);
    let (a, b) = rayon::join(
        || u_xi_response(&rctx, s.basis.basis(), s.eps, &s.integrator),
        || u_xi_response(&rctx, s.basis.basis(), 0.5 * s.eps, &s.integrator),
    );
    let (a, b) = (a?, b?);
    let decrease = 1.0 - b / a;
    let eps = [s.eps, 0.5 * s.eps];
    let report = IdentityReport::new("relative_decrease", vec![1.0 / s.eps], vec![decrease], None, s.max_decrease);
    let mut out = CheckOutcome::from_reports("resonance", "resonance counterexample", vec![report]);
    out.summary = format!(
        "‖U_ξ−I‖ = {a:.4e} at ε = {}, {b:.4e} at ε = {}; relative decrease {decrease:.4} (max {})",
        eps[0], eps[1], s.max_decrease
    );
    Ok(out)
}

/// Sup over (0, T₁] of ‖Ũ_ε(t) − I‖, and ‖U_ε − U_ε⁽¹⁾‖ at T₁.
fn adiabatic_responses(ctx: &SuiteContext, s: &AdiabaticCheck, eps: f64) -> Result<(f64, f64)> {
    let path = ctx.path.with_eps(eps);
    let t1 = 1.0 / eps;
    let model = build_model(ctx.params.clone(), s.basis.basis(), &path, t1)?;
    let f = &model.factors;
    let idx = model.basis.planar_interior_indices();
    // Resolve the cyclotron oscillation of δ(t) with at least eight samples per period.
    let per_period = (8.0 * t1 * model.params.omega() / (2.0 * PI)).ceil() as usize;
    let n = s.min_samples.max(per_period);
    let times: Vec<f64> = (1..=n).map(|j| t1 * j as f64 / n as f64).collect();
    let id = identity(f.dp);
    let sup = displacement_series(&model.params, &model.drive, &times)
        .into_iter()
        .map(|(delta, gamma)| index_distance(&id, &displacement_operator(f, delta, gamma), &idx))
        .fold(0.0, f64::max);
    let (_, first) = perturbative_u_eps(f, &model.params, &model.drive, &model.dpath, t1);
    let rem = index_distance(&u_eps_brute(&model, t1), &first, &idx);
    Ok((sup, rem))
}

/// ε-scaling of Ũ_ε and of the first-order remainder of U_ε.
pub fn check_adiabatic(ctx: &SuiteContext, s: &AdiabaticCheck) -> Result<CheckOutcome> {
    super::validate_scan_values(&s.eps)?;
    let r: Vec<(f64, f64)> = s.eps.par_iter().map(|&e| adiabatic_responses(ctx, s, e)).collect::<Result<_>>()?;
    let first = ScalingResult::from_responses(
        "utilde_eps_vs_eps",
        ScanControl::RotationEps,
        s.eps.clone(),
        r.iter().map(|x| x.0).collect(),
        s.first_order.0,
        s.first_order.1,
    );
    let second = ScalingResult::from_responses(
        "u_eps_remainder_vs_eps",
        ScanControl::RotationEps,
        s.eps.clone(),
        r.iter().map(|x| x.1).collect(),
        s.second_order.0,
        s.second_order.1,
    );
    Ok(scaling_outcome("adiabatic", "adiabatic orders", vec![first, second]))
}

/// Richardson-extrapolated shoelace area of the d-path sampled at n and 2n vertices.
pub fn shoelace_area(dpath: &crate::geometry::DisplacementPath, t: f64, n: usize) -> f64 {
    let area = |k: usize| {
        let pts: Vec<(f64, f64, f64)> = uniform_grid(t, k).into_iter().map(|s| dpath.at(s)).collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        shoelace(&xs, &ys)
    };
    (4.0 * area(2 * n) - area(n)) / 3.0
}

/// Magnetic translation algebra on the planar factor over the whole scenario path.
pub fn check_translation(ctx: &SuiteContext, s: &TranslationCheck) -> Result<CheckOutcome> {
    let t = ctx.path.duration;
    let model = reduced_model(ctx, s.basis.basis(), t)?;
    let f = &model.factors;
    let p = &model.params;
    let idx = model.basis.planar_interior_indices();
    let (m, beta) = magnetic_translation(f, p, &model.dpath, t);
    let (d1, d2, _) = model.dpath.at(t);
    let md = dagger(&m);
    let id = identity(f.dp);
    let shift = |x: &OperatorMatrix, d: f64| index_distance(&md.dot(x).dot(&m), &(x + &id.mapv(|z| z * d)), &idx);
    let shifts = [shift(&f.x1, d1), shift(&f.x2, d2)];
    let pis = [shift(&f.pi1, 0.0), shift(&f.pi2, 0.0)];
    let beta_oracle = -p.e * p.b_field * shoelace_area(&model.dpath, t, s.shoelace_points);
    let area_err = (beta - beta_oracle).abs() / beta_oracle.abs().max(1e-300);
    let mut out = CheckOutcome::from_reports(
        "translation",
        "magnetic translation algebra",
        vec![
            IdentityReport::new("position_shift", vec![t], vec![shifts[0].max(shifts[1])], None, s.tol),
            IdentityReport::new("kinetic_momentum_invariant", vec![t], vec![pis[0].max(pis[1])], None, s.tol),
            IdentityReport::new("beta_vs_shoelace", vec![t], vec![area_err], None, s.area_tol),
        ],
    );
    out.summary = format!("d = ({d1:.4}, {d2:.4}), β = {beta:.8}; {}", out.summary);
    Ok(out)
}

/// Planar algebra of the translation pieces: [η, π] = 0, [M, e^{−iH_B t}] = 0,
/// the two-leg area phase, and invariance of M under reparametrisation.
pub fn check_translation_algebra(ctx: &SuiteContext, s: &TranslationCheck) -> Result<CheckOutcome> {
    let t = ctx.end_time();
    let model = reduced_model(ctx, s.basis.basis(), t)?;
    let f = &model.factors;
    let p = &model.params;
    let idx = model.basis.planar_interior_indices();
    let rel = |c: &OperatorMatrix, scale: &OperatorMatrix| {
        let sel = |m: &OperatorMatrix| m.select(ndarray::Axis(0), &idx).select(ndarray::Axis(1), &idx);
        frobenius(sel(c).view()) / frobenius(sel(scale).view()).max(1e-300)
    };
    let mut comm = 0.0f64;
    for eta in [&f.eta1, &f.eta2] {
        for pi in [&f.pi1, &f.pi2] {
            comm = comm.max(rel(&commutator(eta, pi), &eta.dot(pi)));
        }
    }
    let (m, _) = magnetic_translation(f, p, &model.dpath, t);
    let ub = landau_evolution(f, p, 0.7 * t);
    let landau = rel(&commutator(&m, &ub), &m.dot(&ub));
    let (da, db) = ([0.31, -0.12], [-0.07, 0.26]);
    let lhs = translation_exponential(f, da).dot(&translation_exponential(f, db));
    let phase = C64::from_polar(1.0, 0.5 * p.e * p.b_field * (da[0] * db[1] - da[1] * db[0]));
    let rhs = translation_exponential(f, [da[0] + db[0], da[1] + db[1]]).mapv(|z| z * phase);
    let two_leg = index_distance(&lhs, &rhs, &idx);
    // The same curve traversed at half the speed ends with the same M.
    let slow = build_model(p.clone(), model.basis.clone(), &ctx.path.with_eps(0.5 * ctx.path.eps()), 2.0 * t)?;
    let (m_slow, _) = magnetic_translation(f, p, &slow.dpath, 2.0 * t);
    let reparam = index_distance(&m, &m_slow, &idx);
    Ok(CheckOutcome::from_reports(
        "translation_algebra",
        "translation algebra",
        vec![
            IdentityReport::new("eta_pi_commutator", vec![], vec![comm], None, 1e-12),
            IdentityReport::new("translation_commutes_with_landau", vec![t], vec![landau], None, 1e-12),
            IdentityReport::new("two_leg_area_phase", vec![], vec![two_leg], None, s.tol),
            IdentityReport::new("reparametrisation", vec![t], vec![reparam], None, 1e-6),
        ],
    ))
}

/// Validate the reduced bases named in the settings.
pub fn validate_settings(s: &CheckSettings) -> Result<()> {
    for c in [&s.gauge.basis, &s.factorization.basis, &s.confinement.basis, &s.resonance.basis, &s.adiabatic.basis, &s.translation.basis] {
        c.basis().validate()?;
    }
    Ok(())
}
