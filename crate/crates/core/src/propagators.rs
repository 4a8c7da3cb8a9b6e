//! Time-ordered propagation and the closed-form factors of U(t).
//!
//! Propagation works on column blocks: a full propagator is the block that
//! starts as the identity, and large checks propagate only the interior
//! columns they compare.

use crate::geometry::{
    displacement_path, transport_frame, uniform_grid, DisplacementPath, GeometryError, SpherePath,
};
use crate::hamiltonians::{
    gauge_generator, h0_decomposed, h2d, h_tilde_2d, lab_hamiltonian, rotating_hamiltonian, rotation_generator,
    xi_coupling, Drive, HamiltonianError, TimeDependentOperator,
};
use crate::hilbert::{build_operator_set, BasisConfig, Factors, HilbertError, OperatorSet, PhysicalParams};
use crate::linalg::{
    dagger, expm, expm_action, frobenius, hermitian_eigen, hermiticity_residual, identity, unit_columns, KronSum,
    LinearOp, OperatorMatrix, C64, IM, ONE,
};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, OnceLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PropagatorError {
    #[error("propagation did not converge: self-difference {difference:e} after {steps} steps")]
    NotConverged { difference: f64, steps: usize },
    #[error("generator is not Hermitian (residual {0:e})")]
    NotHermitian(f64),
    #[error("factor {0} is missing for this assembly mode")]
    MissingFactor(&'static str),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
}

pub type Result<T> = std::result::Result<T, PropagatorError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// exp(−ih·H(t+h/2)), second order.
    Midpoint,
    /// Commutator-free fourth-order Magnus with two Gauss nodes.
    Magnus4,
}

impl Scheme {
    pub fn order(self) -> i32 {
        match self {
            Scheme::Midpoint => 2,
            Scheme::Magnus4 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    /// Relative Frobenius self-difference between successive halvings.
    pub tol: f64,
    pub max_steps: usize,
    pub step_init: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { scheme: Scheme::Midpoint, tol: 1e-8, max_steps: 400_000, step_init: 0.1 }
    }
}

impl IntegratorConfig {
    pub fn magnus4(tol: f64, step_init: f64) -> Self {
        IntegratorConfig { scheme: Scheme::Magnus4, tol, step_init, ..Default::default() }
    }
}

/// Something whose weighted combinations at several times can act on blocks.
pub trait Generator: Sync {
    fn dim(&self) -> usize;

    /// Times where the generator may be discontinuous.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Σ_j w_j H(t_j).
    fn combination(&self, nodes: &[(f64, f64)]) -> Box<dyn LinearOp + '_>;

    /// Dense H(t), when cheap enough to form.
    fn dense_at(&self, _t: f64) -> Option<OperatorMatrix> {
        None
    }
}

impl Generator for TimeDependentOperator {
    fn dim(&self) -> usize {
        TimeDependentOperator::dim(self)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }

    fn combination(&self, nodes: &[(f64, f64)]) -> Box<dyn LinearOp + '_> {
        Box::new(self.sparse_combination(nodes))
    }

    fn dense_at(&self, t: f64) -> Option<OperatorMatrix> {
        (self.dim() <= 400).then(|| TimeDependentOperator::dense_at(self, t))
    }
}

/// A generator given as a closure returning dense matrices.
pub struct DenseGenerator<F> {
    pub dim: usize,
    pub f: F,
    pub breakpoints: Vec<f64>,
}

impl<F: Fn(f64) -> OperatorMatrix + Sync> Generator for DenseGenerator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }

    fn combination(&self, nodes: &[(f64, f64)]) -> Box<dyn LinearOp + '_> {
        let mut out = Array2::zeros((self.dim, self.dim));
        for &(t, w) in nodes {
            out = out + (self.f)(t).mapv(|z| z * w);
        }
        Box::new(out)
    }

    fn dense_at(&self, t: f64) -> Option<OperatorMatrix> {
        Some((self.f)(t))
    }
}

const SQRT3_6: f64 = 0.288_675_134_594_812_9;

/// Advance a block over [t, t+h].
pub fn step_block(gen: &dyn Generator, scheme: Scheme, t: f64, h: f64, v: &OperatorMatrix) -> OperatorMatrix {
    let z = -IM * h;
    match scheme {
        Scheme::Midpoint => {
            let op = gen.combination(&[(t + 0.5 * h, 1.0)]);
            expm_action(op.as_ref(), z, v)
        }
        Scheme::Magnus4 => {
            let (t1, t2) = (t + (0.5 - SQRT3_6) * h, t + (0.5 + SQRT3_6) * h);
            let (small, big) = (0.25 - SQRT3_6, 0.25 + SQRT3_6);
            let first = gen.combination(&[(t1, big), (t2, small)]);
            let v = expm_action(first.as_ref(), z, v);
            let second = gen.combination(&[(t1, small), (t2, big)]);
            expm_action(second.as_ref(), z, &v)
        }
    }
}

/// Steps of length ≤ `h_max` covering [a, b], split at the breakpoints.
pub fn step_plan(a: f64, b: f64, breakpoints: &[f64], h_max: f64) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&c| c > a && c < b).collect();
    cuts.insert(0, a);
    cuts.push(b);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let n = (len / h_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = len / n as f64;
        out.extend((0..n).map(|k| (w[0] + k as f64 * h, h)));
    }
    out
}

/// Fixed-step propagation of `v0` from `grid[0]`, returning the block at every grid time.
pub fn propagate_fixed(
    gen: &dyn Generator,
    grid: &[f64],
    h_max: f64,
    scheme: Scheme,
    v0: &OperatorMatrix,
) -> (Vec<OperatorMatrix>, usize) {
    let bps = gen.breakpoints();
    let mut out = vec![v0.clone()];
    let mut v = v0.clone();
    let mut steps = 0;
    for w in grid.windows(2) {
        for (t, h) in step_plan(w[0], w[1], &bps, h_max) {
            v = step_block(gen, scheme, t, h, &v);
            steps += 1;
        }
        out.push(v.clone());
    }
    (out, steps)
}

#[derive(Clone, Debug)]
pub struct PropagatorResult {
    pub grid: Vec<f64>,
    pub u: Vec<OperatorMatrix>,
    /// ‖V†V − V₀†V₀‖_F per sample.
    pub unitarity_drift: Vec<f64>,
    pub step_count: usize,
    pub converged: bool,
    /// Relative self-difference of the last halving.
    pub self_difference: f64,
}

impl PropagatorResult {
    pub fn last(&self) -> &OperatorMatrix {
        self.u.last().expect("non-empty result")
    }
}

fn relative_difference(a: &[OperatorMatrix], b: &[OperatorMatrix]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| frobenius((x - y).view()) / frobenius(y.view()).max(1e-300))
        .fold(0.0, f64::max)
}

fn check_hermitian(gen: &dyn Generator, grid: &[f64]) -> Result<()> {
    if let Some(h) = gen.dense_at(0.5 * (grid[0] + grid[grid.len() - 1])) {
        let r = hermiticity_residual(&h);
        if r > 1e-10 * frobenius(h.view()).max(1.0) {
            return Err(PropagatorError::NotHermitian(r));
        }
    }
    Ok(())
}

/// Propagate a block with global step halving until successive refinements
/// agree to `cfg.tol`.
pub fn propagate_columns(
    gen: &dyn Generator,
    grid: &[f64],
    cfg: &IntegratorConfig,
    v0: &OperatorMatrix,
) -> Result<PropagatorResult> {
    // A zero-length span leaves the block unchanged.
    if grid.len() == 2 && grid[0] == grid[1] {
        return Ok(finish(grid, vec![v0.clone(), v0.clone()], v0, 0, true, 0.0));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PropagatorError::Invalid("grid must be strictly increasing with at least two points".into()));
    }
    check_hermitian(gen, grid)?;
    let mut h = cfg.step_init.min(grid[grid.len() - 1] - grid[0]);
    let (mut prev, _) = propagate_fixed(gen, grid, h, cfg.scheme, v0);
    loop {
        h *= 0.5;
        let (cur, steps) = propagate_fixed(gen, grid, h, cfg.scheme, v0);
        let diff = relative_difference(&cur, &prev);
        if diff <= cfg.tol {
            return Ok(finish(grid, cur, v0, steps, true, diff));
        }
        if 2 * steps > cfg.max_steps {
            return Err(PropagatorError::NotConverged { difference: diff, steps });
        }
        prev = cur;
    }
}

fn finish(
    grid: &[f64],
    u: Vec<OperatorMatrix>,
    v0: &OperatorMatrix,
    steps: usize,
    converged: bool,
    diff: f64,
) -> PropagatorResult {
    let g0 = dagger(v0).dot(v0);
    let unitarity_drift = u.iter().map(|v| frobenius((dagger(v).dot(v) - &g0).view())).collect();
    PropagatorResult { grid: grid.to_vec(), u, unitarity_drift, step_count: steps, converged, self_difference: diff }
}

/// Fixed-step propagation without the halving loop, for runs whose step has
/// been chosen in advance.
pub fn propagate_columns_fixed(
    gen: &dyn Generator,
    grid: &[f64],
    h_max: f64,
    scheme: Scheme,
    v0: &OperatorMatrix,
) -> PropagatorResult {
    let (u, steps) = propagate_fixed(gen, grid, h_max, scheme, v0);
    finish(grid, u, v0, steps, false, f64::NAN)
}

/// U(t) on `grid` for i dU/dt = H(t)U, U(grid[0]) = I.
pub fn time_ordered_propagator(gen: &dyn Generator, grid: &[f64], cfg: &IntegratorConfig) -> Result<PropagatorResult> {
    propagate_columns(gen, grid, cfg, &identity(gen.dim()))
}

/// Convenience form taking H as a closure.
pub fn propagate_dense(
    h: impl Fn(f64) -> OperatorMatrix + Sync,
    dim: usize,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<PropagatorResult> {
    time_ordered_propagator(&DenseGenerator { dim, f: h, breakpoints: Vec::new() }, grid, cfg)
}

/// Apply `P ⊗ I` to a block.
pub fn apply_planar(f: &Factors, p: &OperatorMatrix, v: &OperatorMatrix) -> OperatorMatrix {
    let mut ks = KronSum::new(f.dp, f.dc);
    ks.push_planar(p.clone());
    ks.apply(v)
}

/// Apply `I ⊗ A` to a block.
pub fn apply_axial(f: &Factors, a: &OperatorMatrix, v: &OperatorMatrix) -> OperatorMatrix {
    let mut ks = KronSum::new(f.dp, f.dc);
    ks.push_axial(a.clone());
    ks.apply(v)
}

/// Everything a scenario needs: parameters, operator factors, the drive and
/// its displacement path, on [0, t_end].
pub struct Model {
    pub params: PhysicalParams,
    pub basis: BasisConfig,
    pub factors: Arc<Factors>,
    pub drive: Drive,
    pub dpath: Arc<DisplacementPath>,
    ops: OnceLock<OperatorSet>,
    axial: OnceLock<(Vec<f64>, OperatorMatrix)>,
}

/// Frame grid whose spacing matches the transport step.
pub fn frame_grid(path: &SpherePath, t_end: f64) -> Vec<f64> {
    let step = (1e-3 / path.eps()).min(t_end / 8.0);
    let n = (t_end / step).ceil().max(8.0) as usize;
    uniform_grid(t_end, n)
}

impl Model {
    pub fn new(
        params: PhysicalParams,
        basis: BasisConfig,
        path: &SpherePath,
        t_end: f64,
        initial_e1: Option<[f64; 3]>,
    ) -> Result<Self> {
        let factors = Factors::new(&params, &basis)?;
        if !(t_end > 0.0) || t_end > path.duration * (1.0 + 1e-12) {
            return Err(PropagatorError::Invalid(format!("end time {t_end} outside the path duration")));
        }
        let frame = transport_frame(path, &frame_grid(path, t_end), 1e-9, initial_e1)?;
        let dpath = displacement_path(&frame, params.length)?;
        Ok(Model {
            params,
            basis,
            factors: Arc::new(factors),
            drive: Drive::new(frame),
            dpath: Arc::new(dpath),
            ops: OnceLock::new(),
            axial: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.factors.dim()
    }

    pub fn end_time(&self) -> f64 {
        self.drive.end_time()
    }

    /// Dense full-space operators, built on first use.
    pub fn operator_set(&self) -> &OperatorSet {
        self.ops.get_or_init(|| build_operator_set(&self.params, &self.basis).expect("validated basis"))
    }

    pub fn interior(&self) -> Vec<usize> {
        self.basis.interior_indices()
    }

    fn axial_eigen(&self) -> &(Vec<f64>, OperatorMatrix) {
        self.axial.get_or_init(|| hermitian_eigen(&self.factors.h_axial))
    }

    /// exp(−i(p₃²/2m + V)t) without the scalar phase.
    pub fn axial_dynamic(&self, t: f64) -> OperatorMatrix {
        let (vals, vecs) = self.axial_eigen();
        let mut scaled = vecs.clone();
        for (j, &l) in vals.iter().enumerate() {
            let ph = C64::from_polar(1.0, -l * t);
            scaled.column_mut(j).mapv_inplace(|z| z * ph);
        }
        scaled.dot(&dagger(vecs))
    }

    /// ξ(t) = U₁d⁻¹ξ₀U₁d on the axial factor.
    pub fn xi_t(&self, t: f64) -> OperatorMatrix {
        let u = self.axial_dynamic(t);
        dagger(&u).dot(&self.factors.xi0).dot(&u)
    }
}

/// ∫₀ᵗ ṅ² dτ.
pub fn ndot_sq_integral(drive: &Drive, t: f64) -> f64 {
    let path = &drive.frame.path;
    let cuts: Vec<f64> = path.breakpoints().into_iter().filter(|&b| b < t).chain([t]).collect();
    let panels = 8.max((t * path.eps() * 64.0).ceil() as usize);
    crate::geometry::integrate(|s| path.point(s).expect("inside").ndot.norm_squared(), &cuts, panels)
}

/// Axial factor of U₁d(t), including the scalar phase e^{+i(m/2)L²∫ṅ²}.
pub fn axial_factor(model: &Model, t: f64) -> OperatorMatrix {
    let (m, l) = (model.params.m, model.params.length);
    let phase = C64::from_polar(1.0, 0.5 * m * l * l * ndot_sq_integral(&model.drive, t));
    model.axial_dynamic(t).mapv(|z| z * phase)
}

/// U₁d(t) on the full space.
pub fn axial_propagator(model: &Model, t: f64) -> OperatorMatrix {
    model.factors.axial_full(&axial_factor(model, t))
}

/// R(t), the propagator of (n×ṅ)·J.
pub fn rotation_operator(model: &Model, t: f64, cfg: &IntegratorConfig) -> Result<OperatorMatrix> {
    let gen = rotation_generator(&model.factors, &model.drive);
    Ok(time_ordered_propagator(&gen, &[0.0, t], cfg)?.last().clone())
}

/// exp(−i(η₁d₁ + η₂d₂)) on the planar factor.
pub fn translation_exponential(f: &Factors, d: [f64; 2]) -> OperatorMatrix {
    expm(&(f.eta1.mapv(|z| z * d[0]) + f.eta2.mapv(|z| z * d[1])).mapv(|z| -IM * z))
}

/// M(t) on the planar factor and β(t) = −eB·S_d.
pub fn magnetic_translation(f: &Factors, params: &PhysicalParams, dpath: &DisplacementPath, t: f64) -> (OperatorMatrix, f64) {
    let (d1, d2, sd) = dpath.at(t);
    let beta = -params.e * params.b_field * sd;
    let m = translation_exponential(f, [d1, d2]).mapv(|z| z * C64::from_polar(1.0, beta));
    (m, beta)
}

/// Classic RK4 on a real state from y(0) = 0, restarting at breakpoints and
/// sampling the right-hand side strictly inside each step. Returns the state
/// at each of the increasing `times`.
fn rk4_series<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    times: &[f64],
    h_max: f64,
    breakpoints: &[f64],
) -> Vec<[f64; N]> {
    let mut y = [0.0; N];
    let mut out = Vec::with_capacity(times.len());
    let mut start = 0.0;
    for &stop in times {
        for (t, h) in step_plan(start, stop, breakpoints, h_max) {
            let inside = 1e-12 * h;
            let g = |s: f64, y: &[f64; N]| f(s.clamp(t + inside, t + h - inside), y);
            let add = |y: &[f64; N], k: &[f64; N], c: f64| {
                let mut o = *y;
                for i in 0..N {
                    o[i] += c * k[i];
                }
                o
            };
            let k1 = g(t, &y);
            let k2 = g(t + 0.5 * h, &add(&y, &k1, 0.5 * h));
            let k3 = g(t + 0.5 * h, &add(&y, &k2, 0.5 * h));
            let k4 = g(t + h, &add(&y, &k3, h));
            for i in 0..N {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        start = stop.max(start);
        out.push(y);
    }
    out
}

fn quadrature_step(params: &PhysicalParams, drive: &Drive) -> f64 {
    let eps = drive.frame.path.eps();
    (1.0 / params.omega()).min(1.0 / eps) / 40.0
}

/// δ(t) = (L/4l_B)∫α e^{−iωτ} and γ(t) = −∫Im(δ*δ̇) at each of the increasing `times`.
pub fn displacement_series(params: &PhysicalParams, drive: &Drive, times: &[f64]) -> Vec<(C64, f64)> {
    let scale = params.length / (4.0 * params.l_b());
    let omega = params.omega();
    let rate = |s: f64| {
        let a = drive.sample(s).alpha;
        C64::new(a[0], a[1]) * C64::from_polar(scale, -omega * s)
    };
    rk4_series(
        |s, y: &[f64; 3]| {
            let r = rate(s);
            let delta = C64::new(y[0], y[1]);
            [r.re, r.im, -(delta.conj() * r).im]
        },
        times,
        quadrature_step(params, drive),
        &drive.breakpoints(),
    )
    .into_iter()
    .map(|y| (C64::new(y[0], y[1]), y[2]))
    .collect()
}

pub fn displacement_coefficients(params: &PhysicalParams, drive: &Drive, t: f64) -> (C64, f64) {
    displacement_series(params, drive, &[t])[0]
}

/// exp(−i(δa + δ*a†))e^{iγ}.
pub fn displacement_operator(f: &Factors, delta: C64, gamma: f64) -> OperatorMatrix {
    displacement_exponential(f, delta).mapv(|z| z * C64::from_polar(1.0, gamma))
}

/// Ũ_ε = exp(−i(δa + δ*a†))e^{iγ} on the planar factor.
pub fn displacement_factor(f: &Factors, params: &PhysicalParams, drive: &Drive, t: f64) -> (OperatorMatrix, C64, f64) {
    let (delta, gamma) = displacement_coefficients(params, drive, t);
    (displacement_operator(f, delta, gamma), delta, gamma)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCoefficients {
    pub c1: f64,
    pub c2: C64,
    pub c3: C64,
    pub c4: C64,
    pub c5: C64,
}

/// First-order coefficients of U_ε and the assembled planar operator
/// (1−ic₁)I + c₂b − c₂*b† + c₃b² − c₃*b†² + c₄b†b + c₅a†a.
pub fn perturbative_u_eps(
    f: &Factors,
    params: &PhysicalParams,
    drive: &Drive,
    dpath: &DisplacementPath,
    t: f64,
) -> (PerturbationCoefficients, OperatorMatrix) {
    let (m, l, lb) = (params.m, params.length, params.l_b());
    let y = rk4_series(
        |s, _y: &[f64; 6]| {
            let smp = drive.sample(s);
            let (d1, d2, _) = dpath.at(s);
            let a = smp.alpha;
            let ad = smp.alpha_dot;
            let a_dot_d = a[0] * d1 + a[1] * d2;
            let astar = C64::new(a[0], -a[1]);
            let adot_star = C64::new(ad[0], -ad[1]);
            let c2 = (adot_star * l - astar * a_dot_d) * (m * lb);
            let c3 = -IM * 0.5 * m * lb * lb * astar * astar;
            [
                m * l * (ad[0] * d1 + ad[1] * d2) - 0.5 * m * a_dot_d * a_dot_d - smp.ndot_sq * m * lb * lb,
                c2.re,
                c2.im,
                c3.re,
                c3.im,
                m * lb * lb * smp.ndot_sq,
            ]
        },
        &[t],
        quadrature_step(params, drive),
        &drive.breakpoints(),
    )[0];
    let coeffs = PerturbationCoefficients {
        c1: y[0],
        c2: C64::new(y[1], y[2]),
        c3: C64::new(y[3], y[4]),
        c4: IM * y[5],
        c5: IM * y[5],
    };
    let (a, b) = (&f.a, &f.b);
    let (ad, bd) = (dagger(a), dagger(b));
    let u = f.id_p.mapv(|z| z * (ONE - IM * coeffs.c1))
        + b.mapv(|z| z * coeffs.c2)
        - bd.mapv(|z| z * coeffs.c2.conj())
        + b.dot(b).mapv(|z| z * coeffs.c3)
        - bd.dot(&bd).mapv(|z| z * coeffs.c3.conj())
        + bd.dot(b).mapv(|z| z * coeffs.c4)
        + ad.dot(a).mapv(|z| z * coeffs.c5);
    (coeffs, u)
}

/// U₂d(t) at arbitrary times from a fine fourth-order table plus one partial step.
pub struct PlanarTable {
    gen: TimeDependentOperator,
    grid: Vec<f64>,
    u: Vec<OperatorMatrix>,
}

impl PlanarTable {
    pub fn new(gen: TimeDependentOperator, t_end: f64, h: f64) -> Self {
        let mut grid = vec![0.0];
        grid.extend(step_plan(0.0, t_end, &gen.breakpoints, h).into_iter().map(|(t, h)| t + h));
        let (u, _) = propagate_fixed(&gen, &grid, f64::INFINITY, Scheme::Magnus4, &identity(gen.dim()));
        PlanarTable { gen, grid, u }
    }

    pub fn at(&self, t: f64) -> OperatorMatrix {
        let k = match self.grid.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return self.u[i].clone(),
            Err(i) => i.saturating_sub(1).min(self.grid.len() - 1),
        };
        step_block(&self.gen, Scheme::Magnus4, self.grid[k], t - self.grid[k], &self.u[k])
    }

    pub fn end(&self) -> &OperatorMatrix {
        self.u.last().expect("non-empty table")
    }
}

/// Table step for planar reference propagators.
fn planar_step(model: &Model) -> f64 {
    (0.05 / model.params.omega()).min(0.5)
}

pub fn u2d_table(model: &Model, t_end: f64) -> PlanarTable {
    PlanarTable::new(h2d(&model.factors, &model.params, &model.drive, false), t_end, planar_step(model))
}

pub fn u_tilde_2d_table(model: &Model, t_end: f64) -> PlanarTable {
    PlanarTable::new(h_tilde_2d(&model.factors, &model.params, &model.drive), t_end, planar_step(model))
}

/// U_ε from its defining relation U₂d = Ũ₂d U_ε, both propagated directly.
pub fn u_eps_brute(model: &Model, t: f64) -> OperatorMatrix {
    let u2 = u2d_table(model, t);
    let ut = u_tilde_2d_table(model, t);
    dagger(ut.end()).dot(u2.end())
}

/// M e^{−iH_B t} Ũ_ε U_ε on the planar factor.
pub fn u2d_factorized(model: &Model, t: f64, u_eps: &OperatorMatrix) -> OperatorMatrix {
    let f = &model.factors;
    let (m, _) = magnetic_translation(f, &model.params, &model.dpath, t);
    let ub = landau_evolution(f, &model.params, t);
    let (ut, _, _) = displacement_factor(f, &model.params, &model.drive, t);
    m.dot(&ub).dot(&ut).dot(u_eps)
}

/// e^{−iH_B t} on the planar factor (diagonal in the number basis).
pub fn landau_evolution(f: &Factors, params: &PhysicalParams, t: f64) -> OperatorMatrix {
    let w = params.omega();
    let mut out = Array2::zeros((f.dp, f.dp));
    for i in 0..f.dp {
        let na = (i / (f.basis.nb + 1)) as f64;
        out[[i, i]] = C64::from_polar(1.0, -w * (na + 0.5) * t);
    }
    out
}

/// Generator of U_ξ, or of 𝔘 when built with `include_h2d`.
pub struct XiGenerator<'a> {
    model: &'a Model,
    u2d: Option<&'a PlanarTable>,
    h2d: Option<TimeDependentOperator>,
}

impl<'a> XiGenerator<'a> {
    /// U₂d⁻¹H_ξU₂d with U₂d taken from `table`.
    pub fn conjugated(model: &'a Model, table: &'a PlanarTable) -> Self {
        XiGenerator { model, u2d: Some(table), h2d: None }
    }

    /// 𝔥 = H₂d + H_ξ.
    pub fn with_h2d(model: &'a Model) -> Self {
        XiGenerator { model, u2d: None, h2d: Some(h2d(&model.factors, &model.params, &model.drive, false)) }
    }

    fn terms(&self, t: f64, w: f64, out: &mut KronSum) {
        let f = &self.model.factors;
        let p = &self.model.params;
        let s = self.model.drive.sample(t);
        let xi = self.model.xi_t(t);
        let mut q = xi_coupling(f, p, &s);
        if let Some(tab) = self.u2d {
            let u = tab.at(t);
            q = dagger(&u).dot(&q).dot(&u);
        }
        let axial = xi.mapv(|z| z * (-p.m * p.length * s.ndot_sq)) + xi.dot(&xi).mapv(|z| z * (1.5 * p.m * s.ndot_sq));
        out.push(q.mapv(|z| z * w), xi);
        out.push_axial(axial.mapv(|z| z * w));
        if let Some(h) = &self.h2d {
            out.push_planar(h.dense_at(t).mapv(|z| z * w));
        }
    }
}

impl Generator for XiGenerator<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.model.drive.breakpoints()
    }

    fn combination(&self, nodes: &[(f64, f64)]) -> Box<dyn LinearOp + '_> {
        let f = &self.model.factors;
        let mut ks = KronSum::new(f.dp, f.dc);
        for &(t, w) in nodes {
            self.terms(t, w, &mut ks);
        }
        Box::new(ks)
    }

    fn dense_at(&self, t: f64) -> Option<OperatorMatrix> {
        (self.dim() <= 400).then(|| self.combination(&[(t, 1.0)]).apply(&identity(self.dim())))
    }
}

/// Source of U₂d inside the U_ξ equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum U2dSource {
    /// Direct propagation of H₂d.
    Brute,
    /// U₂d⁻¹𝔘 with 𝔘 propagated directly; avoids U₂d at intermediate times.
    Splitting,
}

/// U_ξ(t) acting on `v0` (identity when `None`).
pub fn solve_u_xi(
    model: &Model,
    t: f64,
    cfg: &IntegratorConfig,
    source: U2dSource,
    v0: Option<&OperatorMatrix>,
) -> Result<PropagatorResult> {
    let v0 = v0.cloned().unwrap_or_else(|| identity(model.dim()));
    match source {
        U2dSource::Brute => {
            let table = u2d_table(model, t);
            let gen = XiGenerator::conjugated(model, &table);
            propagate_columns(&gen, &[0.0, t], cfg, &v0)
        }
        U2dSource::Splitting => {
            let gen = XiGenerator::with_h2d(model);
            let mut res = propagate_columns(&gen, &[0.0, t], cfg, &v0)?;
            let u2 = u2d_table(model, t);
            let back = dagger(u2.end());
            let last = res.u.len() - 1;
            res.u[last] = apply_planar(&model.factors, &back, &res.u[last]);
            Ok(res)
        }
    }
}

/// The factors of U(t) as full-space matrices.
#[derive(Clone, Debug)]
pub struct FactorizationBundle {
    pub t: f64,
    pub r: OperatorMatrix,
    pub g_t: OperatorMatrix,
    pub g_0: OperatorMatrix,
    pub u1d: OperatorMatrix,
    pub m: OperatorMatrix,
    pub ub: OperatorMatrix,
    pub utilde_eps: OperatorMatrix,
    pub u_eps: OperatorMatrix,
    pub u_eps_1st: OperatorMatrix,
    pub u_xi: OperatorMatrix,
    pub beta: f64,
    pub d: (f64, f64),
    pub delta: C64,
    pub gamma: f64,
    pub coeffs: PerturbationCoefficients,
}

/// g(t) = exp(−iG(t)) on the full space.
pub fn gauge_unitary(model: &Model, t: f64) -> OperatorMatrix {
    let g = gauge_generator(&model.factors, &model.params, &model.drive).dense_at(t);
    expm(&g.mapv(|z| -IM * z))
}

/// g(t)^{±1} acting on a block without forming g.
pub fn gauge_action(model: &Model, t: f64, inverse: bool, v: &OperatorMatrix) -> OperatorMatrix {
    let gen = gauge_generator(&model.factors, &model.params, &model.drive);
    let op = gen.sparse_combination(&[(t, 1.0)]);
    expm_action(&op, if inverse { IM } else { -IM }, v)
}

pub fn factorization_bundle(model: &Model, t: f64, cfg: &IntegratorConfig) -> Result<FactorizationBundle> {
    let f = &model.factors;
    let p = &model.params;
    let (m, beta) = magnetic_translation(f, p, &model.dpath, t);
    let (ut, delta, gamma) = displacement_factor(f, p, &model.drive, t);
    let (coeffs, u1st) = perturbative_u_eps(f, p, &model.drive, &model.dpath, t);
    let (d1, d2, _) = model.dpath.at(t);
    Ok(FactorizationBundle {
        t,
        r: rotation_operator(model, t, cfg)?,
        g_t: gauge_unitary(model, t),
        g_0: gauge_unitary(model, 0.0),
        u1d: axial_propagator(model, t),
        m: f.planar_full(&m),
        ub: f.planar_full(&landau_evolution(f, p, t)),
        utilde_eps: f.planar_full(&ut),
        u_eps: f.planar_full(&u_eps_brute(model, t)),
        u_eps_1st: f.planar_full(&u1st),
        u_xi: solve_u_xi(model, t, cfg, U2dSource::Brute, None)?.last().clone(),
        beta,
        d: (d1, d2),
        delta,
        gamma,
        coeffs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyMode {
    Full,
    StrongConfinement,
    Adiabatic,
}

/// Ordered product of the factors for the requested mode.
pub fn assemble_evolution(b: &FactorizationBundle, mode: AssemblyMode) -> OperatorMatrix {
    let u2d = b.m.dot(&b.ub).dot(&b.utilde_eps).dot(&b.u_eps);
    let g0inv = dagger(&b.g_0);
    match mode {
        AssemblyMode::Full => b.r.dot(&b.g_t).dot(&b.u1d).dot(&u2d).dot(&b.u_xi).dot(&g0inv),
        AssemblyMode::StrongConfinement => b.r.dot(&b.g_t).dot(&b.u1d).dot(&u2d).dot(&g0inv),
        AssemblyMode::Adiabatic => b.r.dot(&b.m).dot(&b.ub).dot(&b.u1d),
    }
}

/// U(t)·v from the factorized form, applying each factor to the block in turn.
pub fn factorized_action(model: &Model, t: f64, cfg: &IntegratorConfig, v: &OperatorMatrix) -> Result<OperatorMatrix> {
    let f = &model.factors;
    let w = gauge_action(model, 0.0, true, v);
    let w = solve_u_xi(model, t, cfg, U2dSource::Brute, Some(&w))?.last().clone();
    let u2d = u2d_factorized(model, t, &u_eps_brute(model, t));
    let w = apply_planar(f, &u2d, &w);
    let w = apply_axial(f, &axial_factor(model, t), &w);
    let w = gauge_action(model, t, false, &w);
    let rot = rotation_generator(f, &model.drive);
    Ok(propagate_columns(&rot, &[0.0, t], cfg, &w)?.last().clone())
}

/// U(t)·v for the lab Hamiltonian.
pub fn lab_action(model: &Model, t: f64, cfg: &IntegratorConfig, v: &OperatorMatrix) -> Result<OperatorMatrix> {
    let gen = lab_hamiltonian(&model.factors, &model.params, &model.drive);
    Ok(propagate_columns(&gen, &[0.0, t], cfg, v)?.last().clone())
}

/// Gauge relation U₁ = g(t)U₀g⁻¹(0) and splitting U₀ = U₁d𝔘 on the given columns.
pub struct GaugeSplitCheck {
    pub u1: OperatorMatrix,
    pub gauge_side: OperatorMatrix,
    pub u0: OperatorMatrix,
    pub split_side: OperatorMatrix,
}

pub fn gauge_split_check(model: &Model, t: f64, cfg: &IntegratorConfig, cols: &[usize]) -> Result<GaugeSplitCheck> {
    let f = &model.factors;
    let v = unit_columns(model.dim(), cols);
    let h1 = rotating_hamiltonian(f, &model.drive);
    let u1 = propagate_columns(&h1, &[0.0, t], cfg, &v)?.last().clone();
    let h0 = h0_decomposed(f, &model.params, &model.drive);
    let w = gauge_action(model, 0.0, true, &v);
    let u0w = propagate_columns(&h0, &[0.0, t], cfg, &w)?.last().clone();
    let gauge_side = gauge_action(model, t, false, &u0w);
    let u0 = propagate_columns(&h0, &[0.0, t], cfg, &v)?.last().clone();
    let frak = propagate_columns(&XiGenerator::with_h2d(model), &[0.0, t], cfg, &v)?.last().clone();
    let split_side = apply_axial(f, &axial_factor(model, t), &frak);
    Ok(GaugeSplitCheck { u1, gauge_side, u0, split_side })
}

/// exp(−i(δa + δ*a†)).
pub fn displacement_exponential(f: &Factors, delta: C64) -> OperatorMatrix {
    let gen = f.a.mapv(|z| z * delta) + dagger(&f.a).mapv(|z| z * delta.conj());
    expm(&gen.mapv(|z| -IM * z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_function, ZERO};

    fn project(v: &OperatorMatrix, idx: &[usize]) -> OperatorMatrix {
        v.select(ndarray::Axis(0), idx).select(ndarray::Axis(1), idx)
    }

    fn model(theta: f64, eps: f64, t_end: f64, basis: BasisConfig) -> Model {
        let params = PhysicalParams::harmonic(1.0, -1.0, 1.0, 1.0, 25.0);
        Model::new(params, basis, &SpherePath::cone(theta, eps), t_end, None).unwrap()
    }

    #[test]
    fn constant_generator_matches_exponential() {
        let n = 6;
        let mut h = Array2::zeros((n, n));
        for i in 0..n {
            h[[i, i]] = C64::new(i as f64 * 0.3, 0.0);
            if i + 1 < n {
                h[[i, i + 1]] = C64::new(0.2, 0.1);
                h[[i + 1, i]] = C64::new(0.2, -0.1);
            }
        }
        let want = hermitian_function(&h, |l| C64::from_polar(1.0, -2.0 * l));
        for scheme in [Scheme::Midpoint, Scheme::Magnus4] {
            let cfg = IntegratorConfig { scheme, tol: 1e-10, ..Default::default() };
            let hh = h.clone();
            let r = propagate_dense(move |_| hh.clone(), n, &[0.0, 2.0], &cfg).unwrap();
            assert!(frobenius((r.last() - &want).view()) < 1e-9);
            assert!(r.converged);
        }
    }

    #[test]
    fn orders_of_the_schemes() {
        // H(t) = σ_x cos t + σ_z t has no closed form; measure self-convergence.
        let h = |t: f64| {
            let mut m = Array2::zeros((2, 2));
            m[[0, 1]] = C64::new(t.cos(), 0.0);
            m[[1, 0]] = C64::new(t.cos(), 0.0);
            m[[0, 0]] = C64::new(t, 0.0);
            m[[1, 1]] = C64::new(-t, 0.0);
            m
        };
        let gen = DenseGenerator { dim: 2, f: h, breakpoints: vec![] };
        for (scheme, order) in [(Scheme::Midpoint, 2.0), (Scheme::Magnus4, 4.0)] {
            let run = |hs: f64| propagate_fixed(&gen, &[0.0, 2.0], hs, scheme, &identity(2)).0[1].clone();
            let (a, b, c) = (run(0.1), run(0.05), run(0.025));
            let ratio = frobenius((&a - &b).view()) / frobenius((&b - &c).view());
            assert!((ratio.log2() - order).abs() < 0.3, "{scheme:?} ratio {ratio}");
        }
    }

    #[test]
    fn landau_phases_after_one_cyclotron_period() {
        let params = PhysicalParams::harmonic(1.0, -1.0, 2.0, 1.0, 25.0);
        let path = SpherePath::cone(0.0, 0.01);
        let m = Model::new(params, BasisConfig::per_mode(3, 1, 1, [1, 0, 0]), &path, 10.0, Some([1.0, 0.0, 0.0]))
            .unwrap();
        let t2 = 2.0 * std::f64::consts::PI / m.params.omega();
        let f = &m.factors;
        let hb = f.hb.clone();
        let r = propagate_dense(move |_| hb.clone(), f.dp, &[0.0, t2], &IntegratorConfig::magnus4(1e-10, 0.5))
            .unwrap();
        for i in 0..f.dp {
            let na = (i / 2) as f64;
            let want = C64::from_polar(1.0, -std::f64::consts::PI * (2.0 * na + 1.0));
            assert!((r.last()[[i, i]] - want).norm() < 1e-8);
        }
    }

    #[test]
    fn static_path_factors_are_trivial() {
        let params = PhysicalParams::harmonic(1.0, -1.0, 1.0, 1.0, 25.0);
        let m = Model::new(params, BasisConfig::new(3, 3, 3, 1), &SpherePath::cone(0.0, 0.01), 5.0, Some([1.0, 0.0, 0.0]))
            .unwrap();
        let cfg = IntegratorConfig::magnus4(1e-10, 0.5);
        let r = rotation_operator(&m, 5.0, &cfg).unwrap();
        assert!(frobenius((&r - &identity(m.dim())).view()) < 1e-12);
        let (mt, beta) = magnetic_translation(&m.factors, &m.params, &m.dpath, 5.0);
        assert!(frobenius((&mt - &identity(m.factors.dp)).view()) < 1e-12 && beta == 0.0);
        let (ut, delta, gamma) = displacement_factor(&m.factors, &m.params, &m.drive, 5.0);
        assert!(frobenius((&ut - &identity(m.factors.dp)).view()) < 1e-12 && delta == ZERO && gamma == 0.0);
        let (c, u1) = perturbative_u_eps(&m.factors, &m.params, &m.drive, &m.dpath, 5.0);
        assert_eq!(c.c1, 0.0);
        assert_eq!(c.c4, c.c5);
        assert!(frobenius((&u1 - &identity(m.factors.dp)).view()) < 1e-14);
        let uxi = solve_u_xi(&m, 5.0, &cfg, U2dSource::Brute, None).unwrap();
        assert!(frobenius((uxi.last() - &identity(m.dim())).view()) < 1e-10);
        let u1d = axial_factor(&m, 0.0);
        assert!(frobenius((&u1d - &identity(m.factors.dc)).view()) < 1e-12);
    }

    #[test]
    fn axial_propagator_matches_direct_propagation() {
        let m = model(std::f64::consts::FRAC_PI_3, 0.05, 6.0, BasisConfig::per_mode(1, 1, 8, [0, 0, 2]));
        let gen = crate::hamiltonians::h1d(&m.factors, &m.params, &m.drive);
        let r = time_ordered_propagator(&gen, &[0.0, 6.0], &IntegratorConfig::magnus4(1e-11, 0.1)).unwrap();
        let want = axial_propagator(&m, 6.0);
        assert!(frobenius((r.last() - &want).view()) / frobenius(want.view()) < 1e-9);
    }

    #[test]
    fn translation_shifts_positions() {
        let m = model(std::f64::consts::FRAC_PI_3, 0.05, 10.0, BasisConfig::per_mode(2, 14, 0, [1, 5, 0]));
        let f = &m.factors;
        let (mt, _) = magnetic_translation(f, &m.params, &m.dpath, 10.0);
        let (d1, d2, _) = m.dpath.at(10.0);
        let idx = m.basis.planar_interior_indices();
        for (x, d) in [(&f.x1, d1), (&f.x2, d2)] {
            let lhs = dagger(&mt).dot(x).dot(&mt);
            let rhs = x + &f.id_p.mapv(|z| z * d);
            let r = frobenius(project(&(lhs - &rhs), &idx).view()) / frobenius(project(&rhs, &idx).view());
            assert!(r < 1e-8, "residual {r}");
        }
    }

    #[test]
    fn displacement_factor_matches_direct_propagation() {
        // Ũ_ε = e^{iH_B t} M⁻¹ Ũ₂d.
        let m = model(std::f64::consts::FRAC_PI_3, 0.05, 12.0, BasisConfig::per_mode(6, 10, 0, [3, 4, 0]));
        let f = &m.factors;
        let t = 12.0;
        let ut = u_tilde_2d_table(&m, t);
        let (mt, _) = magnetic_translation(f, &m.params, &m.dpath, t);
        let ub = landau_evolution(f, &m.params, t);
        let want = dagger(&ub).dot(&dagger(&mt)).dot(ut.end());
        let (got, delta, _) = displacement_factor(f, &m.params, &m.drive, t);
        assert!(delta.norm() > 1e-3);
        let idx = m.basis.planar_interior_indices();
        let r = frobenius(project(&(&got - &want), &idx).view()) / frobenius(project(&want, &idx).view());
        assert!(r < 1e-7, "residual {r}");
    }
}
