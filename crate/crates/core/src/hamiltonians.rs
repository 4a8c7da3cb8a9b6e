//! Hamiltonians and generators in closed form.
//!
//! Time-dependent operators are stored as `Σ_k c_k(t) O_k`, where each `O_k` is a
//! fixed sum of planar ⊗ axial products. The same object yields a dense matrix
//! at one time or a sparse family for repeated propagation.

use crate::geometry::{TransportedFrame, Vec3};
use crate::hilbert::{Factors, OperatorSet, PhysicalParams};
use crate::linalg::{
    dagger, expm, frobenius, identity, kron, re, unitarity_residual, CsrMatrix, KronSum, OperatorFamily,
    OperatorMatrix, C64, IM, ZERO,
};
use ndarray::Array2;
use std::sync::{Arc, OnceLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error("time {0} outside the frame grid")]
    OutsideFrame(f64),
    #[error("U1d is not unitary (residual {0:e})")]
    NotUnitary(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Term = (OperatorMatrix, OperatorMatrix);
type CoeffFn = dyn Fn(f64) -> Vec<C64> + Send + Sync;

/// Drive quantities at one instant, with vectors in the initial-frame basis.
#[derive(Clone, Copy, Debug)]
pub struct DriveSample {
    pub n: Vec3,
    /// n × ṅ.
    pub w: Vec3,
    pub alpha: [f64; 2],
    pub alpha_dot: [f64; 2],
    pub ndot_sq: f64,
}

/// Shared handle on a transported frame.
#[derive(Clone, Debug)]
pub struct Drive {
    pub frame: Arc<TransportedFrame>,
}

impl Drive {
    pub fn new(frame: TransportedFrame) -> Self {
        Drive { frame: Arc::new(frame) }
    }

    pub fn end_time(&self) -> f64 {
        self.frame.end_time()
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= -1e-12 && t <= self.end_time() * (1.0 + 1e-12) + 1e-12
    }

    pub fn sample(&self, t: f64) -> DriveSample {
        let p = self.frame.path.point(t).expect("t inside path");
        let e = self.frame.at(t);
        DriveSample {
            n: self.frame.components(&p.n),
            w: self.frame.components(&p.n.cross(&p.ndot)),
            alpha: [p.ndot.dot(&e[0]), p.ndot.dot(&e[1])],
            alpha_dot: [p.nddot.dot(&e[0]), p.nddot.dot(&e[1])],
            ndot_sq: p.ndot.norm_squared(),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let end = self.end_time();
        self.frame.path.breakpoints().into_iter().filter(|&b| b > 0.0 && b < end).collect()
    }
}

/// `Σ_k c_k(t) O_k`.
pub struct TimeDependentOperator {
    pub dp: usize,
    pub dc: usize,
    pub ops: Vec<Vec<Term>>,
    pub breakpoints: Vec<f64>,
    coeff: Arc<CoeffFn>,
    family: OnceLock<OperatorFamily>,
}

impl TimeDependentOperator {
    pub fn new(
        dp: usize,
        dc: usize,
        ops: Vec<Vec<Term>>,
        breakpoints: Vec<f64>,
        coeff: impl Fn(f64) -> Vec<C64> + Send + Sync + 'static,
    ) -> Self {
        TimeDependentOperator { dp, dc, ops, breakpoints, coeff: Arc::new(coeff), family: OnceLock::new() }
    }

    pub fn dim(&self) -> usize {
        self.dp * self.dc
    }

    pub fn coeffs(&self, t: f64) -> Vec<C64> {
        (self.coeff)(t)
    }

    pub fn dense_op(&self, k: usize) -> OperatorMatrix {
        let mut out = Array2::zeros((self.dim(), self.dim()));
        for (p, a) in &self.ops[k] {
            out = out + kron(p, a);
        }
        out
    }

    pub fn dense_at(&self, t: f64) -> OperatorMatrix {
        let c = self.coeffs(t);
        let mut out = Array2::zeros((self.dim(), self.dim()));
        for (k, ck) in c.iter().enumerate() {
            if *ck != ZERO {
                out = out + self.dense_op(k).mapv(|z| z * ck);
            }
        }
        out
    }

    pub fn family(&self) -> &OperatorFamily {
        self.family.get_or_init(|| {
            let ops: Vec<CsrMatrix> = self
                .ops
                .iter()
                .map(|terms| {
                    let mut sum = Array2::zeros((self.dim(), self.dim()));
                    for (p, a) in terms {
                        let k = CsrMatrix::kron(&CsrMatrix::from_dense(p), &CsrMatrix::from_dense(a));
                        // Few terms per operator; densifying keeps the merge trivial.
                        sum = sum + k.to_dense();
                    }
                    CsrMatrix::from_dense(&sum)
                })
                .collect();
            OperatorFamily::new(&ops)
        })
    }

    /// Sparse `Σ_j w_j H(t_j)`.
    pub fn sparse_combination(&self, nodes: &[(f64, f64)]) -> CsrMatrix {
        let mut c = vec![ZERO; self.ops.len()];
        for &(t, w) in nodes {
            for (ci, x) in c.iter_mut().zip(self.coeffs(t)) {
                *ci += x * w;
            }
        }
        self.family().combine(&c)
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Multi-indices (k₁, k₂, k₃) with |k| ≤ deg.
fn multi_indices(deg: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for j in 0..=deg {
        for k1 in (0..=j).rev() {
            for k2 in (0..=j - k1).rev() {
                out.push([k1, k2, j - k1 - k2]);
            }
        }
    }
    out
}

/// (1/2m)(p − eA(t))² + V(r·n(t) − L) with A = ½B n(t) × r.
pub fn lab_hamiltonian(f: &Factors, params: &PhysicalParams, drive: &Drive) -> TimeDependentOperator {
    let m = params.m;
    let kin: Vec<Term> = vec![
        (f.p1.dot(&f.p1) + f.p2.dot(&f.p2), f.id_c.clone()),
        (f.id_p.clone(), f.p3.dot(&f.p3)),
    ];
    let mut ops = vec![kin];
    for i in 0..3 {
        ops.push(f.angular_momentum_terms(i));
    }
    let deg = params.potential_degree();
    let monomials = multi_indices(deg);
    for al in &monomials {
        ops.push(vec![(f.planar_sym(al[0], al[1]), f.x3_power(al[2]))]);
    }
    let v = params.potential_coeffs();
    let (e, b, l) = (params.e, params.b_field, params.length);
    let drive = drive.clone();
    TimeDependentOperator::new(f.dp, f.dc, ops, drive.breakpoints(), move |t| {
        let n = drive.sample(t).n;
        let mut c = vec![re(1.0 / (2.0 * m))];
        for i in 0..3 {
            c.push(re(-e * b / (2.0 * m) * n[i]));
        }
        for al in &monomials {
            let j = al[0] + al[1] + al[2];
            let mut coef = 0.0;
            if j == 2 {
                // |n × x|² = Σ x_k² (1 − n_k²) − Σ_{k≠k'} n_k n_k' x_k x_k'.
                let q = match al.iter().position(|&k| k == 2) {
                    Some(k) => 1.0 - n[k] * n[k],
                    None => {
                        let ks: Vec<usize> = (0..3).filter(|&k| al[k] == 1).collect();
                        -2.0 * n[ks[0]] * n[ks[1]]
                    }
                };
                coef += e * e * b * b / (8.0 * m) * q;
            }
            let multinom = factorial(j) / al.iter().map(|&k| factorial(k)).product::<f64>();
            let npow: f64 = (0..3).map(|k| n[k].powi(al[k] as i32)).product();
            for (d, &vd) in v.iter().enumerate().skip(j) {
                if vd != 0.0 {
                    coef += vd * binom(d, j) * (-l).powi((d - j) as i32) * multinom * npow;
                }
            }
            c.push(re(coef));
        }
        c
    })
}

/// H₁ = H_B + p₃²/2m + V(ξ₀) + α₂J₁ − α₁J₂.
pub fn rotating_hamiltonian(f: &Factors, drive: &Drive) -> TimeDependentOperator {
    let ops = vec![
        vec![(f.hb.clone(), f.id_c.clone()), (f.id_p.clone(), f.h_axial.clone())],
        f.angular_momentum_terms(0),
        f.angular_momentum_terms(1),
    ];
    let drive = drive.clone();
    TimeDependentOperator::new(f.dp, f.dc, ops, drive.breakpoints(), move |t| {
        let s = drive.sample(t);
        vec![re(1.0), re(s.alpha[1]), re(-s.alpha[0])]
    })
}

/// (n×ṅ)·J, the generator of the frame rotation R.
pub fn rotation_generator(f: &Factors, drive: &Drive) -> TimeDependentOperator {
    let ops = (0..3).map(|i| f.angular_momentum_terms(i)).collect();
    let drive = drive.clone();
    TimeDependentOperator::new(f.dp, f.dc, ops, drive.breakpoints(), move |t| {
        let w = drive.sample(t).w;
        vec![re(w[0]), re(w[1]), re(w[2])]
    })
}

/// G = m(α₁x₁ + α₂x₂)(x₃ − 2L), so that g = exp(−iG).
pub fn gauge_generator(f: &Factors, params: &PhysicalParams, drive: &Drive) -> TimeDependentOperator {
    let shifted = &f.x3 - &f.id_c.mapv(|z| z * 2.0 * params.length);
    let ops = vec![vec![(f.x1.clone(), shifted.clone())], vec![(f.x2.clone(), shifted)]];
    let (m, drive) = (params.m, drive.clone());
    TimeDependentOperator::new(f.dp, f.dc, ops, drive.breakpoints(), move |t| {
        let a = drive.sample(t).alpha;
        vec![re(m * a[0]), re(m * a[1])]
    })
}

/// −ig⁻¹ġ = −m(α̇₁x₁ + α̇₂x₂)(x₃ − 2L).
pub fn gauge_rate_term(f: &Factors, params: &PhysicalParams, drive: &Drive) -> TimeDependentOperator {
    let shifted = &f.x3 - &f.id_c.mapv(|z| z * 2.0 * params.length);
    let ops = vec![vec![(f.x1.clone(), shifted.clone())], vec![(f.x2.clone(), shifted)]];
    let (m, drive) = (params.m, drive.clone());
    TimeDependentOperator::new(f.dp, f.dc, ops, drive.breakpoints(), move |t| {
        let a = drive.sample(t).alpha_dot;
        vec![re(-m * a[0]), re(-m * a[1])]
    })
}

/// Planar quadratic terms −(m/2)(α·x)².
fn quadratic_ops(f: &Factors) -> Vec<OperatorMatrix> {
    vec![f.planar_sym(2, 0), f.planar_sym(1, 1), f.planar_sym(0, 2)]
}

fn quadratic_coeffs(m: f64, a: [f64; 2]) -> [C64; 3] {
    [re(-0.5 * m * a[0] * a[0]), re(-m * a[0] * a[1]), re(-0.5 * m * a[1] * a[1])]
}

/// Planar operators with an axial factor of dimension `dc_out` (identity).
fn planar_terms(ops: Vec<OperatorMatrix>, id: &OperatorMatrix) -> Vec<Vec<Term>> {
    ops.into_iter().map(|p| vec![(p, id.clone())]).collect()
}

/// H₂d on the planar factor alone when `full` is false, or embedded as H₂d ⊗ I.
pub fn h2d(f: &Factors, params: &PhysicalParams, drive: &Drive, full: bool) -> TimeDependentOperator {
    let id = if full { f.id_c.clone() } else { identity(1) };
    let mut ops = vec![f.hb.clone(), f.a1.clone(), f.a2.clone(), f.x1.clone(), f.x2.clone()];
    ops.extend(quadratic_ops(f));
    let dc = id.nrows();
    let (m, e, l, drive) = (params.m, params.e, params.length, drive.clone());
    TimeDependentOperator::new(f.dp, dc, planar_terms(ops, &id), drive.breakpoints(), move |t| {
        let s = drive.sample(t);
        let mut c = vec![
            re(1.0),
            re(-e * l * s.alpha[0]),
            re(-e * l * s.alpha[1]),
            re(m * l * s.alpha_dot[0]),
            re(m * l * s.alpha_dot[1]),
        ];
        c.extend(quadratic_coeffs(m, s.alpha));
        c
    })
}

/// H̃₂d = H_B − eLα_μA_μ on the planar factor.
pub fn h_tilde_2d(f: &Factors, params: &PhysicalParams, drive: &Drive) -> TimeDependentOperator {
    let ops = vec![f.hb.clone(), f.a1.clone(), f.a2.clone()];
    let (e, l, drive) = (params.e, params.length, drive.clone());
    TimeDependentOperator::new(f.dp, 1, planar_terms(ops, &identity(1)), drive.breakpoints(), move |t| {
        let a = drive.sample(t).alpha;
        vec![re(1.0), re(-e * l * a[0]), re(-e * l * a[1])]
    })
}

/// S(ε²) = mLα̇_μx_μ − (m/2)(α·x)² on the planar factor.
pub fn s_eps2(f: &Factors, params: &PhysicalParams, drive: &Drive) -> TimeDependentOperator {
    let mut ops = vec![f.x1.clone(), f.x2.clone()];
    ops.extend(quadratic_ops(f));
    let (m, l, drive) = (params.m, params.length, drive.clone());
    TimeDependentOperator::new(f.dp, 1, planar_terms(ops, &identity(1)), drive.breakpoints(), move |t| {
        let s = drive.sample(t);
        let mut c = vec![re(m * l * s.alpha_dot[0]), re(m * l * s.alpha_dot[1])];
        c.extend(quadratic_coeffs(m, s.alpha));
        c
    })
}

/// Planar part of the ξ coupling: −2α_μπ_μ − eα_μA_μ − mα̇_μx_μ.
pub fn xi_coupling(f: &Factors, params: &PhysicalParams, s: &DriveSample) -> OperatorMatrix {
    let (m, e) = (params.m, params.e);
    let mut q = Array2::zeros((f.dp, f.dp));
    for mu in 0..2 {
        q = q + f.pi(mu).mapv(|z| z * (-2.0 * s.alpha[mu]))
            + f.vec_potential(mu).mapv(|z| z * (-e * s.alpha[mu]))
            + f.x(mu).mapv(|z| z * (-m * s.alpha_dot[mu]));
    }
    q
}

/// H₀ = H₁d + H₂d + H_ξ₀ as one family.
pub fn h0_decomposed(f: &Factors, params: &PhysicalParams, drive: &Drive) -> TimeDependentOperator {
    let ic = &f.id_c;
    let xi2 = f.xi0.dot(&f.xi0);
    let mut ops: Vec<Vec<Term>> = vec![
        vec![(f.id_p.clone(), f.h_axial.clone())],
        vec![(f.id_p.clone(), ic.clone())],
        vec![(f.hb.clone(), ic.clone())],
        vec![(f.a1.clone(), ic.clone())],
        vec![(f.a2.clone(), ic.clone())],
        vec![(f.x1.clone(), ic.clone())],
        vec![(f.x2.clone(), ic.clone())],
    ];
    ops.extend(quadratic_ops(f).into_iter().map(|p| vec![(p, ic.clone())]));
    for mu in 0..2 {
        ops.push(vec![(f.pi(mu).clone(), f.xi0.clone())]);
        ops.push(vec![(f.vec_potential(mu).clone(), f.xi0.clone())]);
        ops.push(vec![(f.x(mu).clone(), f.xi0.clone())]);
    }
    ops.push(vec![(f.id_p.clone(), f.xi0.clone())]);
    ops.push(vec![(f.id_p.clone(), xi2)]);
    let (m, e, l, drive) = (params.m, params.e, params.length, drive.clone());
    TimeDependentOperator::new(f.dp, f.dc, ops, drive.breakpoints(), move |t| {
        let s = drive.sample(t);
        let mut c = vec![
            re(1.0),
            re(-0.5 * m * l * l * s.ndot_sq),
            re(1.0),
            re(-e * l * s.alpha[0]),
            re(-e * l * s.alpha[1]),
            re(m * l * s.alpha_dot[0]),
            re(m * l * s.alpha_dot[1]),
        ];
        c.extend(quadratic_coeffs(m, s.alpha));
        for mu in 0..2 {
            c.push(re(-2.0 * s.alpha[mu]));
            c.push(re(-e * s.alpha[mu]));
            c.push(re(-m * s.alpha_dot[mu]));
        }
        c.push(re(-m * l * s.ndot_sq));
        c.push(re(1.5 * m * s.ndot_sq));
        c
    })
}

/// H₁d = p₃²/2m + V(ξ₀) − (m/2)L²ṅ², embedded as I ⊗ H₁d.
pub fn h1d(f: &Factors, params: &PhysicalParams, drive: &Drive) -> TimeDependentOperator {
    let ops = vec![vec![(f.id_p.clone(), f.h_axial.clone())], vec![(f.id_p.clone(), f.id_c.clone())]];
    let (m, l, drive) = (params.m, params.length, drive.clone());
    TimeDependentOperator::new(f.dp, f.dc, ops, drive.breakpoints(), move |t| {
        vec![re(1.0), re(-0.5 * m * l * l * drive.sample(t).ndot_sq)]
    })
}

/// H_ξ(t) as planar ⊗ axial terms, given the axial factor of U₁d(t).
pub fn h_xi_terms(f: &Factors, params: &PhysicalParams, s: &DriveSample, u1d_axial: &OperatorMatrix) -> KronSum {
    let xi = dagger(u1d_axial).dot(&f.xi0).dot(u1d_axial);
    let xi2 = xi.dot(&xi);
    let (m, l) = (params.m, params.length);
    let mut ks = KronSum::new(f.dp, f.dc);
    ks.push(xi_coupling(f, params, s), xi.clone());
    ks.push_axial(xi.mapv(|z| z * (-m * l * s.ndot_sq)) + xi2.mapv(|z| z * (1.5 * m * s.ndot_sq)));
    ks
}

// Dense builders at a single time.

fn check_time(drive: &Drive, t: f64) -> Result<(), HamiltonianError> {
    if drive.covers(t) {
        Ok(())
    } else {
        Err(HamiltonianError::OutsideFrame(t))
    }
}

pub fn build_lab_hamiltonian(
    ops: &OperatorSet,
    params: &PhysicalParams,
    drive: &Drive,
    t: f64,
) -> Result<OperatorMatrix, HamiltonianError> {
    check_time(drive, t)?;
    Ok(lab_hamiltonian(&ops.factors, params, drive).dense_at(t))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RotatingForm {
    Angular,
    Kinematic,
}

pub fn build_rotating_hamiltonian(
    ops: &OperatorSet,
    params: &PhysicalParams,
    drive: &Drive,
    t: f64,
    form: RotatingForm,
) -> Result<OperatorMatrix, HamiltonianError> {
    check_time(drive, t)?;
    Ok(match form {
        RotatingForm::Angular => rotating_hamiltonian(&ops.factors, drive).dense_at(t),
        RotatingForm::Kinematic => {
            let s = drive.sample(t);
            let (m, e) = (params.m, params.e);
            let n = ops.dim();
            let id = identity(n);
            let f = &ops.factors;
            let a_full = [f.planar_full(&f.a1), f.planar_full(&f.a2)];
            let x = ops.x();
            let p = ops.p();
            let alpha_x = x[0].mapv(|z| z * s.alpha[0]) + x[1].mapv(|z| z * s.alpha[1]);
            let mut h = Array2::zeros((n, n));
            for mu in 0..2 {
                let k = p[mu] - &a_full[mu].mapv(|z| z * e) - x[2].mapv(|z| z * (m * s.alpha[mu]));
                h = h + k.dot(&k).mapv(|z| z / (2.0 * m));
                h = h - a_full[mu].dot(x[2]).mapv(|z| z * (e * s.alpha[mu]));
            }
            let k3 = p[2] + &alpha_x.mapv(|z| z * m);
            h = h + k3.dot(&k3).mapv(|z| z / (2.0 * m));
            let vc = x[2].dot(x[2]).mapv(|z| z * (-0.5 * m * s.ndot_sq)) - alpha_x.dot(&alpha_x).mapv(|z| z * 0.5 * m);
            h = h + vc + f.axial_full(&f.v_axial);
            let _ = id;
            h
        }
    })
}

/// g(t) = exp(−iG(t)) and the closed form of −ig⁻¹ġ.
pub fn build_gauge_unitary(
    ops: &OperatorSet,
    params: &PhysicalParams,
    drive: &Drive,
    t: f64,
) -> Result<(OperatorMatrix, OperatorMatrix), HamiltonianError> {
    check_time(drive, t)?;
    let g = expm(&gauge_generator(&ops.factors, params, drive).dense_at(t).mapv(|z| -IM * z));
    let term = gauge_rate_term(&ops.factors, params, drive).dense_at(t);
    Ok((g, term))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum H0Form {
    Conjugated,
    Closed,
    Decomposed,
}

pub fn build_h0(
    ops: &OperatorSet,
    params: &PhysicalParams,
    drive: &Drive,
    t: f64,
    form: H0Form,
) -> Result<OperatorMatrix, HamiltonianError> {
    check_time(drive, t)?;
    let f = &ops.factors;
    Ok(match form {
        H0Form::Conjugated => {
            let (g, term) = build_gauge_unitary(ops, params, drive, t)?;
            let h1 = build_rotating_hamiltonian(ops, params, drive, t, RotatingForm::Angular)?;
            dagger(&g).dot(&h1).dot(&g) + term
        }
        H0Form::Closed => {
            let s = drive.sample(t);
            let (m, e, l) = (params.m, params.e, params.length);
            let n = ops.dim();
            let a_full = [f.planar_full(&f.a1), f.planar_full(&f.a2)];
            let x = ops.x();
            let p = ops.p();
            let xi0 = f.axial_full(&f.xi0);
            let alpha_x = x[0].mapv(|z| z * s.alpha[0]) + x[1].mapv(|z| z * s.alpha[1]);
            let mut h = Array2::zeros((n, n));
            for mu in 0..2 {
                let big_pi = p[mu] - &a_full[mu].mapv(|z| z * e) - xi0.mapv(|z| z * (2.0 * m * s.alpha[mu]));
                h = h + big_pi.dot(&big_pi).mapv(|z| z / (2.0 * m));
                h = h - a_full[mu].dot(x[2]).mapv(|z| z * (e * s.alpha[mu]));
            }
            let vc = x[2].dot(x[2]).mapv(|z| z * (-0.5 * m * s.ndot_sq)) - alpha_x.dot(&alpha_x).mapv(|z| z * 0.5 * m);
            let shifted = x[2] - &identity(n).mapv(|z| z * 2.0 * l);
            let adot_x = x[0].mapv(|z| z * s.alpha_dot[0]) + x[1].mapv(|z| z * s.alpha_dot[1]);
            let rate = adot_x.dot(&shifted).mapv(|z| -m * z);
            h + vc + rate + f.axial_full(&f.h_axial)
        }
        H0Form::Decomposed => h0_decomposed(f, params, drive).dense_at(t),
    })
}

/// H_ξ(t) from U₁d(t), given either as its axial factor or as a full matrix.
pub fn build_h_xi(
    ops: &OperatorSet,
    params: &PhysicalParams,
    drive: &Drive,
    t: f64,
    u1d: &OperatorMatrix,
) -> Result<OperatorMatrix, HamiltonianError> {
    check_time(drive, t)?;
    let f = &ops.factors;
    let r = unitarity_residual(u1d);
    if r > 1e-8 {
        return Err(HamiltonianError::NotUnitary(r));
    }
    let s = drive.sample(t);
    if u1d.nrows() == f.dc {
        return Ok(h_xi_terms(f, params, &s, u1d).to_dense());
    }
    if u1d.nrows() != ops.dim() {
        return Err(HamiltonianError::Dimension(format!("U1d has dimension {}", u1d.nrows())));
    }
    let xi = dagger(u1d).dot(&f.axial_full(&f.xi0)).dot(u1d);
    let (m, l) = (params.m, params.length);
    let q = f.planar_full(&xi_coupling(f, params, &s));
    Ok(q.dot(&xi) + xi.mapv(|z| z * (-m * l * s.ndot_sq)) + xi.dot(&xi).mapv(|z| z * (1.5 * m * s.ndot_sq)))
}

/// Every Hamiltonian at one time, dense.
#[derive(Clone, Debug)]
pub struct HamiltonianBundle {
    pub t: f64,
    pub h_lab: OperatorMatrix,
    pub h1: OperatorMatrix,
    pub h1_kinematic: OperatorMatrix,
    pub g: OperatorMatrix,
    pub g_dot_term: OperatorMatrix,
    pub h0_conjugated: OperatorMatrix,
    pub h0_closed: OperatorMatrix,
    pub h1d: OperatorMatrix,
    pub h2d: OperatorMatrix,
    pub hxi0: OperatorMatrix,
    pub s_eps2: OperatorMatrix,
    pub htilde2d: OperatorMatrix,
    pub hb: OperatorMatrix,
}

impl HamiltonianBundle {
    pub fn build(ops: &OperatorSet, params: &PhysicalParams, drive: &Drive, t: f64) -> Result<Self, HamiltonianError> {
        check_time(drive, t)?;
        let f = &ops.factors;
        let (g, g_dot_term) = build_gauge_unitary(ops, params, drive, t)?;
        let h1d_m = h1d(f, params, drive).dense_at(t);
        let h2d_m = h2d(f, params, drive, true).dense_at(t);
        let h0_dec = h0_decomposed(f, params, drive).dense_at(t);
        Ok(HamiltonianBundle {
            t,
            h_lab: build_lab_hamiltonian(ops, params, drive, t)?,
            h1: build_rotating_hamiltonian(ops, params, drive, t, RotatingForm::Angular)?,
            h1_kinematic: build_rotating_hamiltonian(ops, params, drive, t, RotatingForm::Kinematic)?,
            h0_conjugated: build_h0(ops, params, drive, t, H0Form::Conjugated)?,
            h0_closed: build_h0(ops, params, drive, t, H0Form::Closed)?,
            hxi0: &h0_dec - &h1d_m - &h2d_m,
            h1d: h1d_m,
            h2d: h2d_m,
            s_eps2: f.planar_full(&s_eps2(f, params, drive).dense_at(t)),
            htilde2d: f.planar_full(&h_tilde_2d(f, params, drive).dense_at(t)),
            hb: f.planar_full(&f.hb),
            g,
            g_dot_term,
        })
    }

    /// Largest Hermiticity residual over the Hermitian members.
    pub fn max_hermiticity_residual(&self) -> f64 {
        [
            &self.h_lab,
            &self.h1,
            &self.h1_kinematic,
            &self.h0_conjugated,
            &self.h0_closed,
            &self.h1d,
            &self.h2d,
            &self.hxi0,
            &self.s_eps2,
            &self.htilde2d,
            &self.hb,
        ]
        .iter()
        .map(|h| frobenius((*h - &dagger(h)).view()) / frobenius(h.view()).max(1e-300))
        .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{transport_frame, uniform_grid, SpherePath};
    use crate::hilbert::{build_operator_set, BasisConfig};

    fn setup(theta: f64) -> (OperatorSet, PhysicalParams, Drive) {
        let params = PhysicalParams::harmonic(1.0, -1.0, 1.0, 1.0, 25.0);
        let ops = build_operator_set(&params, &BasisConfig::new(3, 3, 4, 1)).unwrap();
        let path = SpherePath::cone(theta, 0.01);
        let e1 = if theta == 0.0 { Some([1.0, 0.0, 0.0]) } else { None };
        let frame = transport_frame(&path, &uniform_grid(40.0, 400), 1e-10, e1).unwrap();
        (ops, params, Drive::new(frame))
    }

    #[test]
    fn static_field_reduces_to_landau_plus_axial() {
        let (ops, params, drive) = setup(0.0);
        let f = &ops.factors;
        let want = f.planar_full(&f.hb) + f.axial_full(&f.h_axial);
        for form in [RotatingForm::Angular, RotatingForm::Kinematic] {
            let h1 = build_rotating_hamiltonian(&ops, &params, &drive, 3.0, form).unwrap();
            assert!(frobenius((&h1 - &want).view()) < 1e-12);
        }
        let lab = build_lab_hamiltonian(&ops, &params, &drive, 3.0).unwrap();
        let p = &ops.interior;
        assert!(frobenius(p.dot(&(&lab - &want)).dot(p).view()) < 1e-10);
    }

    #[test]
    fn h1d_commutes_with_h2d() {
        let (ops, params, drive) = setup(1.0);
        let b = HamiltonianBundle::build(&ops, &params, &drive, 7.0).unwrap();
        let c = b.h1d.dot(&b.h2d) - b.h2d.dot(&b.h1d);
        assert!(frobenius(c.view()) < 1e-12);
        assert!(b.max_hermiticity_residual() < 1e-12);
    }

    #[test]
    fn outside_frame_is_an_error() {
        let (ops, params, drive) = setup(1.0);
        assert!(build_lab_hamiltonian(&ops, &params, &drive, 80.0).is_err());
    }

    #[test]
    fn multi_index_count() {
        assert_eq!(multi_indices(2).len(), 10);
        assert_eq!(multi_indices(4).len(), 35);
    }
}
