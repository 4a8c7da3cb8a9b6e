//! Truncated Fock space |n_a⟩⊗|n_b⟩⊗|n_c⟩ and the elementary operators on it.
//!
//! The a- and b-ladders together form the planar factor and the axial ladder c
//! forms the axial factor. The full index is `(n_a(Nb+1)+n_b)(Nc+1)+n_c`, so
//! every full-space operator is a sum of Kronecker products planar ⊗ axial.

use crate::linalg::{dagger, identity, kron, matrix_polynomial, re, OperatorMatrix, IM};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIM_CAP: usize = 20_000;
pub const DIM_CAP_ENV: &str = "LANDAU_FACTOR_DIM_CAP";

#[derive(Debug, Error)]
pub enum HilbertError {
    #[error("invalid physical parameters: {0}")]
    Params(String),
    #[error("invalid basis: {0}")]
    Basis(String),
    #[error("dimension {dim} exceeds the cap {cap} (set {DIM_CAP_ENV} to raise it)")]
    DimensionCap { dim: usize, cap: usize },
}

/// Dimension cap from the environment, falling back to the default.
pub fn dimension_cap() -> usize {
    std::env::var(DIM_CAP_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_DIM_CAP)
}

fn zero() -> f64 {
    0.0
}

/// Units with ħ = 1. The confinement is V(u) = v₂u² + v₃u³ + v₄u⁴.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    pub m: f64,
    pub e: f64,
    pub b_field: f64,
    pub length: f64,
    pub v2: f64,
    #[serde(default = "zero")]
    pub v3: f64,
    #[serde(default = "zero")]
    pub v4: f64,
}

impl PhysicalParams {
    pub fn harmonic(m: f64, e: f64, b_field: f64, length: f64, stiffness: f64) -> Self {
        PhysicalParams { m, e, b_field, length, v2: 0.5 * stiffness, v3: 0.0, v4: 0.0 }
    }

    pub fn validate(&self) -> Result<(), HilbertError> {
        let bad = |s: &str| Err(HilbertError::Params(s.into()));
        if !(self.m > 0.0) {
            return bad("m must be positive");
        }
        if !(self.e < 0.0) {
            return bad("e must be negative");
        }
        if !(self.b_field > 0.0) {
            return bad("B must be positive");
        }
        if !(self.length >= 0.0) {
            return bad("L must be non-negative");
        }
        if !(self.v2 > 0.0) {
            return bad("v2 must be positive");
        }
        if ![self.v3, self.v4].iter().all(|v| v.is_finite()) {
            return bad("potential coefficients must be finite");
        }
        Ok(())
    }

    /// ω = −eB/m.
    pub fn omega(&self) -> f64 {
        -self.e * self.b_field / self.m
    }

    /// l_B = 1/√(−2eB).
    pub fn l_b(&self) -> f64 {
        1.0 / (-2.0 * self.e * self.b_field).sqrt()
    }

    /// Frequency of the quadratic part of V, √(2v₂/m).
    pub fn harmonic_frequency(&self) -> f64 {
        (2.0 * self.v2 / self.m).sqrt()
    }

    /// Coefficients of V by power, index 0..=4.
    pub fn potential_coeffs(&self) -> [f64; 5] {
        [0.0, 0.0, self.v2, self.v3, self.v4]
    }

    pub fn potential_degree(&self) -> usize {
        if self.v4 != 0.0 {
            4
        } else if self.v3 != 0.0 {
            3
        } else {
            2
        }
    }
}

/// Interior margin, shared by all modes or given per mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Buffer {
    Uniform(usize),
    PerMode([usize; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub na: usize,
    pub nb: usize,
    pub nc: usize,
    pub buffer: Buffer,
    /// Frequency of the axial oscillator basis; defaults to √(2v₂/m).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axial_ref_freq: Option<f64>,
}

impl BasisConfig {
    pub fn new(na: usize, nb: usize, nc: usize, buffer: usize) -> Self {
        BasisConfig { na, nb, nc, buffer: Buffer::Uniform(buffer), axial_ref_freq: None }
    }

    /// Per-mode margins; a zero margin leaves that mode unrestricted.
    pub fn per_mode(na: usize, nb: usize, nc: usize, buffer: [usize; 3]) -> Self {
        BasisConfig { na, nb, nc, buffer: Buffer::PerMode(buffer), axial_ref_freq: None }
    }

    pub fn dim(&self) -> usize {
        (self.na + 1) * (self.nb + 1) * (self.nc + 1)
    }

    /// Buffers per mode; a mode with cutoff 0 is disabled and has no margin.
    pub fn buffers(&self) -> [usize; 3] {
        let b = match self.buffer {
            Buffer::Uniform(b) => [b; 3],
            Buffer::PerMode(b) => b,
        };
        let cut = [self.na, self.nb, self.nc];
        [0, 1, 2].map(|i| if cut[i] == 0 { 0 } else { b[i] })
    }

    pub fn validate(&self) -> Result<(), HilbertError> {
        let dim = self.dim();
        if dim < 8 {
            return Err(HilbertError::Basis(format!("dimension {dim} is below 8")));
        }
        let cap = dimension_cap();
        if dim > cap {
            return Err(HilbertError::DimensionCap { dim, cap });
        }
        let cut = [self.na, self.nb, self.nc];
        for (i, (&b, &n)) in self.buffers().iter().zip(&cut).enumerate() {
            let min = if matches!(self.buffer, Buffer::Uniform(_)) { 1 } else { 0 };
            if n > 0 && (b < min || b >= n) {
                return Err(HilbertError::Basis(format!(
                    "buffer {b} for mode {} must satisfy {min} <= buffer < cutoff {n}",
                    ["a", "b", "c"][i]
                )));
            }
        }
        if let Some(f) = self.axial_ref_freq {
            if !(f > 0.0) {
                return Err(HilbertError::Basis("axial_ref_freq must be positive".into()));
            }
        }
        Ok(())
    }

    /// Occupations (n_a, n_b, n_c) of a full-space index.
    pub fn occupations(&self, index: usize) -> (usize, usize, usize) {
        let dc = self.nc + 1;
        let db = self.nb + 1;
        (index / (db * dc), (index / dc) % db, index % dc)
    }

    pub fn index(&self, na: usize, nb: usize, nc: usize) -> usize {
        (na * (self.nb + 1) + nb) * (self.nc + 1) + nc
    }

    /// Basis states with every occupation at least `buffer` below its cutoff.
    pub fn interior_indices(&self) -> Vec<usize> {
        let [ba, bb, bc] = self.buffers();
        (0..self.dim())
            .filter(|&i| {
                let (a, b, c) = self.occupations(i);
                a + ba <= self.na && b + bb <= self.nb && c + bc <= self.nc
            })
            .collect()
    }

    /// Interior indices of the planar factor alone.
    pub fn planar_interior_indices(&self) -> Vec<usize> {
        let [ba, bb, _] = self.buffers();
        let db = self.nb + 1;
        (0..(self.na + 1) * db).filter(|&p| p / db + ba <= self.na && p % db + bb <= self.nb).collect()
    }
}

pub fn annihilation(n: usize) -> OperatorMatrix {
    let mut a = Array2::zeros((n + 1, n + 1));
    for k in 1..=n {
        a[[k - 1, k]] = re((k as f64).sqrt());
    }
    a
}

/// Operators on the planar (a ⊗ b) and axial (c) factors.
#[derive(Clone, Debug)]
pub struct Factors {
    pub basis: BasisConfig,
    pub dp: usize,
    pub dc: usize,
    pub a: OperatorMatrix,
    pub b: OperatorMatrix,
    pub pi1: OperatorMatrix,
    pub pi2: OperatorMatrix,
    pub eta1: OperatorMatrix,
    pub eta2: OperatorMatrix,
    pub x1: OperatorMatrix,
    pub x2: OperatorMatrix,
    pub p1: OperatorMatrix,
    pub p2: OperatorMatrix,
    /// A₁ = −Bx₂/2 and A₂ = Bx₁/2.
    pub a1: OperatorMatrix,
    pub a2: OperatorMatrix,
    /// (π₁² + π₂²)/2m.
    pub hb: OperatorMatrix,
    pub id_p: OperatorMatrix,
    pub c: OperatorMatrix,
    pub x3: OperatorMatrix,
    pub xi0: OperatorMatrix,
    pub p3: OperatorMatrix,
    /// V(ξ₀).
    pub v_axial: OperatorMatrix,
    /// p₃²/2m + V(ξ₀).
    pub h_axial: OperatorMatrix,
    pub id_c: OperatorMatrix,
}

impl Factors {
    pub fn new(params: &PhysicalParams, basis: &BasisConfig) -> Result<Self, HilbertError> {
        params.validate()?;
        basis.validate()?;
        let (da, db, dc) = (basis.na + 1, basis.nb + 1, basis.nc + 1);
        let (ia, ib) = (identity(da), identity(db));
        let a = kron(&annihilation(basis.na), &ib);
        let b = kron(&ia, &annihilation(basis.nb));
        let (ad, bd) = (dagger(&a), dagger(&b));
        let lb = params.l_b();
        let eb = params.e * params.b_field;
        let pi1 = (&a + &ad).mapv(|z| z / (2.0 * lb));
        let pi2 = (&a - &ad).mapv(|z| IM * z / (2.0 * lb));
        let eta1 = (&b + &bd).mapv(|z| z / (2.0 * lb));
        let eta2 = (&b - &bd).mapv(|z| -IM * z / (2.0 * lb));
        let x1 = (&eta2 - &pi2).mapv(|z| z / eb);
        let x2 = (&pi1 - &eta1).mapv(|z| z / eb);
        let p1 = (&pi1 + &eta1).mapv(|z| 0.5 * z);
        let p2 = (&pi2 + &eta2).mapv(|z| 0.5 * z);
        let a1 = x2.mapv(|z| -0.5 * params.b_field * z);
        let a2 = x1.mapv(|z| 0.5 * params.b_field * z);
        let hb = (pi1.dot(&pi1) + pi2.dot(&pi2)).mapv(|z| z / (2.0 * params.m));

        let oc = basis.axial_ref_freq.unwrap_or_else(|| params.harmonic_frequency());
        let c = annihilation(basis.nc);
        let cd = dagger(&c);
        let id_c = identity(dc);
        let xi0 = (&c + &cd).mapv(|z| z / (2.0 * params.m * oc).sqrt());
        let x3 = &xi0 + &id_c.mapv(|z| z * params.length);
        let p3 = (&cd - &c).mapv(|z| IM * (params.m * oc / 2.0).sqrt() * z);
        let v_axial = matrix_polynomial(&xi0, &params.potential_coeffs());
        let h_axial = p3.dot(&p3).mapv(|z| z / (2.0 * params.m)) + &v_axial;
        Ok(Factors {
            basis: basis.clone(),
            dp: da * db,
            dc,
            a,
            b,
            pi1,
            pi2,
            eta1,
            eta2,
            x1,
            x2,
            p1,
            p2,
            a1,
            a2,
            hb,
            id_p: identity(da * db),
            c,
            x3,
            xi0,
            p3,
            v_axial,
            h_axial,
            id_c,
        })
    }

    pub fn dim(&self) -> usize {
        self.dp * self.dc
    }

    /// Planar position component μ ∈ {0, 1}.
    pub fn x(&self, mu: usize) -> &OperatorMatrix {
        [&self.x1, &self.x2][mu]
    }

    pub fn pi(&self, mu: usize) -> &OperatorMatrix {
        [&self.pi1, &self.pi2][mu]
    }

    pub fn vec_potential(&self, mu: usize) -> &OperatorMatrix {
        [&self.a1, &self.a2][mu]
    }

    /// Average over all distinct orderings of n₁ copies of x₁ and n₂ copies of x₂.
    pub fn planar_sym(&self, n1: usize, n2: usize) -> OperatorMatrix {
        let total = n1 + n2;
        if total == 0 {
            return self.id_p.clone();
        }
        let mut acc: OperatorMatrix = Array2::zeros((self.dp, self.dp));
        let mut count = 0usize;
        for mask in 0u32..(1u32 << total) {
            if mask.count_ones() as usize != n2 {
                continue;
            }
            let mut prod = self.id_p.clone();
            for k in 0..total {
                prod = prod.dot(if mask & (1 << k) != 0 { &self.x2 } else { &self.x1 });
            }
            acc = acc + prod;
            count += 1;
        }
        acc.mapv(|z| z / count as f64)
    }

    /// Axial power x₃^k.
    pub fn x3_power(&self, k: usize) -> OperatorMatrix {
        let mut out = self.id_c.clone();
        for _ in 0..k {
            out = out.dot(&self.x3);
        }
        out
    }

    /// J_i as planar ⊗ axial terms.
    pub fn angular_momentum_terms(&self, i: usize) -> Vec<(OperatorMatrix, OperatorMatrix)> {
        match i {
            0 => vec![(self.x2.clone(), self.p3.clone()), (self.p2.mapv(|z| -z), self.x3.clone())],
            1 => vec![(self.p1.clone(), self.x3.clone()), (self.x1.mapv(|z| -z), self.p3.clone())],
            _ => vec![(self.x1.dot(&self.p2) - self.x2.dot(&self.p1), self.id_c.clone())],
        }
    }

    pub fn planar_full(&self, p: &OperatorMatrix) -> OperatorMatrix {
        kron(p, &self.id_c)
    }

    pub fn axial_full(&self, a: &OperatorMatrix) -> OperatorMatrix {
        kron(&self.id_p, a)
    }

    pub fn terms_full(&self, terms: &[(OperatorMatrix, OperatorMatrix)]) -> OperatorMatrix {
        let mut out = Array2::zeros((self.dim(), self.dim()));
        for (p, a) in terms {
            out = out + kron(p, a);
        }
        out
    }
}

/// Dense full-space operators.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub factors: Factors,
    pub a: OperatorMatrix,
    pub b: OperatorMatrix,
    pub c: OperatorMatrix,
    pub x1: OperatorMatrix,
    pub x2: OperatorMatrix,
    pub x3: OperatorMatrix,
    pub p1: OperatorMatrix,
    pub p2: OperatorMatrix,
    pub p3: OperatorMatrix,
    pub j1: OperatorMatrix,
    pub j2: OperatorMatrix,
    pub j3: OperatorMatrix,
    pub pi1: OperatorMatrix,
    pub pi2: OperatorMatrix,
    pub eta1: OperatorMatrix,
    pub eta2: OperatorMatrix,
    /// Diagonal projector onto the interior states.
    pub interior: OperatorMatrix,
    pub interior_indices: Vec<usize>,
}

impl OperatorSet {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn x(&self) -> [&OperatorMatrix; 3] {
        [&self.x1, &self.x2, &self.x3]
    }

    pub fn p(&self) -> [&OperatorMatrix; 3] {
        [&self.p1, &self.p2, &self.p3]
    }

    pub fn j(&self) -> [&OperatorMatrix; 3] {
        [&self.j1, &self.j2, &self.j3]
    }
}

pub fn build_operator_set(params: &PhysicalParams, basis: &BasisConfig) -> Result<OperatorSet, HilbertError> {
    let f = Factors::new(params, basis)?;
    let pf = |p: &OperatorMatrix| f.planar_full(p);
    let af = |a: &OperatorMatrix| f.axial_full(a);
    let interior_indices = basis.interior_indices();
    let mut interior = Array2::zeros((f.dim(), f.dim()));
    for &i in &interior_indices {
        interior[[i, i]] = re(1.0);
    }
    Ok(OperatorSet {
        a: pf(&f.a),
        b: pf(&f.b),
        c: af(&f.c),
        x1: pf(&f.x1),
        x2: pf(&f.x2),
        x3: af(&f.x3),
        p1: pf(&f.p1),
        p2: pf(&f.p2),
        p3: af(&f.p3),
        j1: f.terms_full(&f.angular_momentum_terms(0)),
        j2: f.terms_full(&f.angular_momentum_terms(1)),
        j3: f.terms_full(&f.angular_momentum_terms(2)),
        pi1: pf(&f.pi1),
        pi2: pf(&f.pi2),
        eta1: pf(&f.eta1),
        eta2: pf(&f.eta2),
        interior,
        interior_indices,
        factors: f,
    })
}

/// `Σ coeffs[k]·X^k`; at most five coefficients.
pub fn operator_polynomial(x: &OperatorMatrix, coeffs: &[f64]) -> OperatorMatrix {
    assert!(x.is_square(), "operator must be square");
    assert!(coeffs.len() <= 5, "at most quartic polynomials");
    matrix_polynomial(x, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, frobenius, hermitian_eigen};

    fn params() -> PhysicalParams {
        PhysicalParams::harmonic(1.0, -1.0, 2.0, 1.0, 4.0)
    }

    #[test]
    fn cyclotron_frequency_and_magnetic_length() {
        let p = params();
        assert_eq!(p.omega(), 2.0);
        assert_eq!(p.l_b(), 0.5);
    }

    #[test]
    fn ladder_algebra_on_interior() {
        let ops = build_operator_set(&params(), &BasisConfig::new(2, 2, 2, 1)).unwrap();
        assert_eq!(ops.dim(), 27);
        let p = &ops.interior;
        let id = identity(27);
        let r = p.dot(&(commutator(&ops.a, &dagger(&ops.a)) - &id)).dot(p);
        assert!(frobenius(r.view()) <= 1e-12);
    }

    #[test]
    fn basis_validation() {
        assert!(BasisConfig::new(1, 1, 0, 1).validate().is_err());
        assert!(BasisConfig::new(3, 3, 3, 3).validate().is_err());
        assert!(BasisConfig::new(3, 3, 0, 1).validate().is_ok());
        let per = BasisConfig { buffer: Buffer::PerMode([2, 2, 4]), ..BasisConfig::new(4, 4, 6, 0) };
        assert!(per.validate().is_ok());
        assert_eq!(per.interior_indices().len(), 27);
    }

    #[test]
    fn occupation_index_roundtrip() {
        let b = BasisConfig::new(3, 2, 4, 1);
        for i in 0..b.dim() {
            let (x, y, z) = b.occupations(i);
            assert_eq!(b.index(x, y, z), i);
        }
    }

    #[test]
    fn oscillator_ground_state_energy() {
        let p = PhysicalParams::harmonic(1.0, -1.0, 1.0, 0.0, 9.0);
        let f = Factors::new(&p, &BasisConfig::per_mode(1, 1, 24, [0, 0, 1])).unwrap();
        let (vals, _) = hermitian_eigen(&f.h_axial);
        assert!((vals[0] - 0.5 * 3.0).abs() < 1e-6);
    }

    #[test]
    fn planar_sym_is_symmetrised() {
        let f = Factors::new(&params(), &BasisConfig::per_mode(3, 3, 1, [1, 1, 0])).unwrap();
        let s = f.planar_sym(1, 1);
        let want = (f.x1.dot(&f.x2) + f.x2.dot(&f.x1)).mapv(|z| z * 0.5);
        assert!(frobenius((s - want).view()) < 1e-13);
    }
}
