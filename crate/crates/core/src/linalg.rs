//! Dense and sparse complex linear algebra used by every other module.
//!
//! Operators are `Array2<Complex64>` in row-major layout. Hamiltonians that are
//! applied many times are compressed into CSR form, and anything with a
//! planar ⊗ axial structure can be applied as a [`KronSum`] without ever forming
//! the full matrix.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use std::sync::OnceLock;

pub type C64 = Complex64;
pub type OperatorMatrix = Array2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const IM: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn identity(n: usize) -> OperatorMatrix {
    Array2::from_diag_elem(n, ONE)
}

pub fn zeros(n: usize) -> OperatorMatrix {
    Array2::zeros((n, n))
}

pub fn dagger(a: &OperatorMatrix) -> OperatorMatrix {
    a.t().mapv(|z| z.conj())
}

pub fn kron(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            let mut blk = out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            Zip::from(&mut blk).and(b).for_each(|o, &x| *o = aij * x);
        }
    }
    out
}

pub fn frobenius(a: ArrayView2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Maximum absolute column sum. An upper bound on the spectral norm of a
/// Hermitian matrix.
pub fn one_norm(a: &OperatorMatrix) -> f64 {
    a.axis_iter(Axis(1))
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    a.dot(b) - b.dot(a)
}

pub fn hermiticity_residual(a: &OperatorMatrix) -> f64 {
    frobenius((a - &dagger(a)).view()) / frobenius(a.view()).max(1e-300)
}

pub fn unitarity_residual(u: &OperatorMatrix) -> f64 {
    let n = u.ncols();
    frobenius((dagger(u).dot(u) - identity(n)).view())
}

/// `Σ coeffs[k]·X^k` by Horner evaluation.
pub fn matrix_polynomial(x: &OperatorMatrix, coeffs: &[f64]) -> OperatorMatrix {
    let n = x.nrows();
    let mut acc = zeros(n);
    for (k, &ck) in coeffs.iter().enumerate().rev() {
        acc = if k + 1 == coeffs.len() { zeros(n) } else { acc.dot(x) };
        acc.diag_mut().mapv_inplace(|d| d + re(ck));
    }
    acc
}

/// Matrix exponential by Taylor series with scaling and squaring.
///
/// The argument is scaled until its 1-norm is at most 1/2, where the series is
/// truncated once the next term falls below 1e-17 of the running sum.
pub fn expm(a: &OperatorMatrix) -> OperatorMatrix {
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a.mapv(|z| z / 2f64.powi(squarings));
    let mut sum = identity(n);
    let mut term = identity(n);
    for k in 1..=40 {
        term = term.dot(&scaled).mapv(|z| z / k as f64);
        sum += &term;
        if one_norm(&term) <= 1e-17 * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.dot(&sum);
    }
    sum
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &OperatorMatrix) -> (Vec<f64>, OperatorMatrix) {
    let n = a.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]].conj()));
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// `f(A)` for Hermitian `A` through its eigenbasis.
pub fn hermitian_function(a: &OperatorMatrix, f: impl Fn(f64) -> C64) -> OperatorMatrix {
    let (vals, vecs) = hermitian_eigen(a);
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let fv = f(v);
        scaled.column_mut(j).mapv_inplace(|z| z * fv);
    }
    scaled.dot(&dagger(&vecs))
}

/// Anything that can act on a block of column vectors.
pub trait LinearOp: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &OperatorMatrix) -> OperatorMatrix;
    /// Upper bound on the spectral norm.
    fn norm_bound(&self) -> f64;
}

impl LinearOp for OperatorMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, v: &OperatorMatrix) -> OperatorMatrix {
        self.dot(v)
    }
    fn norm_bound(&self) -> f64 {
        one_norm(self)
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
}

impl CsrMatrix {
    pub fn from_dense(a: &OperatorMatrix) -> Self {
        let n = a.nrows();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in a.outer_iter() {
            for (j, &z) in row.iter().enumerate() {
                if z != ZERO {
                    indices.push(j);
                    data.push(z);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { n, indptr, indices, data }
    }

    pub fn kron(a: &CsrMatrix, b: &CsrMatrix) -> Self {
        let n = a.n * b.n;
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for ia in 0..a.n {
            for ib in 0..b.n {
                for ka in a.indptr[ia]..a.indptr[ia + 1] {
                    for kb in b.indptr[ib]..b.indptr[ib + 1] {
                        indices.push(a.indices[ka] * b.n + b.indices[kb]);
                        data.push(a.data[ka] * b.data[kb]);
                    }
                }
                indptr.push(indices.len());
            }
        }
        CsrMatrix { n, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn to_dense(&self) -> OperatorMatrix {
        let mut out = zeros(self.n);
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out[[i, self.indices[k]]] += self.data[k];
            }
        }
        out
    }
}

impl LinearOp for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &OperatorMatrix) -> OperatorMatrix {
        let k = v.ncols();
        let v = v.as_standard_layout();
        let vs = v.as_slice().expect("standard layout");
        let mut out = vec![ZERO; self.n * k];
        let row = |(i, orow): (usize, &mut [C64])| {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let a = self.data[p];
                let vrow = &vs[self.indices[p] * k..(self.indices[p] + 1) * k];
                for (o, &x) in orow.iter_mut().zip(vrow) {
                    *o += a * x;
                }
            }
        };
        // Thread fan-out only pays off for large blocks.
        if self.nnz() * k > 200_000 {
            out.par_chunks_mut(k.max(1)).enumerate().for_each(row);
        } else {
            out.chunks_mut(k.max(1)).enumerate().for_each(row);
        }
        Array2::from_shape_vec((self.n, k), out).expect("shape")
    }

    fn norm_bound(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for (&j, z) in self.indices.iter().zip(&self.data) {
            col[j] += z.norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }
}

/// A fixed list of operators stored on the union of their sparsity patterns,
/// so that any linear combination is assembled in O(nnz · terms).
#[derive(Clone, Debug)]
pub struct OperatorFamily {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Vec<C64>>,
}

impl OperatorFamily {
    pub fn new(ops: &[CsrMatrix]) -> Self {
        assert!(!ops.is_empty(), "empty operator family");
        let n = ops[0].n;
        assert!(ops.iter().all(|o| o.n == n), "dimension mismatch in family");
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        for i in 0..n {
            let mut cols: Vec<usize> = ops
                .iter()
                .flat_map(|o| o.indices[o.indptr[i]..o.indptr[i + 1]].iter().copied())
                .collect();
            cols.sort_unstable();
            cols.dedup();
            indices.extend(cols);
            indptr.push(indices.len());
        }
        let values = ops
            .iter()
            .map(|o| {
                let mut v = vec![ZERO; indices.len()];
                for i in 0..n {
                    let row = &indices[indptr[i]..indptr[i + 1]];
                    for k in o.indptr[i]..o.indptr[i + 1] {
                        let pos = row.binary_search(&o.indices[k]).expect("in pattern");
                        v[indptr[i] + pos] += o.data[k];
                    }
                }
                v
            })
            .collect();
        OperatorFamily { n, indptr, indices, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn combine(&self, coeffs: &[C64]) -> CsrMatrix {
        assert_eq!(coeffs.len(), self.values.len(), "coefficient count");
        let mut data = vec![ZERO; self.indices.len()];
        for (c, vals) in coeffs.iter().zip(&self.values) {
            if *c == ZERO {
                continue;
            }
            for (d, v) in data.iter_mut().zip(vals) {
                *d += c * v;
            }
        }
        CsrMatrix { n: self.n, indptr: self.indptr.clone(), indices: self.indices.clone(), data }
    }
}

/// `Σ_k P_k ⊗ A_k` with dense factors, applied without forming the product.
///
/// Terms whose planar or axial factor is the identity are kept in separate
/// sums so that they cost one multiplication each.
#[derive(Clone, Debug, Default)]
pub struct KronSum {
    pub dp: usize,
    pub dc: usize,
    pub terms: Vec<(OperatorMatrix, OperatorMatrix)>,
    pub planar: Option<OperatorMatrix>,
    pub axial: Option<OperatorMatrix>,
    dense: OnceLock<OperatorMatrix>,
}

/// Below this total dimension a materialised matrix is faster to apply.
const KRON_DENSE_LIMIT: usize = 256;

impl KronSum {
    pub fn new(dp: usize, dc: usize) -> Self {
        KronSum { dp, dc, ..Default::default() }
    }

    pub fn push(&mut self, p: OperatorMatrix, a: OperatorMatrix) {
        assert_eq!(p.dim(), (self.dp, self.dp));
        assert_eq!(a.dim(), (self.dc, self.dc));
        self.terms.push((p, a));
        self.dense = OnceLock::new();
    }

    /// Add `P ⊗ I`.
    pub fn push_planar(&mut self, p: OperatorMatrix) {
        assert_eq!(p.dim(), (self.dp, self.dp));
        self.planar = Some(match self.planar.take() {
            Some(q) => q + p,
            None => p,
        });
        self.dense = OnceLock::new();
    }

    /// Add `I ⊗ A`.
    pub fn push_axial(&mut self, a: OperatorMatrix) {
        assert_eq!(a.dim(), (self.dc, self.dc));
        self.axial = Some(match self.axial.take() {
            Some(b) => b + a,
            None => a,
        });
        self.dense = OnceLock::new();
    }

    pub fn to_dense(&self) -> OperatorMatrix {
        let mut out = zeros(self.dp * self.dc);
        for (p, a) in &self.terms {
            out = out + kron(p, a);
        }
        if let Some(p) = &self.planar {
            out = out + kron(p, &identity(self.dc));
        }
        if let Some(a) = &self.axial {
            out = out + kron(&identity(self.dp), a);
        }
        out
    }
}

/// (dp·dc, k) → (dc, dp·k) and back.
fn to_axial_major(v: &OperatorMatrix, dp: usize, dc: usize) -> OperatorMatrix {
    let k = v.ncols();
    Array2::from_shape_fn((dc, dp * k), |(c, r)| v[[(r / k) * dc + c, r % k]])
}

fn from_axial_major(w: &OperatorMatrix, dp: usize, dc: usize, k: usize) -> OperatorMatrix {
    Array2::from_shape_fn((dp, dc * k), |(i, r)| w[[r / k, i * k + r % k]])
}

impl LinearOp for KronSum {
    fn dim(&self) -> usize {
        self.dp * self.dc
    }

    fn apply(&self, v: &OperatorMatrix) -> OperatorMatrix {
        let (dp, dc, k) = (self.dp, self.dc, v.ncols());
        if dp * dc <= KRON_DENSE_LIMIT {
            return self.dense.get_or_init(|| self.to_dense()).dot(v);
        }
        let natural = v.as_standard_layout().into_owned().into_shape_with_order((dp, dc * k)).expect("shape");
        let mut out: OperatorMatrix = Array2::zeros((dp, dc * k));
        if let Some(p) = &self.planar {
            out = out + p.dot(&natural);
        }
        if !self.terms.is_empty() || self.axial.is_some() {
            let vt = to_axial_major(v, dp, dc);
            if let Some(a) = &self.axial {
                out = out + from_axial_major(&a.dot(&vt), dp, dc, k);
            }
            for (p, a) in &self.terms {
                out = out + p.dot(&from_axial_major(&a.dot(&vt), dp, dc, k));
            }
        }
        out.into_shape_with_order((dp * dc, k)).expect("shape")
    }

    fn norm_bound(&self) -> f64 {
        self.terms.iter().map(|(p, a)| one_norm(p) * one_norm(a)).sum::<f64>()
            + self.planar.as_ref().map_or(0.0, one_norm)
            + self.axial.as_ref().map_or(0.0, one_norm)
    }
}

/// Weighted sum of borrowed operators.
pub struct LinearCombination<'a> {
    pub parts: Vec<(C64, &'a dyn LinearOp)>,
}

impl LinearOp for LinearCombination<'_> {
    fn dim(&self) -> usize {
        self.parts[0].1.dim()
    }
    fn apply(&self, v: &OperatorMatrix) -> OperatorMatrix {
        let mut out = Array2::zeros(v.raw_dim());
        for (c, op) in &self.parts {
            out = out + op.apply(v).mapv(|z| z * c);
        }
        out
    }
    fn norm_bound(&self) -> f64 {
        self.parts.iter().map(|(c, op)| c.norm() * op.norm_bound()).sum()
    }
}

/// `exp(z·H)·V` by truncated Taylor series on sub-steps with `|z|·‖H‖ ≤ 2`.
pub fn expm_action(op: &dyn LinearOp, z: C64, v: &OperatorMatrix) -> OperatorMatrix {
    let norm = z.norm() * op.norm_bound();
    let substeps = (norm / 2.0).ceil().max(1.0) as usize;
    let zs = z / substeps as f64;
    let mut out = v.clone();
    for _ in 0..substeps {
        let mut term = out.clone();
        let mut acc = out.clone();
        let mut small = 0;
        for k in 1..=60 {
            term = op.apply(&term).mapv(|x| x * zs / k as f64);
            acc += &term;
            let tn = frobenius(term.view());
            let an = frobenius(acc.view()).max(1e-300);
            if tn <= 1e-17 * an {
                small += 1;
                if small == 2 {
                    break;
                }
            } else {
                small = 0;
            }
        }
        out = acc;
    }
    out
}

/// Keep the listed rows of a block.
pub fn select_rows(v: &OperatorMatrix, rows: &[usize]) -> OperatorMatrix {
    v.select(Axis(0), rows)
}

/// Columns of the identity at the given indices.
pub fn unit_columns(n: usize, cols: &[usize]) -> OperatorMatrix {
    let mut out = Array2::zeros((n, cols.len()));
    for (j, &c) in cols.iter().enumerate() {
        out[[c, j]] = ONE;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> OperatorMatrix {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = Array2::from_shape_fn((n, n), |_| C64::new(next(), next()));
        (&a + &dagger(&a)).mapv(|z| z * 0.5)
    }

    #[test]
    fn expm_matches_eigen_exponential() {
        let h = random_hermitian(12, 3).mapv(|z| z * 7.0);
        let a = h.mapv(|z| -IM * z);
        let direct = expm(&a);
        let eig = hermitian_function(&h, |x| (-IM * x).exp());
        assert!(frobenius((direct - eig).view()) < 1e-11);
    }

    #[test]
    fn expm_of_zero_is_identity() {
        assert_eq!(expm(&zeros(5)), identity(5));
    }

    #[test]
    fn expm_action_matches_dense() {
        let h = random_hermitian(20, 9);
        let v = unit_columns(20, &[0, 3, 7]);
        let z = C64::new(0.0, -3.5);
        let dense = expm(&h.mapv(|x| x * z)).dot(&v);
        let sparse = CsrMatrix::from_dense(&h);
        let act = expm_action(&sparse, z, &v);
        assert!(frobenius((dense - act).view()) < 1e-12);
    }

    #[test]
    fn kron_sum_apply_matches_dense() {
        let p = random_hermitian(4, 1);
        let a = random_hermitian(3, 2);
        let q = random_hermitian(4, 5);
        let mut ks = KronSum::new(4, 3);
        ks.push(p.clone(), a.clone());
        ks.push(q.clone(), identity(3));
        ks.push_planar(q.clone());
        ks.push_axial(a.clone());
        let dense = kron(&p, &a) + kron(&q, &identity(3)).mapv(|z| z * 2.0) + kron(&identity(4), &a);
        assert!(frobenius((ks.to_dense() - &dense).view()) < 1e-13);
        let v = unit_columns(12, &[0, 5, 11]) + unit_columns(12, &[1, 1, 2]).mapv(|z| z * IM);
        assert!(frobenius((dense.dot(&v) - ks.apply(&v)).view()) < 1e-13);
    }

    #[test]
    fn family_combination_and_kron() {
        let p = random_hermitian(3, 4);
        let a = random_hermitian(2, 6);
        let k1 = CsrMatrix::kron(&CsrMatrix::from_dense(&p), &CsrMatrix::from_dense(&a));
        assert!(frobenius((k1.to_dense() - kron(&p, &a)).view()) < 1e-14);
        let k2 = CsrMatrix::from_dense(&identity(6));
        let fam = OperatorFamily::new(&[k1.clone(), k2]);
        let c = fam.combine(&[re(2.0), C64::new(0.0, 1.0)]);
        let want = kron(&p, &a).mapv(|z| z * 2.0) + identity(6).mapv(|z| z * IM);
        assert!(frobenius((c.to_dense() - want).view()) < 1e-14);
    }

    #[test]
    fn polynomial_horner() {
        let x = random_hermitian(4, 8);
        let p = matrix_polynomial(&x, &[1.0, 2.0, 0.0, -1.5]);
        let want = identity(4) + x.mapv(|z| z * 2.0) - x.dot(&x).dot(&x).mapv(|z| z * 1.5);
        assert!(frobenius((p - want).view()) < 1e-12);
        assert_eq!(matrix_polynomial(&x, &[0.0]), zeros(4));
        assert_eq!(matrix_polynomial(&x, &[1.0]), identity(4));
    }
}
