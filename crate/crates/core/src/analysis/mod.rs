//! Metrics, phase extraction, power-law fits and the verification checks.

pub mod suite;

use crate::linalg::{frobenius, OperatorMatrix, C64};
use ndarray::{Array1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("need at least {need} points spanning a decade, got {got}")]
    TooFewPoints { need: usize, got: usize },
}

/// ‖P(A−B)P‖_F / max(‖PAP‖_F, 1e−300).
pub fn projected_distance(a: &OperatorMatrix, b: &OperatorMatrix, p: &OperatorMatrix) -> Result<f64, AnalysisError> {
    if a.dim() != b.dim() || a.dim() != p.dim() {
        return Err(AnalysisError::Dimension(a.nrows(), b.nrows()));
    }
    let num = frobenius(p.dot(&(a - b)).dot(p).view());
    let den = frobenius(p.dot(a).dot(p).view()).max(1e-300);
    Ok(num / den)
}

/// Same as [`projected_distance`] with a diagonal projector given by its indices.
pub fn index_distance(a: &OperatorMatrix, b: &OperatorMatrix, idx: &[usize]) -> f64 {
    let s = |m: &OperatorMatrix| m.select(Axis(0), idx).select(Axis(1), idx);
    let sa = s(a);
    frobenius((&sa - &s(b)).view()) / frobenius(sa.view()).max(1e-300)
}

/// Relative distance of two column blocks restricted to the given rows.
pub fn block_distance(a: &OperatorMatrix, b: &OperatorMatrix, rows: &[usize]) -> f64 {
    let sa = a.select(Axis(0), rows);
    frobenius((&sa - &b.select(Axis(0), rows)).view()) / frobenius(sa.view()).max(1e-300)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReading {
    pub phase: f64,
    /// ‖Uψ − e^{iφ}ψ‖ for the normalised state.
    pub residual: f64,
    pub meaningful: bool,
}

pub const EIGENVECTOR_THRESHOLD: f64 = 1e-4;

/// arg⟨ψ|U|ψ⟩ per state with the eigenvector residual.
pub fn phase_extract(u: &OperatorMatrix, states: &[Array1<C64>]) -> Vec<PhaseReading> {
    states
        .iter()
        .map(|psi| {
            let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let psi = psi.mapv(|z| z / norm);
            let upsi = u.dot(&psi);
            let overlap: C64 = psi.iter().zip(upsi.iter()).map(|(a, b)| a.conj() * b).sum();
            let phase = overlap.arg();
            let rot = C64::from_polar(1.0, phase);
            let residual = upsi.iter().zip(psi.iter()).map(|(a, b)| (a - rot * b).norm_sqr()).sum::<f64>().sqrt();
            PhaseReading { phase, residual, meaningful: residual <= EIGENVECTOR_THRESHOLD }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS of the log-residuals.
    pub residual: f64,
}

/// Least-squares fit of log y = log c + p log x.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> PowerLawFit {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let p = sxy / sxx;
    let c = my - p * mx;
    let residual = (lx.iter().zip(&ly).map(|(x, y)| (y - c - p * x).powi(2)).sum::<f64>() / n).sqrt();
    PowerLawFit { exponent: p, prefactor: c.exp(), residual }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub times: Vec<f64>,
    pub interior_residuals: Vec<f64>,
    /// Largest residual without projection; a truncation diagnostic only.
    pub full_residual: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityReport {
    pub fn new(name: &str, times: Vec<f64>, interior_residuals: Vec<f64>, full_residual: Option<f64>, tolerance: f64) -> Self {
        let passed = interior_residuals.iter().all(|r| r.is_finite() && *r <= tolerance);
        IdentityReport { name: name.to_string(), times, interior_residuals, full_residual, tolerance, passed }
    }

    pub fn max_residual(&self) -> f64 {
        self.interior_residuals.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanControl {
    StiffnessK,
    RotationEps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub name: String,
    pub control: ScanControl,
    pub values: Vec<f64>,
    pub responses: Vec<f64>,
    pub fit: PowerLawFit,
    pub expected: f64,
    pub band: f64,
    /// Whether the responses change monotonically with the control.
    pub monotone: bool,
    pub passed: bool,
}

impl ScalingResult {
    pub fn from_responses(
        name: &str,
        control: ScanControl,
        values: Vec<f64>,
        responses: Vec<f64>,
        expected: f64,
        band: f64,
    ) -> Self {
        let fit = fit_power_law(&values, &responses);
        let up = responses.windows(2).all(|w| w[1] > w[0]);
        let down = responses.windows(2).all(|w| w[1] < w[0]);
        let passed = fit.exponent.is_finite() && (fit.exponent - expected).abs() <= band;
        ScalingResult { name: name.to_string(), control, values, responses, fit, expected, band, monotone: up || down, passed }
    }
}

/// Check that a scan has at least four strictly increasing values over a decade.
pub fn validate_scan_values(values: &[f64]) -> Result<(), AnalysisError> {
    let ok = values.len() >= 4
        && values.windows(2).all(|w| w[1] > w[0])
        && values[0] > 0.0
        && values[values.len() - 1] / values[0] >= 10.0 * (1.0 - 1e-12);
    if ok {
        Ok(())
    } else {
        Err(AnalysisError::TooFewPoints { need: 4, got: values.len() })
    }
}

/// Evaluate `response` at every value in parallel; results keep the input order.
pub fn scaling_scan<E: Send>(
    name: &str,
    control: ScanControl,
    values: &[f64],
    expected: f64,
    band: f64,
    response: impl Fn(f64) -> Result<f64, E> + Sync,
) -> Result<ScalingResult, E> {
    let responses: Result<Vec<f64>, E> = values.par_iter().map(|&v| response(v)).collect();
    Ok(ScalingResult::from_responses(name, control, values.to_vec(), responses?, expected, band))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, zeros};
    use ndarray::array;

    #[test]
    fn distances() {
        let a = identity(3);
        assert_eq!(projected_distance(&a, &a, &identity(3)).unwrap(), 0.0);
        assert!((projected_distance(&a, &zeros(3), &identity(3)).unwrap() - 1.0).abs() < 1e-15);
        assert!(projected_distance(&a, &identity(2), &identity(3)).is_err());
    }

    #[test]
    fn phase_shifted_two_by_two() {
        // U and e^{iθ}U differ by |1 − e^{iθ}| in relative Frobenius norm.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = array![[C64::new(s, 0.0), C64::new(0.0, s)], [C64::new(0.0, s), C64::new(s, 0.0)]];
        let th = 0.7;
        let v = u.mapv(|z| z * C64::from_polar(1.0, th));
        let want = (2.0 - 2.0 * th.cos()).sqrt();
        assert!((projected_distance(&u, &v, &identity(2)).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn phases_of_identity_and_diagonal() {
        let states = vec![array![C64::new(1.0, 0.0), C64::new(0.0, 0.0)], array![C64::new(0.0, 0.0), C64::new(2.0, 0.0)]];
        for r in phase_extract(&identity(2), &states) {
            assert_eq!(r.phase, 0.0);
            assert!(r.meaningful);
        }
        let d = array![[C64::from_polar(1.0, 0.3), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::from_polar(1.0, -1.2)]];
        let r = phase_extract(&d, &states);
        assert!((r[0].phase - 0.3).abs() < 1e-14 && (r[1].phase + 1.2).abs() < 1e-14);
        let mixed = array![C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        assert!(!phase_extract(&d, &[mixed])[0].meaningful);
    }

    #[test]
    fn power_law_recovers_exponent() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        let f = fit_power_law(&xs, &ys);
        assert!((f.exponent + 0.5).abs() < 1e-12 && (f.prefactor - 3.0).abs() < 1e-12 && f.residual < 1e-12);
    }

    #[test]
    fn scan_order_is_preserved() {
        let vals = [1.0, 2.0, 5.0, 10.0];
        let r = scaling_scan("sq", ScanControl::StiffnessK, &vals, 2.0, 0.1, |x| Ok::<_, ()>(x * x)).unwrap();
        assert_eq!(r.responses, vec![1.0, 4.0, 25.0, 100.0]);
        assert!(r.passed && r.monotone);
        assert!(validate_scan_values(&vals).is_ok());
        assert!(validate_scan_values(&[1.0, 2.0, 3.0]).is_err());
    }
}
