//! Curves on the unit sphere, the parallel-transported frame along them and
//! the path functionals (α_μ, d_μ, S_d) derived from that frame.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("time {t} outside path range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("waypoint path needs at least 4 samples, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint times must be strictly increasing")]
    UnsortedWaypoints,
    #[error("unsupported interpolation order {0} (use 1 or 3)")]
    InterpolationOrder(usize),
    #[error("|n'(0)| vanishes and no initial e1 was supplied")]
    DegenerateStart,
    #[error("initial e1 must be a unit vector orthogonal to n(0)")]
    BadInitialFrame,
    #[error("orthonormality drift {drift:e} exceeds tolerance {tol:e}")]
    Drift { drift: f64, tol: f64 },
    #[error("path is not closed: |n(T) - n(0)| = {0:e}")]
    NotClosed(f64),
    #[error("time grid must start at 0, increase strictly and stay inside the path")]
    BadGrid,
    #[error("invalid path parameter: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, GeometryError>;

/// Families of drive curves n(t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PathFamily {
    /// n = (sinθ cos εt, sinθ sin εt, cosθ).
    PrecessingCone { theta: f64, eps: f64 },
    /// Rotation of n(0) about `axis` at angular speed ε. n(0) is the unit vector
    /// orthogonal to the axis that lies closest to ẑ (x̂ when the axis is ẑ).
    GreatCircleArc { axis: [f64; 3], arc: f64, eps: f64 },
    /// ẑ down the φ=0 meridian to polar angle θ, along the latitude circle by
    /// Δφ, and back up to ẑ, all at unit speed ε on the sphere.
    PolarTriangle { theta: f64, delta_phi: f64, eps: f64 },
    /// Interpolated samples (order 1 or 3), projected back onto the sphere.
    SampledWaypoints { times: Vec<f64>, points: Vec<[f64; 3]>, order: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpherePath {
    #[serde(flatten)]
    pub family: PathFamily,
    /// Total duration. Defaults to the natural duration of the family.
    pub duration: f64,
}

/// n, ṅ and n̈ at one instant.
#[derive(Clone, Copy, Debug)]
pub struct PathPoint {
    pub n: Vec3,
    pub ndot: Vec3,
    pub nddot: Vec3,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl SpherePath {
    pub fn new(family: PathFamily) -> Result<Self> {
        let duration = Self::natural_duration(&family)?;
        Ok(SpherePath { family, duration })
    }

    pub fn with_duration(family: PathFamily, duration: f64) -> Result<Self> {
        Self::natural_duration(&family)?;
        if !(duration > 0.0) {
            return Err(GeometryError::Invalid("duration must be positive".into()));
        }
        Ok(SpherePath { family, duration })
    }

    pub fn cone(theta: f64, eps: f64) -> Self {
        Self::new(PathFamily::PrecessingCone { theta, eps }).expect("valid cone")
    }

    fn natural_duration(f: &PathFamily) -> Result<f64> {
        let pos = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(GeometryError::Invalid(format!("{what} must be positive")))
            }
        };
        match f {
            PathFamily::PrecessingCone { eps, .. } => {
                pos(*eps, "eps")?;
                Ok(2.0 * PI / eps)
            }
            PathFamily::GreatCircleArc { axis, arc, eps } => {
                pos(*eps, "eps")?;
                pos(*arc, "arc")?;
                if v3(*axis).norm() == 0.0 {
                    return Err(GeometryError::Invalid("axis must be nonzero".into()));
                }
                Ok(arc / eps)
            }
            PathFamily::PolarTriangle { theta, delta_phi, eps } => {
                pos(*eps, "eps")?;
                pos(*theta, "theta")?;
                Ok((2.0 * theta + delta_phi.abs() * theta.sin()) / eps)
            }
            PathFamily::SampledWaypoints { times, points, order } => {
                if times.len() < 4 || points.len() != times.len() {
                    return Err(GeometryError::TooFewWaypoints(times.len().min(points.len())));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(GeometryError::UnsortedWaypoints);
                }
                if *order != 1 && *order != 3 {
                    return Err(GeometryError::InterpolationOrder(*order));
                }
                Ok(times[times.len() - 1] - times[0])
            }
        }
    }

    /// Characteristic rotation rate ε, so that T₁ = 1/ε. For sampled paths this
    /// is the inverse of the sample span.
    pub fn eps(&self) -> f64 {
        match &self.family {
            PathFamily::PrecessingCone { eps, .. }
            | PathFamily::GreatCircleArc { eps, .. }
            | PathFamily::PolarTriangle { eps, .. } => *eps,
            PathFamily::SampledWaypoints { times, .. } => 1.0 / (times[times.len() - 1] - times[0]),
        }
    }

    /// Same curve traversed at a different rate.
    pub fn with_eps(&self, new_eps: f64) -> Self {
        let ratio = self.eps() / new_eps;
        let family = match &self.family {
            PathFamily::PrecessingCone { theta, .. } => PathFamily::PrecessingCone { theta: *theta, eps: new_eps },
            PathFamily::GreatCircleArc { axis, arc, .. } => {
                PathFamily::GreatCircleArc { axis: *axis, arc: *arc, eps: new_eps }
            }
            PathFamily::PolarTriangle { theta, delta_phi, .. } => {
                PathFamily::PolarTriangle { theta: *theta, delta_phi: *delta_phi, eps: new_eps }
            }
            PathFamily::SampledWaypoints { times, points, order } => PathFamily::SampledWaypoints {
                times: times.iter().map(|t| t * ratio).collect(),
                points: points.clone(),
                order: *order,
            },
        };
        SpherePath { family, duration: self.duration * ratio }
    }

    /// Times where ṅ may be discontinuous. Always includes 0 and the duration.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        match &self.family {
            PathFamily::PolarTriangle { theta, delta_phi, eps } => {
                let t1 = theta / eps;
                let t2 = t1 + delta_phi.abs() * theta.sin() / eps;
                b.extend([t1, t2].into_iter().filter(|&t| t < self.duration));
            }
            PathFamily::SampledWaypoints { times, .. } => {
                b.extend(times.iter().map(|t| t - times[0]).filter(|&t| t > 0.0 && t < self.duration));
            }
            _ => {}
        }
        b.push(self.duration);
        b
    }

    /// Evaluate n, ṅ, n̈ at path time t ∈ [0, T].
    pub fn point(&self, t: f64) -> Result<PathPoint> {
        let slack = 1e-9 * self.duration.max(1.0);
        if !(t >= -slack && t <= self.duration + slack) {
            return Err(GeometryError::OutOfRange { t, lo: 0.0, hi: self.duration });
        }
        let t = t.clamp(0.0, self.duration);
        Ok(match &self.family {
            PathFamily::PrecessingCone { theta, eps } => {
                let (st, ct) = theta.sin_cos();
                let (s, c) = (eps * t).sin_cos();
                PathPoint {
                    n: Vec3::new(st * c, st * s, ct),
                    ndot: Vec3::new(-st * s, st * c, 0.0) * *eps,
                    nddot: Vec3::new(-st * c, -st * s, 0.0) * (eps * eps),
                }
            }
            PathFamily::GreatCircleArc { axis, eps, .. } => {
                let a = v3(*axis).normalize();
                let z = Vec3::z();
                let p = z - a * a.dot(&z);
                let n0 = if p.norm() > 1e-8 { p.normalize() } else { Vec3::x() };
                let m = a.cross(&n0);
                let (s, c) = (eps * t).sin_cos();
                PathPoint {
                    n: n0 * c + m * s,
                    ndot: (m * c - n0 * s) * *eps,
                    nddot: -(n0 * c + m * s) * (eps * eps),
                }
            }
            PathFamily::PolarTriangle { theta, delta_phi, eps } => {
                let t1 = theta / eps;
                let t2 = t1 + delta_phi.abs() * theta.sin() / eps;
                let meridian = |pol: f64, pdot: f64, phi: f64| {
                    let (sp, cp) = phi.sin_cos();
                    let (s, c) = pol.sin_cos();
                    PathPoint {
                        n: Vec3::new(s * cp, s * sp, c),
                        ndot: Vec3::new(c * cp, c * sp, -s) * pdot,
                        nddot: Vec3::new(-s * cp, -s * sp, -c) * (pdot * pdot),
                    }
                };
                if t < t1 {
                    meridian(eps * t, *eps, 0.0)
                } else if t < t2 {
                    let (st, ct) = theta.sin_cos();
                    let w = eps / st * delta_phi.signum();
                    let phi = w * (t - t1);
                    let (s, c) = phi.sin_cos();
                    PathPoint {
                        n: Vec3::new(st * c, st * s, ct),
                        ndot: Vec3::new(-st * s, st * c, 0.0) * w,
                        nddot: Vec3::new(-st * c, -st * s, 0.0) * (w * w),
                    }
                } else {
                    meridian(theta - eps * (t - t2), -eps, *delta_phi)
                }
            }
            PathFamily::SampledWaypoints { times, points, order } => {
                let (c, cd, cdd) = interpolate(times, points, *order, t + times[0]);
                let r = c.norm();
                let n = c / r;
                let rdot = n.dot(&cd);
                let ndot = (cd - n * rdot) / r;
                let rddot = ndot.dot(&cd) + n.dot(&cdd);
                let nddot = (cdd - ndot * (2.0 * rdot) - n * rddot) / r;
                PathPoint { n, ndot, nddot }
            }
        })
    }

    /// (n, ṅ) at t.
    pub fn evaluate(&self, t: f64) -> Result<(Vec3, Vec3)> {
        let p = self.point(t)?;
        Ok((p.n, p.ndot))
    }

    pub fn is_closed(&self) -> f64 {
        let a = self.point(0.0).map(|p| p.n).unwrap_or_default();
        let b = self.point(self.duration).map(|p| p.n).unwrap_or_default();
        (a - b).norm()
    }
}

/// Piecewise interpolation of raw samples: linear, or cubic Hermite with
/// centred finite-difference tangents. Returns value and two derivatives.
fn interpolate(times: &[f64], points: &[[f64; 3]], order: usize, t: f64) -> (Vec3, Vec3, Vec3) {
    let n = times.len();
    let k = match times.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    };
    let (t0, t1) = (times[k], times[k + 1]);
    let h = t1 - t0;
    let (p0, p1) = (v3(points[k]), v3(points[k + 1]));
    if order == 1 {
        let u = (t - t0) / h;
        return (p0 * (1.0 - u) + p1 * u, (p1 - p0) / h, Vec3::zeros());
    }
    let tangent = |i: usize| -> Vec3 {
        if i == 0 {
            (v3(points[1]) - v3(points[0])) / (times[1] - times[0])
        } else if i == n - 1 {
            (v3(points[n - 1]) - v3(points[n - 2])) / (times[n - 1] - times[n - 2])
        } else {
            (v3(points[i + 1]) - v3(points[i - 1])) / (times[i + 1] - times[i - 1])
        }
    };
    let (m0, m1) = (tangent(k) * h, tangent(k + 1) * h);
    let u = (t - t0) / h;
    let (u2, u3) = (u * u, u * u * u);
    let val = p0 * (2.0 * u3 - 3.0 * u2 + 1.0) + m0 * (u3 - 2.0 * u2 + u) + p1 * (-2.0 * u3 + 3.0 * u2)
        + m1 * (u3 - u2);
    let d1 = (p0 * (6.0 * u2 - 6.0 * u) + m0 * (3.0 * u2 - 4.0 * u + 1.0) + p1 * (-6.0 * u2 + 6.0 * u)
        + m1 * (3.0 * u2 - 2.0 * u))
        / h;
    let d2 = (p0 * (12.0 * u - 6.0) + m0 * (6.0 * u - 4.0) + p1 * (-12.0 * u + 6.0) + m1 * (6.0 * u - 2.0))
        / (h * h);
    (val, d1, d2)
}

/// `(n, ṅ)` convenience wrapper.
pub fn evaluate_path(path: &SpherePath, t: f64) -> Result<(Vec3, Vec3)> {
    path.evaluate(t)
}

/// Time grid `0, T/n, …, T`.
pub fn uniform_grid(t_end: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|k| t_end * k as f64 / intervals as f64).collect()
}

/// Parallel-transported frame along a path, sampled on a grid.
#[derive(Clone, Debug)]
pub struct TransportedFrame {
    pub path: SpherePath,
    pub grid: Vec<f64>,
    pub e1: Vec<Vec3>,
    pub e2: Vec<Vec3>,
    pub e3: Vec<Vec3>,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    /// α₁ + iα₂.
    pub alpha: Vec<num_complex::Complex64>,
    /// max |e_i·e_j − δ_ij| over the grid.
    pub drift: f64,
    /// max |e₃ − n| over the grid.
    pub normal_error: f64,
    step: f64,
}

type Frame3 = [Vec3; 3];

fn frame_rhs(p: &PathPoint, e: &Frame3) -> Frame3 {
    let w = p.n.cross(&p.ndot);
    [w.cross(&e[0]), w.cross(&e[1]), w.cross(&e[2])]
}

fn axpy(e: &Frame3, k: &Frame3, h: f64) -> Frame3 {
    [e[0] + k[0] * h, e[1] + k[1] * h, e[2] + k[2] * h]
}

impl TransportedFrame {
    fn rk4(path: &SpherePath, t: f64, h: f64, e: &Frame3) -> Frame3 {
        // Evaluate ṅ just inside the step so corners use the correct leg.
        let pt = |s: f64| {
            let s = s.clamp(t + 1e-12 * h.abs(), t + h - 1e-12 * h.abs());
            path.point(s).expect("inside path")
        };
        let k1 = frame_rhs(&pt(t), e);
        let k2 = frame_rhs(&pt(t + 0.5 * h), &axpy(e, &k1, 0.5 * h));
        let k3 = frame_rhs(&pt(t + 0.5 * h), &axpy(e, &k2, 0.5 * h));
        let k4 = frame_rhs(&pt(t + h), &axpy(e, &k3, h));
        [0, 1, 2].map(|i| e[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0))
    }

    /// Integrate from `t0` to `t1` with steps no longer than the nominal step,
    /// restarting at path breakpoints.
    fn advance(path: &SpherePath, step: f64, t0: f64, t1: f64, mut e: Frame3) -> Frame3 {
        let mut cuts: Vec<f64> = path.breakpoints().into_iter().filter(|&b| b > t0 && b < t1).collect();
        cuts.insert(0, t0);
        cuts.push(t1);
        for w in cuts.windows(2) {
            let len = w[1] - w[0];
            if len <= 0.0 {
                continue;
            }
            let n = (len / step).ceil().max(1.0) as usize;
            let h = len / n as f64;
            for k in 0..n {
                e = Self::rk4(path, w[0] + k as f64 * h, h, &e);
            }
        }
        e
    }

    /// Frame (e₁, e₂, e₃) at any t covered by the grid.
    pub fn at(&self, t: f64) -> Frame3 {
        let k = match self.grid.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return [self.e1[i], self.e2[i], self.e3[i]],
            Err(i) => i.saturating_sub(1).min(self.grid.len() - 1),
        };
        let e = [self.e1[k], self.e2[k], self.e3[k]];
        Self::advance(&self.path, self.step, self.grid[k], t, e)
    }

    /// α_μ = ṅ·e_μ and α̇_μ = n̈·e_μ at t.
    pub fn alpha_at(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        let p = self.path.point(t).expect("t inside path");
        let e = self.at(t);
        ([p.ndot.dot(&e[0]), p.ndot.dot(&e[1])], [p.nddot.dot(&e[0]), p.nddot.dot(&e[1])])
    }

    /// Rows are e₁(0), e₂(0), e₃(0): maps lab vectors to operator components.
    pub fn basis0(&self) -> Matrix3<f64> {
        Matrix3::from_rows(&[self.e1[0].transpose(), self.e2[0].transpose(), self.e3[0].transpose()])
    }

    /// Components of a lab vector in the initial frame.
    pub fn components(&self, v: &Vec3) -> Vec3 {
        self.basis0() * v
    }

    pub fn end_time(&self) -> f64 {
        *self.grid.last().expect("non-empty grid")
    }

    pub fn nominal_step(&self) -> f64 {
        self.step
    }
}

/// A valid initial e₁ for paths that start at rest, where ṅ(0) cannot fix it;
/// `None` when ṅ(0) does.
pub fn rest_start_e1(path: &SpherePath) -> Result<Option<[f64; 3]>> {
    let p = path.point(0.0)?;
    if p.ndot.norm() >= 1e-14 {
        return Ok(None);
    }
    let seed = if p.n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (seed - p.n * p.n.dot(&seed)).normalize();
    Ok(Some([e1.x, e1.y, e1.z]))
}

/// Integrate the transport ODE ė_i = (n×ṅ)×e_i on `grid` with classic RK4 and
/// no re-orthonormalisation. The step is the largest with ε·h ≤ 1e-3.
pub fn transport_frame(
    path: &SpherePath,
    grid: &[f64],
    tol: f64,
    initial_e1: Option<[f64; 3]>,
) -> Result<TransportedFrame> {
    if grid.is_empty()
        || grid[0] != 0.0
        || grid.windows(2).any(|w| w[1] <= w[0])
        || *grid.last().unwrap() > path.duration * (1.0 + 1e-12)
    {
        return Err(GeometryError::BadGrid);
    }
    let p0 = path.point(0.0)?;
    let e1 = match initial_e1 {
        Some(v) => {
            let v = v3(v);
            if (v.norm() - 1.0).abs() > 1e-9 || v.dot(&p0.n).abs() > 1e-9 {
                return Err(GeometryError::BadInitialFrame);
            }
            v
        }
        None => {
            // One-sided limit keeps corner paths well defined at t = 0.
            let nd = path.point(0.0)?.ndot;
            if nd.norm() < 1e-14 {
                return Err(GeometryError::DegenerateStart);
            }
            nd.normalize()
        }
    };
    let step = 1e-3 / path.eps().max(1e-300);
    let step = step.min(path.duration / 8.0);
    let mut e: Frame3 = [e1, p0.n.cross(&e1), p0.n];
    let mut out = TransportedFrame {
        path: path.clone(),
        grid: grid.to_vec(),
        e1: Vec::with_capacity(grid.len()),
        e2: Vec::with_capacity(grid.len()),
        e3: Vec::with_capacity(grid.len()),
        alpha1: Vec::with_capacity(grid.len()),
        alpha2: Vec::with_capacity(grid.len()),
        alpha: Vec::with_capacity(grid.len()),
        drift: 0.0,
        normal_error: 0.0,
        step,
    };
    let mut prev = 0.0;
    for &t in grid {
        if t > prev {
            e = TransportedFrame::advance(path, step, prev, t, e);
        }
        prev = t;
        let p = path.point(t)?;
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                d = d.max((e[i].dot(&e[j]) - want).abs());
            }
        }
        out.drift = out.drift.max(d);
        out.normal_error = out.normal_error.max((e[2] - p.n).norm());
        let (a1, a2) = (p.ndot.dot(&e[0]), p.ndot.dot(&e[1]));
        out.e1.push(e[0]);
        out.e2.push(e[1]);
        out.e3.push(e[2]);
        out.alpha1.push(a1);
        out.alpha2.push(a2);
        out.alpha.push(num_complex::Complex64::new(a1, a2));
    }
    if out.drift > tol {
        return Err(GeometryError::Drift { drift: out.drift, tol });
    }
    Ok(out)
}

/// Rotation angle of e₁ about n(0) after a closed loop, in (−π, π].
pub fn holonomy_angle(frame: &TransportedFrame) -> f64 {
    let k = frame.grid.len() - 1;
    let e1 = frame.e1[k];
    e1.dot(&frame.e2[0]).atan2(e1.dot(&frame.e1[0]))
}

/// Wrap an angle into (−π, π].
pub fn wrap_pi(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Gauss–Legendre 8-point nodes and weights on [−1, 1].
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Composite Gauss–Legendre quadrature with `panels` panels per smooth piece.
pub fn integrate(f: impl Fn(f64) -> f64, cuts: &[f64], panels: usize) -> f64 {
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let mid = w[0] + (p as f64 + 0.5) * h;
            for (x, wt) in GL8 {
                total += wt * 0.5 * h * f(mid + 0.5 * h * x);
            }
        }
    }
    total
}

/// Signed solid angle enclosed by a closed path, normalised to (−2π, 2π].
///
/// Uses ∮ a·(n×ṅ)/(1 + a·n) dt for a reference axis `a` chosen to stay far
/// from −n along the whole path.
pub fn solid_angle(path: &SpherePath) -> Result<f64> {
    let gap = path.is_closed();
    if gap > 1e-9 {
        return Err(GeometryError::NotClosed(gap));
    }
    let cuts = path.breakpoints();
    let samples: Vec<Vec3> = uniform_grid(path.duration, 512)
        .into_iter()
        .map(|t| path.point(t).map(|p| p.n))
        .collect::<Result<_>>()?;
    let mean: Vec3 = samples.iter().sum::<Vec3>() / samples.len() as f64;
    let n0 = samples[0];
    let mut candidates = vec![n0, Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()];
    if mean.norm() > 1e-6 {
        candidates.insert(0, mean.normalize());
    }
    let clearance = |a: &Vec3| samples.iter().map(|n| 1.0 + a.dot(n)).fold(f64::INFINITY, f64::min);
    let mut a = candidates[0];
    for c in &candidates {
        if clearance(c) > clearance(&a) + 1e-12 {
            a = *c;
        }
    }
    let panels = 64.max((path.duration * path.eps() * 64.0).ceil() as usize);
    let omega = integrate(
        |t| {
            let p = path.point(t).expect("inside path");
            a.dot(&p.n.cross(&p.ndot)) / (1.0 + a.dot(&p.n))
        },
        &cuts,
        panels,
    );
    let y = omega.rem_euclid(4.0 * PI);
    Ok(if y > 2.0 * PI { y - 4.0 * PI } else { y })
}

/// d_μ(t) = −(L/2)∫α_μ and the signed area S_d enclosed by the d-path and
/// the chord back to the origin.
#[derive(Clone, Debug)]
pub struct DisplacementPath {
    pub grid: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub sd: Vec<f64>,
    pub total_length: f64,
    pub length_scale: f64,
    /// ∫ d₁ ḋ₂ dτ, kept for Hermite interpolation of S_d.
    raw_area: Vec<f64>,
    rate1: Vec<f64>,
    rate2: Vec<f64>,
}

impl DisplacementPath {
    /// (d₁, d₂, S_d) at any t covered by the grid, by cubic Hermite
    /// interpolation with the exact derivatives at the nodes.
    pub fn at(&self, t: f64) -> (f64, f64, f64) {
        let n = self.grid.len();
        let k = match self.grid.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return (self.d1[i], self.d2[i], self.sd[i]),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let h = self.grid[k + 1] - self.grid[k];
        let u = (t - self.grid[k]) / h;
        let herm = |y0: f64, y1: f64, m0: f64, m1: f64| {
            let (u2, u3) = (u * u, u * u * u);
            y0 * (2.0 * u3 - 3.0 * u2 + 1.0) + m0 * h * (u3 - 2.0 * u2 + u) + y1 * (-2.0 * u3 + 3.0 * u2)
                + m1 * h * (u3 - u2)
        };
        let d1 = herm(self.d1[k], self.d1[k + 1], self.rate1[k], self.rate1[k + 1]);
        let d2 = herm(self.d2[k], self.d2[k + 1], self.rate2[k], self.rate2[k + 1]);
        let a = herm(
            self.raw_area[k],
            self.raw_area[k + 1],
            self.d1[k] * self.rate2[k],
            self.d1[k + 1] * self.rate2[k + 1],
        );
        (d1, d2, a - 0.5 * d1 * d2)
    }
}

/// Cumulative d_μ and S_d on the frame grid, integrated with RK4 at the
/// frame's nominal step.
pub fn displacement_path(frame: &TransportedFrame, length: f64) -> Result<DisplacementPath> {
    if length < 0.0 {
        return Err(GeometryError::Invalid("L must be non-negative".into()));
    }
    let half = 0.5 * length;
    let rate = |t: f64| {
        let (a, _) = frame.alpha_at(t);
        (-half * a[0], -half * a[1])
    };
    let grid = frame.grid.clone();
    let mut d = (0.0, 0.0, 0.0);
    let (mut d1, mut d2, mut sd, mut raw, mut r1, mut r2) =
        (vec![0.0], vec![0.0], vec![0.0], vec![0.0], Vec::new(), Vec::new());
    let r0 = rate(0.0);
    r1.push(r0.0);
    r2.push(r0.1);
    let step = frame.nominal_step();
    for w in grid.windows(2) {
        let mut cuts: Vec<f64> =
            frame.path.breakpoints().into_iter().filter(|&b| b > w[0] && b < w[1]).collect();
        cuts.insert(0, w[0]);
        cuts.push(w[1]);
        for c in cuts.windows(2) {
            let n = ((c[1] - c[0]) / step).ceil().max(1.0) as usize;
            let h = (c[1] - c[0]) / n as f64;
            for k in 0..n {
                let t = c[0] + k as f64 * h;
                let eps_in = 1e-12 * h;
                let f = |s: f64, y: (f64, f64, f64)| {
                    let r = rate(s.clamp(t + eps_in, t + h - eps_in));
                    (r.0, r.1, y.0 * r.1)
                };
                let k1 = f(t, d);
                let k2 = f(t + 0.5 * h, (d.0 + 0.5 * h * k1.0, d.1 + 0.5 * h * k1.1, d.2 + 0.5 * h * k1.2));
                let k3 = f(t + 0.5 * h, (d.0 + 0.5 * h * k2.0, d.1 + 0.5 * h * k2.1, d.2 + 0.5 * h * k2.2));
                let k4 = f(t + h, (d.0 + h * k3.0, d.1 + h * k3.1, d.2 + h * k3.2));
                d.0 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                d.1 += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
                d.2 += h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
            }
        }
        d1.push(d.0);
        d2.push(d.1);
        raw.push(d.2);
        sd.push(d.2 - 0.5 * d.0 * d.1);
        let r = rate(w[1]);
        r1.push(r.0);
        r2.push(r.1);
    }
    let t_end = *grid.last().unwrap();
    let cuts: Vec<f64> = frame.path.breakpoints().into_iter().filter(|&b| b < t_end).chain([t_end]).collect();
    let panels = 16.max((t_end * frame.path.eps() * 32.0).ceil() as usize);
    let arc = integrate(|t| frame.path.point(t).expect("inside").ndot.norm(), &cuts, panels);
    Ok(DisplacementPath {
        grid,
        d1,
        d2,
        sd,
        total_length: half * arc,
        length_scale: length,
        raw_area: raw,
        rate1: r1,
        rate2: r2,
    })
}

/// Signed area of a polygon closed by the chord back to its first vertex.
pub fn shoelace(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let mut s = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        s += xs[i] * ys[j] - xs[j] * ys[i];
    }
    0.5 * s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cone_points() {
        let p = SpherePath::cone(0.0, 0.01);
        let (n, nd) = p.evaluate(5.0).unwrap();
        assert!((n - Vec3::z()).norm() < 1e-15 && nd.norm() == 0.0);
        let p = SpherePath::cone(PI / 2.0, 0.01);
        let (n, nd) = p.evaluate(0.0).unwrap();
        assert!((n - Vec3::x()).norm() < 1e-15);
        assert!((nd.norm() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn cone_speed_matches_finite_difference() {
        let p = SpherePath::cone(PI / 3.0, 0.02);
        for &t in &[0.0, 13.0, 140.0] {
            let (_, nd) = p.evaluate(t + 1e-6).unwrap();
            let h = 1e-6;
            let fd = (p.evaluate(t + 2.0 * h).unwrap().0 - p.evaluate(t).unwrap().0) / (2.0 * h);
            assert!((fd - nd).norm() < 1e-8);
            assert!((nd.norm() - 0.02 * (PI / 3.0).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_and_short_waypoints() {
        let p = SpherePath::cone(0.3, 0.1);
        assert!(p.evaluate(-1.0).is_err());
        assert!(p.evaluate(p.duration * 2.0).is_err());
        let bad = SpherePath::new(PathFamily::SampledWaypoints {
            times: vec![0.0, 1.0, 2.0],
            points: vec![[0.0, 0.0, 1.0]; 3],
            order: 3,
        });
        assert!(matches!(bad, Err(GeometryError::TooFewWaypoints(3))));
    }

    #[test]
    fn degenerate_start_requires_initial_frame() {
        let p = SpherePath::cone(0.0, 0.01);
        let grid = uniform_grid(100.0, 10);
        assert!(matches!(transport_frame(&p, &grid, 1e-10, None), Err(GeometryError::DegenerateStart)));
        let f = transport_frame(&p, &grid, 1e-10, Some([1.0, 0.0, 0.0])).unwrap();
        assert!(f.alpha1.iter().chain(&f.alpha2).all(|a| *a == 0.0));
        assert!((f.e1[10] - Vec3::x()).norm() < 1e-15);
    }

    #[test]
    fn cone_holonomy_equals_solid_angle() {
        let p = SpherePath::cone(PI / 3.0, 0.01);
        let f = transport_frame(&p, &uniform_grid(p.duration, 64), 1e-10, None).unwrap();
        let want = 2.0 * PI * (1.0 - (PI / 3.0).cos());
        assert!(wrap_pi(holonomy_angle(&f) - want).abs() < 1e-8);
        assert!(f.drift < 1e-10 && f.normal_error < 1e-10);
    }

    #[test]
    fn solid_angles() {
        assert!((solid_angle(&SpherePath::cone(PI / 2.0, 0.01)).unwrap() - 2.0 * PI).abs() < 1e-9);
        assert!((solid_angle(&SpherePath::cone(PI / 3.0, 0.01)).unwrap() - PI).abs() < 1e-9);
        assert!(solid_angle(&SpherePath::cone(0.0, 0.01)).unwrap().abs() < 1e-12);
        let tri = SpherePath::new(PathFamily::PolarTriangle { theta: PI / 3.0, delta_phi: PI, eps: 1.0 }).unwrap();
        assert!((solid_angle(&tri).unwrap() - PI / 2.0).abs() < 1e-9);
        let open = SpherePath::with_duration(PathFamily::PrecessingCone { theta: 0.5, eps: 1.0 }, 1.0).unwrap();
        assert!(matches!(solid_angle(&open), Err(GeometryError::NotClosed(_))));
    }

    #[test]
    fn shoelace_unit_square() {
        assert!((shoelace(&[0.0, 1.0, 1.0, 0.0], &[0.0, 0.0, 1.0, 1.0]) - 1.0).abs() < 1e-15);
    }
}
