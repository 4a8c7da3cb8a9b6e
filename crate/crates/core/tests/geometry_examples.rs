use landau_factor::analysis::suite::shoelace_area;
use landau_factor::geometry::{
    displacement_path, holonomy_angle, rest_start_e1, solid_angle, transport_frame, uniform_grid, wrap_pi, PathFamily, SpherePath,
};
use std::f64::consts::{FRAC_PI_3, PI};

// On a cone the transported e₁ turns against the co-rotating tangent at rate
// ε cosθ, so d traces a circle of radius r = (L/2)tanθ through the origin:
// d = −r(sin φ, 1 − cos φ) with φ = ε cosθ t, and S_d = r²(φ − sin φ)/2.
fn cone_closed_form(theta: f64, eps: f64, length: f64, t: f64) -> (f64, f64, f64) {
    let r = 0.5 * length * theta.tan();
    let phi = eps * theta.cos() * t;
    (-r * phi.sin(), -r * (1.0 - phi.cos()), 0.5 * r * r * (phi - phi.sin()))
}

#[test]
fn cone_displacement_matches_closed_form() {
    let (theta, eps, length) = (FRAC_PI_3, 0.01, 10.0);
    let path = SpherePath::cone(theta, eps);
    let frame = transport_frame(&path, &uniform_grid(path.duration, 64), 1e-10, None).unwrap();
    let dp = displacement_path(&frame, length).unwrap();
    for frac in [0.1, 0.37, 0.5, 0.81, 1.0] {
        let t = frac * path.duration;
        let (d1, d2, sd) = dp.at(t);
        let (w1, w2, ws) = cone_closed_form(theta, eps, length, t);
        let scale = length * theta.tan();
        assert!((d1 - w1).abs() < 1e-8 * scale, "d1 {d1} vs {w1} at {t}");
        assert!((d2 - w2).abs() < 1e-8 * scale, "d2 {d2} vs {w2} at {t}");
        assert!((sd - ws).abs() < 1e-8 * scale * scale, "S_d {sd} vs {ws} at {t}");
    }
    let (d1, d2, _) = dp.at(path.duration);
    assert!(((d1 * d1 + d2 * d2).sqrt() - length * theta.tan()).abs() < 1e-8 * length);
}

#[test]
fn closed_circular_displacement_encloses_pi_r_squared() {
    // Two turns of the θ = π/3 cone close the d-circle once.
    let (theta, eps, length) = (FRAC_PI_3, 0.02, 2.0);
    let path = SpherePath::with_duration(PathFamily::PrecessingCone { theta, eps }, 4.0 * PI / eps).unwrap();
    // The shoelace samples between grid nodes, so keep the interpolation fine.
    let frame = transport_frame(&path, &uniform_grid(path.duration, 2048), 1e-10, None).unwrap();
    let dp = displacement_path(&frame, length).unwrap();
    let t = path.duration;
    let r = 0.5 * length * theta.tan();
    let (d1, d2, sd) = dp.at(t);
    assert!(d1.hypot(d2) < 1e-8);
    assert!((sd - PI * r * r).abs() < 1e-8 * PI * r * r, "{sd}");
    let shoe = shoelace_area(&dp, t, 4096);
    assert!((shoe - sd).abs() < 1e-8 * sd, "{shoe} vs {sd}");
}

#[test]
fn resting_path_keeps_a_constant_frame_and_no_displacement() {
    let path = SpherePath::cone(0.0, 0.05);
    let e1 = rest_start_e1(&path).unwrap();
    assert!(e1.is_some());
    let frame = transport_frame(&path, &uniform_grid(path.duration, 16), 1e-10, e1).unwrap();
    for k in 0..frame.grid.len() {
        assert!((frame.e1[k] - frame.e1[0]).norm() < 1e-14);
        assert!((frame.e3[k] - frame.e3[0]).norm() < 1e-14);
        assert_eq!(frame.alpha1[k], 0.0);
        assert_eq!(frame.alpha2[k], 0.0);
    }
    let dp = displacement_path(&frame, 3.0).unwrap();
    assert_eq!(dp.at(path.duration), (0.0, 0.0, 0.0));
    assert!(rest_start_e1(&SpherePath::cone(FRAC_PI_3, 0.05)).unwrap().is_none());
}

#[test]
fn polar_triangle_holonomy_is_its_solid_angle() {
    let (theta, dphi) = (FRAC_PI_3, PI);
    let path = SpherePath::new(PathFamily::PolarTriangle { theta, delta_phi: dphi, eps: 0.05 }).unwrap();
    assert!(path.is_closed() < 1e-12);
    let want = dphi * (1.0 - theta.cos());
    assert!((solid_angle(&path).unwrap() - want).abs() < 1e-10);
    let frame = transport_frame(&path, &uniform_grid(path.duration, 64), 1e-10, None).unwrap();
    assert!(frame.drift < 1e-10);
    assert!(wrap_pi(holonomy_angle(&frame) - want).abs() < 1e-6);
}
