use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use cavity_bloch::capacitance::{assemble_single_layer, triangle_potential, triangle_potential_gauss3};
use cavity_bloch::geometry::{make_box_mesh, make_ellipsoid_mesh, make_sphere_mesh};
use cavity_bloch::{richardson_q, solve_capacitance, Vec3};

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Capacitance of the ellipsoid with semi-axes (2,1,1) from `2 / ∫₀^∞ ds/√((4+s)(1+s)²)`,
/// with `s = tan²θ` mapping the half-line to `[0, π/2]`.
fn prolate_reference() -> f64 {
    let integrand = |theta: f64| {
        let t = theta.tan();
        if !t.is_finite() {
            return 2.0;
        }
        2.0 * t / (4.0 + t * t).sqrt()
    };
    2.0 / adaptive_simpson(&integrand, 0.0, FRAC_PI_2, 1e-13)
}

#[test]
fn quadrature_oracle_matches_closed_form_for_spheroid() {
    let closed = 3f64.sqrt() / 2f64.acosh();
    assert!((prolate_reference() - closed).abs() < 1e-10 * closed);
}

#[test]
fn unit_sphere_refinement_four() {
    let mesh = make_sphere_mesh(1.0, 4).unwrap();
    let start = Instant::now();
    let sol = solve_capacitance(&mesh).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(mesh.len(), 5120);
    assert!((0.995..=1.005).contains(&sol.q), "q = {}", sol.q);
    assert!(sol.residual < 1e-8);
    assert!(elapsed < 60.0, "took {elapsed} s");
}

#[test]
fn scaling_and_translation() {
    let mesh = make_ellipsoid_mesh(Vec3::new(1.3, 0.8, 0.6), 2).unwrap();
    let q = solve_capacitance(&mesh).unwrap().q;
    let q_scaled = solve_capacitance(&mesh.scaled(2.5)).unwrap().q;
    let q_moved = solve_capacitance(&mesh.translated(Vec3::new(3.0, -7.0, 11.0))).unwrap().q;
    assert!((q_scaled - 2.5 * q).abs() < 1e-10 * q_scaled);
    assert!((q_moved - q).abs() < 1e-10 * q);
}

#[test]
fn far_field_matches_total_charge() {
    let mesh = make_ellipsoid_mesh(Vec3::new(1.5, 1.0, 0.7), 2).unwrap();
    let sol = solve_capacitance(&mesh).unwrap();
    let r = 50.0 * mesh.diameter();
    for dir in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.3, -0.5, 0.8).normalize()] {
        let v = sol.potential(&(r * dir));
        assert!((v * r - sol.q).abs() < 0.05 * sol.q, "{} vs {}", v * r, sol.q);
    }
}

#[test]
fn self_integral_matches_polar_quadrature() {
    let corners = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, 0.75f64.sqrt(), 0.0)];
    let c = (corners[0] + corners[1] + corners[2]) / 3.0;
    // In polar coordinates about c, ∫ dA/r = ∮ R(φ) dφ where R is the distance to the boundary.
    let mut oracle = 0.0;
    for e in 0..3 {
        let a = corners[e] - c;
        let b = corners[(e + 1) % 3] - c;
        let phi_a = a.y.atan2(a.x);
        let mut phi_b = b.y.atan2(b.x);
        if phi_b < phi_a {
            phi_b += 2.0 * PI;
        }
        let edge = b - a;
        let radius = |phi: f64| {
            let dir = Vec3::new(phi.cos(), phi.sin(), 0.0);
            // Solve a + t·edge = R·dir.
            let det = dir.x * (-edge.y) - dir.y * (-edge.x);
            (a.x * (-edge.y) - a.y * (-edge.x)) / det
        };
        oracle += adaptive_simpson(&radius, phi_a, phi_b, 1e-14);
    }
    let exact = triangle_potential(&c, &corners);
    assert!((exact - oracle).abs() < 1e-10, "{exact} vs {oracle}");
}

#[test]
fn far_entry_matches_point_approximation() {
    let mesh = make_sphere_mesh(1.0, 3).unwrap();
    let s = assemble_single_layer(&mesh);
    let mut checked = 0;
    for j in 0..mesh.len() {
        let i = 0;
        let dist = (mesh.centroids()[i] - mesh.centroids()[j]).norm();
        if dist <= 10.0 * mesh.triangle_diameter(j) {
            continue;
        }
        let point = mesh.areas()[j] / dist;
        assert!((s[(i, j)] - point).abs() < 0.01 * point);
        let corners = mesh.corners(j);
        assert_eq!(s[(i, j)], triangle_potential_gauss3(&mesh.centroids()[i], &corners, mesh.areas()[j]));
        assert!((s[(i, j)] - triangle_potential(&mesh.centroids()[i], &corners)).abs() < 1e-4 * point);
        checked += 1;
    }
    assert!(checked > 100, "{checked}");
}

#[test]
fn box_far_field() {
    let mesh = make_box_mesh(Vec3::new(1.0, 0.7, 0.4), 4).unwrap();
    let sol = solve_capacitance(&mesh).unwrap();
    let r = 50.0 * mesh.diameter();
    let v = sol.potential(&Vec3::new(0.0, r, 0.0));
    assert!((v * r - sol.q).abs() < 0.05 * sol.q);
}

#[test]
fn spheroid_richardson_within_one_percent() {
    let meshes: Vec<_> = (2..=4)
        .map(|r| make_ellipsoid_mesh(Vec3::new(2.0, 1.0, 1.0), r).unwrap())
        .collect();
    let est = richardson_q(&meshes).unwrap();
    let reference = prolate_reference();
    assert!((est.q - reference).abs() < 0.01 * reference, "{} vs {reference}", est.q);
}

#[test]
fn sphere_richardson_order_and_limit() {
    let meshes: Vec<_> = (2..=4).map(|r| make_sphere_mesh(1.0, r).unwrap()).collect();
    let est = richardson_q(&meshes).unwrap();
    let p = est.fitted_order.unwrap();
    assert!((0.8..=2.2).contains(&p), "order {p}");
    assert!((est.q - 1.0).abs() < 1e-3, "q {}", est.q);
}

#[test]
fn cube_consistency() {
    let meshes: Vec<_> = (1..=4)
        .map(|l| make_box_mesh(Vec3::repeat(1.0), 1 << l).unwrap())
        .collect();
    let coarse = richardson_q(&meshes[..3]).unwrap().q;
    let fine = richardson_q(&meshes[1..]).unwrap().q;
    assert!((coarse - fine).abs() < 5e-3 * fine, "{coarse} vs {fine}");
    assert!((fine - 0.6607).abs() < 0.01 * 0.6607, "{fine}");
}
