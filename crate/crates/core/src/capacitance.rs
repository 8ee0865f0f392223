//! Capacitance coefficient of the unit-scale cavity.
//!
//! The exterior potential `v` with `v = 1` on the surface is represented as a single
//! layer `v(x) = ∫ σ(η) / |x - η| dS_η`; then `v ~ q/|x|` at infinity with
//! `q = ∫ σ dS`. The density is piecewise constant on the triangles and the
//! boundary condition is collocated at the centroids.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::lu::partial_pivoting::factor::{lu_in_place, lu_in_place_scratch};
use faer::{Mat, Par};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::SurfaceMesh;
use crate::lattice::Vec3;
use crate::roots::{bisect_secant, RootOptions};

/// Condition estimates above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// Largest collocation residual accepted from the direct solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Exact `∫_T dS_η / |p - η|` over a flat triangle.
///
/// Sums, over the edges, the in-plane log term and the solid-angle-like arctangent
/// correction for an observation point off the plane.
pub fn triangle_potential(p: &Vec3, corners: &[Vec3; 3]) -> f64 {
    let [v0, v1, v2] = *corners;
    let cross = (v1 - v0).cross(&(v2 - v0));
    let n = cross / cross.norm();
    let d = (p - v0).dot(&n);
    let abs_d = d.abs();
    let rho = p - d * n;
    let scale = (v1 - v0).norm().max((v2 - v1).norm()).max((v0 - v2).norm());
    let tiny = 1e-14 * scale;

    let mut total = 0.0;
    for e in 0..3 {
        let a = corners[e];
        let b = corners[(e + 1) % 3];
        let len = (b - a).norm();
        let along = (b - a) / len;
        let outward = along.cross(&n);
        let t0 = (a - rho).dot(&outward);
        let l_minus = (a - rho).dot(&along);
        let l_plus = (b - rho).dot(&along);
        let r_minus = (p - a).norm();
        let r_plus = (p - b).norm();
        let r0_sq = t0 * t0 + d * d;

        if t0.abs() > tiny {
            // ln(R + l), rewritten as ln(R0²/(R - l)) when l < 0 to avoid cancellation.
            let log_term = |r: f64, l: f64| {
                if l >= 0.0 {
                    (r + l).ln()
                } else {
                    (r0_sq / (r - l)).ln()
                }
            };
            total += t0 * (log_term(r_plus, l_plus) - log_term(r_minus, l_minus));
        }
        if abs_d > tiny {
            total -= abs_d
                * ((t0 * l_plus).atan2(r0_sq + abs_d * r_plus) - (t0 * l_minus).atan2(r0_sq + abs_d * r_minus));
        }
    }
    total
}

/// Degree-2 three-point rule at barycentric `(2/3, 1/6, 1/6)` and permutations.
pub fn triangle_potential_gauss3(p: &Vec3, corners: &[Vec3; 3], area: f64) -> f64 {
    let [a, b, c] = *corners;
    let nodes = [
        (4.0 * a + b + c) / 6.0,
        (a + 4.0 * b + c) / 6.0,
        (a + b + 4.0 * c) / 6.0,
    ];
    nodes.iter().map(|x| 1.0 / (p - x).norm()).sum::<f64>() * area / 3.0
}

/// Integral of the single-layer kernel over triangle `j` seen from point `p`, switching to
/// the closed form within two triangle diameters.
fn kernel_entry(mesh: &SurfaceMesh, p: &Vec3, j: usize, diameters: &[f64]) -> f64 {
    let corners = mesh.corners(j);
    if (p - mesh.centroids()[j]).norm() < 2.0 * diameters[j] {
        triangle_potential(p, &corners)
    } else {
        triangle_potential_gauss3(p, &corners, mesh.areas()[j])
    }
}

/// Row-major dense single-layer matrix `S[i][j] = ∫_{T_j} dS / |c_i - η|`.
pub fn assemble_single_layer(mesh: &SurfaceMesh) -> Mat<f64> {
    let n = mesh.len();
    let diameters: Vec<f64> = (0..n).map(|t| mesh.triangle_diameter(t)).collect();
    let mut rows = vec![0.0; n * n];
    rows.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let c = mesh.centroids()[i];
        for (j, out) in row.iter_mut().enumerate() {
            *out = kernel_entry(mesh, &c, j, &diameters);
        }
    });
    Mat::from_fn(n, n, |i, j| rows[i * n + j])
}

/// Dense LU with partial pivoting, factored sequentially so results do not depend on
/// the thread count.
struct DenseLu {
    lu: Mat<f64>,
    /// Row `i` of `PA` is row `perm[i]` of `A`.
    perm: Vec<usize>,
}

impl DenseLu {
    fn new(mut a: Mat<f64>) -> DenseLu {
        let n = a.nrows();
        let mut perm = vec![0usize; n];
        let mut perm_inv = vec![0usize; n];
        let mut buf = MemBuffer::new(lu_in_place_scratch::<usize, f64>(n, n, Par::Seq, Default::default()));
        lu_in_place(
            a.as_mut(),
            &mut perm,
            &mut perm_inv,
            Par::Seq,
            MemStack::new(&mut buf),
            Default::default(),
        );
        DenseLu { lu: a, perm }
    }

    fn n(&self) -> usize {
        self.lu.nrows()
    }

    /// Solves `A x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lu[(i, k)] * y[k];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lu[(i, k)] * y[k];
            }
            y[i] = s / self.lu[(i, i)];
        }
        y
    }

    /// Solves `Aᵀ x = b`.
    fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = b, Lᵀ z = w, x = Pᵀ z.
        let mut w = b.to_vec();
        for i in 0..n {
            let mut s = w[i];
            for k in 0..i {
                s -= self.lu[(k, i)] * w[k];
            }
            w[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = w[i];
            for k in i + 1..n {
                s -= self.lu[(k, i)] * w[k];
            }
            w[i] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = w[i];
        }
        x
    }

    /// Hager's estimate of `‖A⁻¹‖₁`.
    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n();
        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            let norm: f64 = y.iter().map(|v| v.abs()).sum();
            if !norm.is_finite() {
                return f64::INFINITY;
            }
            if norm <= estimate {
                break;
            }
            estimate = norm;
            let signs: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&signs);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x = vec![0.0; n];
            x[jmax] = 1.0;
        }
        estimate
    }
}

fn norm1(a: &Mat<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct CapacitanceSolution {
    pub mesh: SurfaceMesh,
    /// Charge density per triangle.
    pub density: Vec<f64>,
    /// Total charge `Σ σ_T area_T`.
    pub q: f64,
    /// `max_i |potential(c_i) - 1|` over the collocation points.
    pub residual: f64,
    /// 1-norm condition estimate of the diagonally scaled system.
    pub condition_estimate: f64,
}

impl CapacitanceSolution {
    /// Potential of the computed charge at an arbitrary point.
    pub fn potential(&self, x: &Vec3) -> f64 {
        (0..self.mesh.len())
            .map(|j| self.density[j] * triangle_potential(x, &self.mesh.corners(j)))
            .sum()
    }
}

/// Solves the unit-potential problem on `mesh` and returns the total charge.
pub fn solve_capacitance(mesh: &SurfaceMesh) -> Result<CapacitanceSolution> {
    let n = mesh.len();
    let s = assemble_single_layer(mesh);
    let diag_scale: Vec<f64> = (0..n).map(|i| 1.0 / s[(i, i)].sqrt()).collect();
    let scaled = Mat::from_fn(n, n, |i, j| diag_scale[i] * s[(i, j)] * diag_scale[j]);
    let scaled_norm = norm1(&scaled);
    let lu = DenseLu::new(scaled);

    let condition_estimate = scaled_norm * lu.inverse_norm1_estimate();
    if !(condition_estimate <= MAX_CONDITION) {
        return Err(Error::DegenerateBem(condition_estimate));
    }

    let y = lu.solve(&diag_scale);
    let density: Vec<f64> = y.iter().zip(&diag_scale).map(|(y, d)| y * d).collect();
    let residual = (0..n)
        .map(|i| {
            let v: f64 = (0..n).map(|j| s[(i, j)] * density[j]).sum();
            (v - 1.0).abs()
        })
        .fold(0.0, f64::max);
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::DegenerateBem(condition_estimate));
    }
    let q: f64 = density.iter().zip(mesh.areas()).map(|(s, a)| s * a).sum();
    if !(q > 0.0) {
        return Err(Error::DegenerateBem(condition_estimate));
    }
    Ok(CapacitanceSolution {
        mesh: mesh.clone(),
        density,
        q,
        residual,
        condition_estimate,
    })
}

/// Result of extrapolating `q_h = q + C h^p` to `h → 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RichardsonEstimate {
    pub q: f64,
    /// Fitted convergence order; `None` when the fit was not possible.
    pub fitted_order: Option<f64>,
    /// Set when the last three levels do not converge monotonically; `q` is then the
    /// finest-level value.
    pub non_monotone: bool,
    pub mesh_sizes: Vec<f64>,
    pub level_values: Vec<f64>,
}

/// Fits `q_h = q + C h^p` through the last three `(h, q_h)` pairs (coarse to fine).
pub fn richardson_extrapolate(mesh_sizes: &[f64], values: &[f64]) -> Result<RichardsonEstimate> {
    if mesh_sizes.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: mesh_sizes.len(),
            got: values.len(),
        });
    }
    if values.len() < 3 {
        return Err(Error::InvalidArgument("Richardson extrapolation needs at least three levels".into()));
    }
    let k = values.len();
    let (h1, h2, h3) = (mesh_sizes[k - 3], mesh_sizes[k - 2], mesh_sizes[k - 1]);
    let (q1, q2, q3) = (values[k - 3], values[k - 2], values[k - 1]);
    let estimate = |q, fitted_order, non_monotone| RichardsonEstimate {
        q,
        fitted_order,
        non_monotone,
        mesh_sizes: mesh_sizes.to_vec(),
        level_values: values.to_vec(),
    };

    let d12 = q1 - q2;
    let d23 = q2 - q3;
    let noise = 1e-13 * q3.abs().max(1e-300);
    if d12.abs() <= noise && d23.abs() <= noise {
        return Ok(estimate(q3, None, false));
    }
    if d12.signum() != d23.signum() || d23 == 0.0 || !(h1 > h2 && h2 > h3 && h3 > 0.0) {
        log::warn!("non-monotone refinement sequence; returning the finest level");
        return Ok(estimate(q3, None, true));
    }
    let target = (d12 / d23).ln();
    let model = |p: f64| Ok(((h1.powf(p) - h2.powf(p)) / (h2.powf(p) - h3.powf(p))).ln() - target);
    let opts = RootOptions {
        rel_tol: 1e-12,
        ..RootOptions::default()
    };
    match bisect_secant(model, 0.05, 12.0, opts) {
        Ok(p) => {
            let q = q3 - d23 * h3.powf(p) / (h2.powf(p) - h3.powf(p));
            Ok(estimate(q, Some(p), false))
        }
        Err(_) => {
            log::warn!("convergence order outside [0.05, 12]; returning the finest level");
            Ok(estimate(q3, None, true))
        }
    }
}

/// Solves each mesh (coarse to fine) and extrapolates the total charge.
pub fn richardson_q(meshes: &[SurfaceMesh]) -> Result<RichardsonEstimate> {
    if meshes.len() < 3 {
        return Err(Error::InvalidArgument("Richardson extrapolation needs at least three meshes".into()));
    }
    let mut sizes = Vec::with_capacity(meshes.len());
    let mut values = Vec::with_capacity(meshes.len());
    for mesh in meshes {
        sizes.push(mesh.mesh_size());
        values.push(solve_capacitance(mesh)?.q);
    }
    richardson_extrapolate(&sizes, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_box_mesh, make_sphere_mesh};

    #[test]
    fn diagonal_is_positive() {
        let m = make_sphere_mesh(1.0, 1).unwrap();
        let s = assemble_single_layer(&m);
        assert!((0..m.len()).all(|i| s[(i, i)] > 0.0));
    }

    #[test]
    fn closed_form_matches_quadrature_far_away() {
        let corners = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.2, 0.9, 0.0)];
        let area = 0.45;
        for p in [Vec3::new(5.0, 3.0, 2.0), Vec3::new(-4.0, 0.3, -6.0)] {
            let exact = triangle_potential(&p, &corners);
            let approx = triangle_potential_gauss3(&p, &corners, area);
            assert!((exact - approx).abs() < 1e-4 * exact, "{exact} {approx}");
        }
    }

    #[test]
    fn closed_form_is_continuous_across_the_plane() {
        let corners = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let inplane = triangle_potential(&Vec3::new(0.2, 0.3, 0.0), &corners);
        let above = triangle_potential(&Vec3::new(0.2, 0.3, 1e-9), &corners);
        let below = triangle_potential(&Vec3::new(0.2, 0.3, -1e-9), &corners);
        assert!((inplane - above).abs() < 1e-7 && (inplane - below).abs() < 1e-7);
        // Point on an edge line and outside the triangle: log term for that edge drops out.
        let outside = triangle_potential(&Vec3::new(2.0, 0.0, 0.0), &corners);
        assert!(outside.is_finite() && outside > 0.0);
    }

    #[test]
    fn richardson_recovers_synthetic_limit() {
        let h = [0.4, 0.2, 0.1];
        let q: Vec<f64> = h.iter().map(|h: &f64| 1.5 - 0.3 * h.powf(1.5)).collect();
        let est = richardson_extrapolate(&h, &q).unwrap();
        assert!((est.q - 1.5).abs() < 1e-10);
        assert!((est.fitted_order.unwrap() - 1.5).abs() < 1e-8);
    }

    #[test]
    fn richardson_flags_non_monotone() {
        let est = richardson_extrapolate(&[0.4, 0.2, 0.1], &[1.0, 1.1, 1.05]).unwrap();
        assert!(est.non_monotone);
        assert_eq!(est.q, 1.05);
    }

    #[test]
    fn richardson_with_identical_levels() {
        let m = make_sphere_mesh(1.0, 1).unwrap();
        let est = richardson_q(&[m.clone(), m.clone(), m]).unwrap();
        assert_eq!(est.fitted_order, None);
        assert!(!est.non_monotone);
        assert!((est.q - est.level_values[2]).abs() == 0.0);
    }

    #[test]
    fn small_cube_solves() {
        let sol = solve_capacitance(&make_box_mesh(Vec3::repeat(1.0), 2).unwrap()).unwrap();
        assert!(sol.q > 0.6 && sol.q < 0.7, "{}", sol.q);
        assert!(sol.residual < 1e-10);
    }
}
