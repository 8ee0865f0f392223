//! Direct and reciprocal lattices, and detection of exceptional Bloch vectors.
//!
//! A Bloch vector `k` is exceptional of order `n` when exactly `n` reciprocal
//! lattice points `m` (the origin included) lie on the sphere `|k - m| = |k|`,
//! equivalently on the Bragg planes `2 k·m = |m|^2`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Default relative band for the exceptional-plane test.
pub const DEFAULT_EXCEPTIONAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    /// Direct basis vectors ℓ₁, ℓ₂, ℓ₃.
    pub ell: [Vec3; 3],
    /// Reciprocal basis with `ell[i]·recip[j] = 2π δ_ij`.
    pub recip: [Vec3; 3],
    /// Volume of the periodicity cell.
    pub cell_volume: f64,
}

/// An integer combination `m = m₁b₁ + m₂b₂ + m₃b₃` of the reciprocal basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReciprocalPoint {
    pub coeffs: [i64; 3],
    pub vec: Vec3,
}

impl ReciprocalPoint {
    pub fn is_zero(&self) -> bool {
        self.coeffs == [0, 0, 0]
    }
}

/// The reciprocal lattice points on the sphere through the origin centred at `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalSet {
    pub k: Vec3,
    pub order: usize,
    /// `points[0]` is the origin; the rest are sorted by coefficients.
    pub points: Vec<ReciprocalPoint>,
    pub tolerance: f64,
}

impl ExceptionalSet {
    pub fn is_exceptional(&self) -> bool {
        self.order > 1
    }

    /// Propagation directions `k - m_j` of the plane waves in a cluster.
    pub fn directions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| self.k - p.vec).collect()
    }
}

/// Builds the lattice spanned by `ell1, ell2, ell3` together with its reciprocal basis.
pub fn make_lattice(ell1: Vec3, ell2: Vec3, ell3: Vec3) -> Result<Lattice> {
    let rows = Matrix3::from_rows(&[ell1.transpose(), ell2.transpose(), ell3.transpose()]);
    let det = rows.determinant();
    let threshold = 1e-14 * ell1.norm() * ell2.norm() * ell3.norm();
    if !det.is_finite() || det.abs() <= threshold {
        return Err(Error::DegenerateLattice { det, threshold });
    }
    let inv = rows
        .try_inverse()
        .ok_or(Error::DegenerateLattice { det, threshold })?;
    // Columns of the inverse are dual to the rows; b_j = 2π · column j.
    let recip = [
        2.0 * PI * inv.column(0).into_owned(),
        2.0 * PI * inv.column(1).into_owned(),
        2.0 * PI * inv.column(2).into_owned(),
    ];
    Ok(Lattice {
        ell: [ell1, ell2, ell3],
        recip,
        cell_volume: det.abs(),
    })
}

impl Lattice {
    /// Simple cubic lattice with edge `period`.
    pub fn cubic(period: f64) -> Result<Lattice> {
        make_lattice(
            Vec3::new(period, 0.0, 0.0),
            Vec3::new(0.0, period, 0.0),
            Vec3::new(0.0, 0.0, period),
        )
    }

    pub fn reciprocal_point(&self, coeffs: [i64; 3]) -> ReciprocalPoint {
        let vec = coeffs[0] as f64 * self.recip[0]
            + coeffs[1] as f64 * self.recip[1]
            + coeffs[2] as f64 * self.recip[2];
        ReciprocalPoint { coeffs, vec }
    }

    /// Direct lattice vector `n₁ℓ₁ + n₂ℓ₂ + n₃ℓ₃`.
    pub fn direct_point(&self, coeffs: [i64; 3]) -> Vec3 {
        coeffs[0] as f64 * self.ell[0] + coeffs[1] as f64 * self.ell[1] + coeffs[2] as f64 * self.ell[2]
    }

    /// Converts fractional reciprocal coordinates to a Cartesian wave vector.
    pub fn reciprocal_cartesian(&self, frac: [f64; 3]) -> Vec3 {
        frac[0] * self.recip[0] + frac[1] * self.recip[1] + frac[2] * self.recip[2]
    }

    /// Converts fractional direct coordinates to a Cartesian position.
    pub fn direct_cartesian(&self, frac: [f64; 3]) -> Vec3 {
        frac[0] * self.ell[0] + frac[1] * self.ell[1] + frac[2] * self.ell[2]
    }

    pub fn min_period(&self) -> f64 {
        self.ell.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min)
    }

    /// Every reciprocal point with `|m| <= radius`, in lexicographic coefficient order.
    ///
    /// Since `m_i = ℓ_i·m / 2π`, the box `|m_i| <= |ℓ_i| radius / 2π` contains the ball.
    pub fn reciprocal_points_within(&self, radius: f64) -> Vec<ReciprocalPoint> {
        let bounds = self.ell.map(|l| (l.norm() * radius / (2.0 * PI)).floor() as i64);
        let mut out = Vec::new();
        let r2 = radius * radius;
        for m1 in -bounds[0]..=bounds[0] {
            for m2 in -bounds[1]..=bounds[1] {
                for m3 in -bounds[2]..=bounds[2] {
                    let p = self.reciprocal_point([m1, m2, m3]);
                    if p.vec.norm_squared() <= r2 {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    /// Every direct lattice vector with `|R| <= radius`, in lexicographic coefficient order.
    pub fn direct_points_within(&self, radius: f64) -> Vec<([i64; 3], Vec3)> {
        let bounds = self.recip.map(|b| (b.norm() * radius / (2.0 * PI)).floor() as i64);
        let mut out = Vec::new();
        let r2 = radius * radius;
        for n1 in -bounds[0]..=bounds[0] {
            for n2 in -bounds[1]..=bounds[1] {
                for n3 in -bounds[2]..=bounds[2] {
                    let r = self.direct_point([n1, n2, n3]);
                    if r.norm_squared() <= r2 {
                        out.push(([n1, n2, n3], r));
                    }
                }
            }
        }
        out
    }
}

/// The exceptional-plane test used throughout: `|2k·m - |m|²| <= tol (1 + |m|²)`.
pub fn on_exceptional_sphere(k: &Vec3, m: &Vec3, tol: f64) -> bool {
    let m2 = m.norm_squared();
    (2.0 * k.dot(m) - m2).abs() <= tol * (1.0 + m2)
}

/// Radius that provably contains every solution of the banded plane test.
///
/// From `(1 - tol)|m|² - 2|k||m| - tol <= 0`.
fn exceptional_search_radius(k_norm: f64, tol: f64) -> f64 {
    let t = tol.min(0.5);
    let r = (k_norm + (k_norm * k_norm + t * (1.0 - t)).sqrt()) / (1.0 - t);
    r * (1.0 + 1e-6) + 1e-12
}

/// Finds all reciprocal lattice points on the sphere `|k - m| = |k|`.
pub fn enumerate_exceptional(lattice: &Lattice, k: Vec3, tol: f64) -> Result<ExceptionalSet> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if !k.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidArgument("wave vector must be finite".into()));
    }
    let radius = exceptional_search_radius(k.norm(), tol);
    let mut points = vec![lattice.reciprocal_point([0, 0, 0])];
    points.extend(
        lattice
            .reciprocal_points_within(radius)
            .into_iter()
            .filter(|p| !p.is_zero() && on_exceptional_sphere(&k, &p.vec, tol)),
    );
    Ok(ExceptionalSet {
        k,
        order: points.len(),
        points,
        tolerance: tol,
    })
}

/// Distance from `k` to the nearest Bragg plane `2k·m = |m|²` with `0 < |m| <= search_radius`.
pub fn distance_to_exceptional(lattice: &Lattice, k: Vec3, search_radius: f64) -> Result<f64> {
    if !(search_radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "search radius must be positive, got {search_radius}"
        )));
    }
    lattice
        .reciprocal_points_within(search_radius)
        .into_iter()
        .filter(|p| !p.is_zero())
        .map(|p| {
            let norm = p.vec.norm();
            (k.dot(&p.vec) / norm - 0.5 * norm).abs()
        })
        .min_by(|a, b| a.total_cmp(b))
        .ok_or(Error::EmptySearch(search_radius))
}
