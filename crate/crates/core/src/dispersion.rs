//! Leading-order dispersion relations for a lattice of small Dirichlet cavities.
//!
//! For a cavity `aΩ̂` with capacitance coefficient `q` in a cell of volume `|Π|`, the
//! leading-order shift of `k² = ω²/c²` away from `|𝐤|²` is `4π a q / |Π|` for a
//! non-exceptional Bloch vector. At an exceptional vector of order `n` the degenerate
//! plane waves split into clusters: the symmetric one (amplitudes all equal) carries
//! `n` times that shift, every other cluster has no `O(a)` shift.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{distance_to_exceptional, enumerate_exceptional, ExceptionalSet, Lattice, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct MediumParams {
    pub lattice: Lattice,
    /// Cavity scale. Zero gives the empty lattice.
    pub a: f64,
    /// Capacitance coefficient of the unit-scale shape.
    pub q: f64,
    /// Wave speed in the host medium.
    pub c: f64,
}

impl MediumParams {
    pub fn new(lattice: Lattice, a: f64, q: f64, c: f64) -> Result<MediumParams> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("cavity scale a must be non-negative, got {a}")));
        }
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::InvalidArgument(format!("capacitance coefficient must be non-negative, got {q}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("wave speed must be positive, got {c}")));
        }
        Ok(MediumParams { lattice, a, q, c })
    }

    /// Leading-order shift `4π a q / |Π|` of `k²` for a single plane wave.
    pub fn unit_shift(&self) -> f64 {
        4.0 * PI * self.a * self.q / self.lattice.cell_volume
    }

    /// True when the scaled cavity is not small against the lattice spacing.
    pub fn cavity_too_large(&self, shape_diameter: f64) -> bool {
        self.a * shape_diameter > 0.2 * self.lattice.min_period()
    }
}

/// Order in `a` of the leading nonzero shift of `k²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ShiftOrder {
    /// Shift is `O(a)` and given explicitly.
    #[serde(rename = "A")]
    OrderA,
    /// The `O(a)` term vanishes; the `O(a²)` remainder is not resolved.
    #[serde(rename = "A2")]
    OrderA2,
}

impl ShiftOrder {
    pub fn label(self) -> &'static str {
        match self {
            ShiftOrder::OrderA => "A",
            ShiftOrder::OrderA2 => "A2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterBranch {
    /// Branch index, starting at 1 for the symmetric cluster.
    pub index: usize,
    pub k_squared: f64,
    pub omega: f64,
    /// Amplitudes of the plane waves `exp(-i(𝐤 - 𝐦_j)·x)`.
    #[serde(skip)]
    pub tau: Vec<Complex64>,
    pub shift_order: ShiftOrder,
    /// False when only the subspace of admissible amplitudes is known at leading order.
    pub amplitude_determined: bool,
}

impl ClusterBranch {
    pub fn tau_real(&self) -> Vec<f64> {
        self.tau.iter().map(|t| t.re).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffData {
    pub omega_c: f64,
    pub lambda_max: f64,
}

/// Dispersion branch of a non-exceptional Bloch vector.
pub fn dispersion_nonexceptional(params: &MediumParams, k: Vec3) -> Result<ClusterBranch> {
    let exc = enumerate_exceptional(&params.lattice, k, crate::lattice::DEFAULT_EXCEPTIONAL_TOL)?;
    if exc.is_exceptional() {
        return Err(Error::ExceptionalVector(exc.order));
    }
    Ok(symmetric_branch(params, k, 1))
}

fn symmetric_branch(params: &MediumParams, k: Vec3, n: usize) -> ClusterBranch {
    let k_squared = k.norm_squared() + n as f64 * params.unit_shift();
    let amp = 1.0 / (n as f64).sqrt();
    ClusterBranch {
        index: 1,
        k_squared,
        omega: params.c * k_squared.sqrt(),
        tau: vec![Complex64::new(amp, 0.0); n],
        shift_order: ShiftOrder::OrderA,
        amplitude_determined: true,
    }
}

/// All leading-order cluster branches at `exc.k`, branch 1 first.
pub fn dispersion_clusters(params: &MediumParams, exc: &ExceptionalSet) -> Vec<ClusterBranch> {
    let n = exc.order;
    let k = exc.k;
    let mut branches = vec![symmetric_branch(params, k, n)];
    if n == 1 {
        return branches;
    }
    let k_squared = k.norm_squared();
    let omega = params.c * k_squared.sqrt();
    for s in 2..=n {
        branches.push(ClusterBranch {
            index: s,
            k_squared,
            omega,
            tau: helmert_vector(n, s).into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
            shift_order: ShiftOrder::OrderA2,
            amplitude_determined: n == 2,
        });
    }
    branches
}

/// Unit vector `∝ (1, …, 1, -(s-1), 0, …, 0)` with `s - 1` leading ones (`2 <= s <= n`).
///
/// For `n = 2, s = 2` this is `(1, -1)/√2`.
pub fn helmert_vector(n: usize, s: usize) -> Vec<f64> {
    assert!(s >= 2 && s <= n, "Helmert index {s} outside 2..={n}");
    let m = (s - 1) as f64;
    let norm = (m * (m + 1.0)).sqrt();
    let mut v = vec![0.0; n];
    for x in v.iter_mut().take(s - 1) {
        *x = 1.0 / norm;
    }
    v[s - 1] = -m / norm;
    v
}

/// Spectrum of the `n × n` all-ones matrix, in closed form.
///
/// Eigenvalue `n` on `(1, …, 1)/√n`, then zero on the Helmert vectors.
pub fn cluster_j_spectrum(n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if n < 1 {
        return Err(Error::InvalidArgument("cluster size must be at least 1".into()));
    }
    let mut values = vec![n as f64];
    let mut vectors = vec![vec![1.0 / (n as f64).sqrt(); n]];
    for s in 2..=n {
        values.push(0.0);
        vectors.push(helmert_vector(n, s));
    }
    Ok((values, vectors))
}

/// Cutoff frequency and wavelength of a branch whose shift is `n` unit shifts.
pub fn cutoff(params: &MediumParams, n: usize) -> Result<CutoffData> {
    if n < 1 {
        return Err(Error::InvalidArgument("cluster size must be at least 1".into()));
    }
    let nq = params.a * n as f64 * params.q;
    let volume = params.lattice.cell_volume;
    Ok(CutoffData {
        omega_c: 2.0 * params.c * (PI * nq / volume).sqrt(),
        lambda_max: (PI * volume / nq).sqrt(),
    })
}

/// Leading-order field `Σ_j τ_j exp(-i(𝐤 - 𝐦_j)·x)` of a branch at the given points.
pub fn bloch_field(branch: &ClusterBranch, exc: &ExceptionalSet, points: &[Vec3]) -> Result<Vec<Complex64>> {
    if branch.tau.len() != exc.order {
        return Err(Error::DimensionMismatch {
            expected: exc.order,
            got: branch.tau.len(),
        });
    }
    let directions = exc.directions();
    Ok(points
        .iter()
        .map(|x| {
            branch
                .tau
                .iter()
                .zip(&directions)
                .map(|(tau, p)| tau * Complex64::from_polar(1.0, -p.dot(x)))
                .sum()
        })
        .collect())
}

/// Warning for applying the non-exceptional formula close to a Bragg plane.
///
/// Flags `𝐤` when its distance to the nearest plane is below `10 · (4πaq/|Π|) / |𝐤|`.
/// At `𝐤 = 0` every plane is at least half a reciprocal vector away, so nothing is flagged.
pub fn near_exceptional(params: &MediumParams, k: Vec3) -> Result<bool> {
    let k_norm = k.norm();
    if k_norm == 0.0 || params.unit_shift() == 0.0 {
        return Ok(false);
    }
    let threshold = 10.0 * params.unit_shift() / k_norm;
    // Planes at distance ≤ threshold from 𝐤 have |𝐦| ≤ 2(|𝐤| + threshold).
    let radius = 2.0 * (k_norm + threshold) + 1e-12;
    match distance_to_exceptional(&params.lattice, k, radius) {
        Ok(d) => Ok(d < threshold),
        Err(Error::EmptySearch(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibilityReport {
    pub order: usize,
    /// `4π a q / (|𝐤|² |Π|)`, the coupling in the leading-order cluster equation.
    pub coupling: f64,
    /// `defects[s][j]`: residual of the single-direction amplitude `e_j` at branch `s + 1`.
    pub defects: Vec<Vec<f64>>,
    pub min_defect: f64,
    /// `coupling · √(n-1)/n · (1 - 10a)`, clamped at zero.
    pub lower_bound: f64,
    /// True when every defect is positive and above the lower bound.
    pub holds: bool,
}

/// Tests every single-direction amplitude vector against the leading-order cluster
/// equation `(2ε I - β J) τ = 0`, with `β = 4πaq/(|𝐤|²|Π|)` and `2ε = (k_s² - |𝐤|²)/|𝐤|²`.
pub fn single_direction_infeasibility(params: &MediumParams, exc: &ExceptionalSet) -> Result<InfeasibilityReport> {
    let n = exc.order;
    if n < 2 {
        return Err(Error::InvalidArgument(
            "single-direction analysis applies only to exceptional wave vectors".into(),
        ));
    }
    let k2 = exc.k.norm_squared();
    let coupling = params.unit_shift() / k2;
    let branches = dispersion_clusters(params, exc);
    let defects: Vec<Vec<f64>> = branches
        .iter()
        .map(|b| {
            let two_eps = (b.k_squared - k2) / k2;
            (0..n)
                .map(|j| {
                    // Column j of 2ε I - β J.
                    (0..n)
                        .map(|i| if i == j { two_eps - coupling } else { -coupling })
                        .map(|x| x * x)
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    let min_defect = defects.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let lower_bound = (coupling * ((n - 1) as f64).sqrt() / n as f64 * (1.0 - 10.0 * params.a)).max(0.0);
    Ok(InfeasibilityReport {
        order: n,
        coupling,
        defects,
        min_defect,
        lower_bound,
        holds: min_defect > 0.0 && min_defect >= lower_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic_params(a: f64) -> MediumParams {
        MediumParams::new(Lattice::cubic(2.0 * PI).unwrap(), a, 1.0, 1.0).unwrap()
    }

    fn exc(k: Vec3) -> ExceptionalSet {
        enumerate_exceptional(&Lattice::cubic(2.0 * PI).unwrap(), k, 1e-9).unwrap()
    }

    #[test]
    fn nonexceptional_shift_value() {
        let k = Vec3::new(0.13, 0.21, 0.34);
        let b = dispersion_nonexceptional(&cubic_params(0.01), k).unwrap();
        let shift = b.k_squared - k.norm_squared();
        assert!((shift - 5.0660591821168885e-4).abs() < 1e-15, "{shift:e}");
        assert_eq!(b.tau, vec![Complex64::new(1.0, 0.0)]);
        assert_eq!(b.shift_order, ShiftOrder::OrderA);
    }

    #[test]
    fn zero_cavity_is_empty_lattice() {
        let k = Vec3::new(0.13, 0.21, 0.34);
        let b = dispersion_nonexceptional(&cubic_params(0.0), k).unwrap();
        assert_eq!(b.k_squared, k.norm_squared());
    }

    #[test]
    fn exceptional_vector_rejected_by_single_wave_formula() {
        let err = dispersion_nonexceptional(&cubic_params(0.01), Vec3::new(0.5, 0.0, 0.0)).unwrap_err();
        assert!(err.to_string().contains("use dispersion_clusters"));
    }

    #[test]
    fn order_two_clusters() {
        let e = exc(Vec3::new(0.5, 0.0, 0.0));
        let b = dispersion_clusters(&cubic_params(0.01), &e);
        assert_eq!(b.len(), 2);
        assert!((b[0].k_squared - 0.25 - 1.0132118364233778e-3).abs() < 1e-15);
        assert_eq!(b[1].k_squared, 0.25);
        let h = 1.0 / 2f64.sqrt();
        assert_eq!(b[1].tau_real(), vec![h, -h]);
        assert!(b[1].amplitude_determined);
        assert_eq!(b[1].shift_order, ShiftOrder::OrderA2);
    }

    #[test]
    fn order_one_delegates() {
        let k = Vec3::new(0.13, 0.21, 0.34);
        let p = cubic_params(0.01);
        let b = dispersion_clusters(&p, &exc(k));
        assert_eq!(b, vec![dispersion_nonexceptional(&p, k).unwrap()]);
    }

    #[test]
    fn order_four_helmert_basis() {
        let p = cubic_params(0.01);
        let b = dispersion_clusters(&p, &exc(Vec3::new(0.5, 0.5, 0.0)));
        assert_eq!(b.len(), 4);
        assert!((b[0].k_squared - 0.5 - 4.0 * p.unit_shift()).abs() < 1e-15);
        for s in 1..4 {
            assert!(!b[s].amplitude_determined);
            let sum: f64 = b[s].tau_real().iter().sum();
            assert!(sum.abs() < 1e-15);
        }
    }

    #[test]
    fn cutoff_values() {
        let c = cutoff(&cubic_params(0.01), 1).unwrap();
        assert!((c.omega_c - 0.022507907903927652).abs() < 1e-12, "{}", c.omega_c);
        assert!((c.lambda_max - 279.15456798555516).abs() < 1e-9, "{}", c.lambda_max);
        let c2 = cutoff(&cubic_params(0.01), 2).unwrap();
        assert!((c2.omega_c / c.omega_c - 2f64.sqrt()).abs() < 1e-14);
        assert!((c.lambda_max / c2.lambda_max - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn j_spectrum_rejects_zero() {
        assert!(cluster_j_spectrum(0).is_err());
        assert_eq!(cluster_j_spectrum(1).unwrap(), (vec![1.0], vec![vec![1.0]]));
        assert_eq!(cluster_j_spectrum(3).unwrap().0, vec![3.0, 0.0, 0.0]);
    }

    #[test]
    fn fields_at_cavity_site() {
        let p = cubic_params(0.01);
        let single = exc(Vec3::new(0.13, 0.21, 0.34));
        let b = dispersion_clusters(&p, &single);
        assert_eq!(bloch_field(&b[0], &single, &[Vec3::zeros()]).unwrap()[0], Complex64::new(1.0, 0.0));

        let e = exc(Vec3::new(0.5, 0.0, 0.0));
        let b = dispersion_clusters(&p, &e);
        let origin = [Vec3::zeros()];
        assert!((bloch_field(&b[0], &e, &origin).unwrap()[0].re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(bloch_field(&b[1], &e, &origin).unwrap()[0].norm(), 0.0);
        assert!(bloch_field(&b[0], &single, &origin).is_err());
    }

    #[test]
    fn infeasibility_needs_exceptional_vector() {
        let p = cubic_params(0.01);
        assert!(single_direction_infeasibility(&p, &exc(Vec3::new(0.13, 0.21, 0.34))).is_err());
        let r = single_direction_infeasibility(&p, &exc(Vec3::new(0.5, 0.0, 0.0))).unwrap();
        assert!(r.holds);
        let bound = r.coupling / 2f64.sqrt() * (1.0 - 0.1);
        assert!(r.defects.iter().all(|row| row[0] >= bound));
    }

    #[test]
    fn near_exceptional_flag() {
        let p = cubic_params(0.01);
        assert!(near_exceptional(&p, Vec3::new(0.5 - 1e-4, 0.0, 0.0)).unwrap());
        assert!(!near_exceptional(&p, Vec3::new(0.25, 0.1, 0.0)).unwrap());
        assert!(!near_exceptional(&p, Vec3::zeros()).unwrap());
    }
}
