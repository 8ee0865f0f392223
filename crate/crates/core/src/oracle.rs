//! Exact dispersion of a lattice of isotropic point scatterers.
//!
//! The quasi-periodic Green's function
//! `G(x) = (1/|Π|) Σ_𝐦 exp(i(𝐤-𝐦)·x) / (|𝐤-𝐦|² - z)` behaves like `1/(4π|x|) + g(𝐤, z)`
//! at the origin. A point scatterer of scattering length `α` supports a Bloch wave at
//! `z = k²` exactly when `g(𝐤, z) = -1/(4πα)`. With `α = a q` the small-`α` roots reproduce
//! the cavity asymptotics, which makes this model an independent check.
//!
//! `g` is evaluated by Ewald splitting of the heat-kernel representation at
//! `t₀ = 1/(4η²)`:
//!
//! * spectral part `(1/|Π|) Σ_𝐦 exp(-t₀(|𝐩|² - z)) / (|𝐩|² - z)`, `𝐩 = 𝐤 - 𝐦`;
//! * real-space part `Σ_{𝐑≠0} cos(𝐤·𝐑) ∫₀^{t₀} (4πt)^{-3/2} exp(-|𝐑|²/4t + zt) dt`;
//! * self part `-η/(2π^{3/2}) + (4π)^{-3/2} Σ_{j≥1} z^j t₀^{j-1/2} / (j! (j - 1/2))`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{enumerate_exceptional, Lattice, Vec3, DEFAULT_EXCEPTIONAL_TOL};
use crate::quadrature::gauss_legendre;
use crate::roots::{bisect_secant, RootOptions};

/// Terms with Gaussian factor below `exp(-CUTOFF_EXPONENT)` are dropped.
const CUTOFF_EXPONENT: f64 = 46.0;
const DEFAULT_TOL: f64 = 1e-8;
const PANELS: usize = 16;
const NODES_PER_PANEL: usize = 20;

/// Truncated lattice sums for one splitting parameter.
#[derive(Debug, Clone)]
struct EwaldTerms {
    eta: f64,
    t0: f64,
    /// `|𝐤 - 𝐦|²` for the retained spectral terms.
    spectral: Vec<f64>,
    /// Distinct shell radii `|𝐑| > 0` with the summed phase `Σ cos(𝐤·𝐑)` over the shell.
    shells: Vec<(f64, f64)>,
    spectral_cut: f64,
    spatial_cut: f64,
}

impl EwaldTerms {
    fn new(lattice: &Lattice, k: &Vec3, eta: f64, z_max: f64) -> EwaldTerms {
        let t0 = 1.0 / (4.0 * eta * eta);
        let zp = z_max.max(0.0);
        let spectral_cut = (zp + CUTOFF_EXPONENT / t0).sqrt();
        let spectral = lattice
            .reciprocal_points_within(spectral_cut + k.norm())
            .into_iter()
            .map(|m| (k - m.vec).norm_squared())
            .filter(|&p2| p2 <= spectral_cut * spectral_cut)
            .collect();

        // exp(-r²/4t + zt) <= exp(-r²/4t₀ + z t₀) on [0, t₀].
        let spatial_cut = 2.0 * (t0 * (CUTOFF_EXPONENT + zp * t0)).sqrt();
        let mut points: Vec<(f64, f64)> = lattice
            .direct_points_within(spatial_cut)
            .into_iter()
            .filter(|(n, _)| *n != [0, 0, 0])
            .map(|(_, r)| (r.norm(), k.dot(&r).cos()))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut shells: Vec<(f64, f64)> = Vec::new();
        for (r, c) in points {
            match shells.last_mut() {
                Some((r0, sum)) if (r - *r0).abs() <= 1e-12 * r => *sum += c,
                _ => shells.push((r, c)),
            }
        }
        EwaldTerms {
            eta,
            t0,
            spectral,
            shells,
            spectral_cut,
            spatial_cut,
        }
    }

    fn evaluate(&self, z: f64, volume: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
        let t0 = self.t0;
        let spectral: f64 = self
            .spectral
            .iter()
            .map(|&p2| {
                let d = p2 - z;
                (-t0 * d).exp() / d
            })
            .sum::<f64>()
            / volume;

        let (nodes, weights) = rule;
        let norm = (4.0 * PI).powf(-1.5);
        let h = t0 / PANELS as f64;
        let real: f64 = self
            .shells
            .iter()
            .map(|&(r, phase)| {
                let quarter_r2 = 0.25 * r * r;
                let mut integral = 0.0;
                for panel in 0..PANELS {
                    let mid = (panel as f64 + 0.5) * h;
                    for (x, w) in nodes.iter().zip(weights) {
                        let t = mid + 0.5 * h * x;
                        integral += w * t.powf(-1.5) * (-quarter_r2 / t + z * t).exp();
                    }
                }
                phase * norm * 0.5 * h * integral
            })
            .sum();

        spectral + real + self_term(self.eta, t0, z)
    }
}

/// `lim_{r→0} [∫₀^{t₀} (4πt)^{-3/2} e^{-r²/4t + zt} dt - 1/(4πr)]`.
fn self_term(eta: f64, t0: f64, z: f64) -> f64 {
    let mut series = 0.0;
    // term_j = (z t₀)^j / j!
    let mut term = 1.0;
    for j in 1..200 {
        term *= z * t0 / j as f64;
        let contribution = term / (j as f64 - 0.5);
        series += contribution;
        if contribution.abs() < 1e-18 * series.abs().max(1e-300) {
            break;
        }
    }
    -eta / (2.0 * PI.powf(1.5)) + (4.0 * PI).powf(-1.5) * t0.powf(-0.5) * series
}

/// Lattice, Bloch vector and truncation data for evaluating `g(𝐤, z)`.
#[derive(Debug, Clone)]
pub struct LatticeSumContext {
    pub lattice: Lattice,
    pub k: Vec3,
    pub ewald_eta: f64,
    /// Radius in `|𝐤 - 𝐦|` of the retained spectral terms.
    pub spectral_cut: f64,
    /// Radius in `|𝐑|` of the retained real-space terms.
    pub spatial_cut: f64,
    /// Target relative accuracy, checked by re-evaluating at `2η`.
    pub tol: f64,
    /// Largest `z` the truncation radii were chosen for.
    pub z_max: f64,
    primary: EwaldTerms,
    check: EwaldTerms,
    rule: (Vec<f64>, Vec<f64>),
}

impl LatticeSumContext {
    /// Context with the default splitting `η = √π / |Π|^{1/3}`, valid for `z <= z_max`.
    pub fn new(lattice: &Lattice, k: Vec3, z_max: f64) -> Result<LatticeSumContext> {
        let eta = PI.sqrt() / lattice.cell_volume.cbrt();
        Self::with_eta(lattice, k, z_max, eta)
    }

    pub fn with_eta(lattice: &Lattice, k: Vec3, z_max: f64, eta: f64) -> Result<LatticeSumContext> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("Ewald parameter must be positive, got {eta}")));
        }
        if !z_max.is_finite() || !k.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite lattice-sum input".into()));
        }
        let primary = EwaldTerms::new(lattice, &k, eta, z_max);
        let check = EwaldTerms::new(lattice, &k, 2.0 * eta, z_max);
        Ok(LatticeSumContext {
            lattice: lattice.clone(),
            k,
            ewald_eta: eta,
            spectral_cut: primary.spectral_cut,
            spatial_cut: primary.spatial_cut,
            tol: DEFAULT_TOL,
            z_max,
            primary,
            check,
            rule: gauss_legendre(NODES_PER_PANEL),
        })
    }

    pub fn with_tol(mut self, tol: f64) -> LatticeSumContext {
        self.tol = tol;
        self
    }

    /// Poles `|𝐤 - 𝐦|²` retained in the spectral sum, ascending.
    pub fn poles(&self) -> Vec<f64> {
        let mut p = self.primary.spectral.clone();
        p.sort_by(|a, b| a.total_cmp(b));
        p
    }

    /// Smallest pole strictly above `z`, ignoring poles within `rel_gap` of it.
    pub fn next_pole_above(&self, z: f64, rel_gap: f64) -> Option<f64> {
        self.primary
            .spectral
            .iter()
            .copied()
            .filter(|&p| p > z + rel_gap * (1.0 + z.abs()))
            .min_by(|a, b| a.total_cmp(b))
    }

    /// `g` at the primary η, without the invariance check.
    pub fn green_unchecked(&self, z: f64) -> f64 {
        self.primary.evaluate(z, self.lattice.cell_volume, &self.rule)
    }

    /// `g` at `2η`.
    pub fn green_at_double_eta(&self, z: f64) -> f64 {
        self.check.evaluate(z, self.lattice.cell_volume, &self.rule)
    }
}

/// Regularized value `g(𝐤, z)` of the quasi-periodic Green's function at the origin.
pub fn regularized_green(ctx: &LatticeSumContext, z: f64) -> Result<f64> {
    if !z.is_finite() || z > ctx.z_max {
        return Err(Error::InvalidArgument(format!(
            "z = {z} outside the range z <= {} covered by the lattice-sum context",
            ctx.z_max
        )));
    }
    let gap_tol = 1e-10 * (1.0 + z.abs());
    if let Some(&pole) = ctx
        .primary
        .spectral
        .iter()
        .find(|&&p| (z - p).abs() < gap_tol)
    {
        return Err(Error::ResonantZ { z, pole, gap: gap_tol });
    }
    let g = ctx.green_unchecked(z);
    let g2 = ctx.green_at_double_eta(z);
    let defect = (g - g2).abs() / (1.0 + g.abs());
    if !(defect <= ctx.tol) {
        return Err(Error::LatticeSumNotConverged(defect));
    }
    Ok(g)
}

/// Root of `g(𝐤, z) + 1/(4πα)` in `bracket`, by bisection then secant steps.
pub fn oracle_dispersion_root(ctx: &LatticeSumContext, alpha: f64, bracket: (f64, f64)) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("scattering length must be positive, got {alpha}")));
    }
    let target = 1.0 / (4.0 * PI * alpha);
    let (lo, hi) = bracket;
    let f = |z: f64| regularized_green(ctx, z).map(|g| g + target);
    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::BracketInvalid { lo, hi, f_lo, f_hi });
    }
    bisect_secant(f, lo, hi, RootOptions::default())
}

/// Bracket from just above `|𝐤|²` to just below the next higher pole.
pub fn bracket_above_k(ctx: &LatticeSumContext) -> Result<(f64, f64)> {
    let k2 = ctx.k.norm_squared();
    let offset = 1e-9 * (1.0 + k2);
    let next = ctx
        .next_pole_above(k2, 1e-9)
        .ok_or_else(|| Error::InvalidArgument("no pole above |k|² within the context range".into()))?;
    Ok((k2 + offset, next - 1e-9 * (1.0 + next)))
}

/// Residue of `g` at the pole `|𝐤|²`, in units of `1/|Π|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidueFit {
    /// Extrapolated `lim_{z→|𝐤|²} g(𝐤,z)(|𝐤|² - z)`.
    pub residue: f64,
    /// `residue · |Π|`, the number of coincident poles.
    pub multiplicity: f64,
    pub count: usize,
}

/// Fits `g(𝐤, |𝐤|² - δ)·δ = R + cδ` by least squares over the offsets `deltas`.
pub fn pole_residue(ctx: &LatticeSumContext, deltas: &[f64]) -> Result<ResidueFit> {
    if deltas.len() < 2 {
        return Err(Error::InvalidArgument("residue fit needs at least two offsets".into()));
    }
    let k2 = ctx.k.norm_squared();
    let samples: Vec<(f64, f64)> = deltas
        .iter()
        .map(|&d| regularized_green(ctx, k2 - d).map(|g| (d, g * d)))
        .collect::<Result<_>>()?;
    let (intercept, _) = linear_fit(&samples);
    let multiplicity = intercept * ctx.lattice.cell_volume;
    Ok(ResidueFit {
        residue: intercept,
        multiplicity,
        count: multiplicity.round().max(0.0) as usize,
    })
}

/// Least-squares line `y = intercept + slope·x`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// One `a` value of a validation case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSample {
    pub a: f64,
    pub alpha: f64,
    pub z_star: f64,
    /// `|𝐤|² + 4π n α / |Π|`.
    pub asymptotic_value: f64,
    pub abs_error: f64,
    /// `|z* - asymptotic| / (z* - |𝐤|²)`; zero when there is no shift.
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCase {
    pub label: String,
    pub k: [f64; 3],
    pub order: usize,
    pub samples: Vec<OracleSample>,
    /// Extrapolated `d z*/dα` at `α → 0`.
    pub fitted_slope: f64,
    /// `4π n / |Π|`.
    pub expected_slope: f64,
    pub slope_relative_error: f64,
    /// Log-log slope of `|z* - asymptotic|` against `a`; `None` without a scatterer.
    pub fitted_error_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnshiftedBranchCheck {
    pub k: [f64; 3],
    pub order: usize,
    pub residue: ResidueFit,
    /// Leading-order shifts `(4πα/|Π|)(Σ_j τ_j)²` of the `n - 1` non-symmetric clusters,
    /// per unit `α`.
    pub shift_per_alpha: Vec<f64>,
    /// Shifted roots of the scatterer condition between `|𝐤|²` and the next pole.
    pub shifted_roots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub q: f64,
    pub cell_volume: f64,
    pub cases: Vec<OracleCase>,
    pub unshifted: UnshiftedBranchCheck,
}

/// Point-scatterer roots for one Bloch vector across the `a` ladder.
pub fn oracle_case(lattice: &Lattice, label: &str, k: Vec3, q: f64, a_values: &[f64]) -> Result<OracleCase> {
    let exc = enumerate_exceptional(lattice, k, DEFAULT_EXCEPTIONAL_TOL)?;
    let n = exc.order;
    let k2 = k.norm_squared();
    let unit = 4.0 * PI * n as f64 / lattice.cell_volume;
    let a_max = a_values.iter().copied().fold(0.0, f64::max);
    // Room for the largest shift plus the next pole above |k|².
    let z_max = k2 + 4.0 * lattice.recip.iter().map(|b| b.norm()).fold(0.0, f64::max).powi(2) + unit * a_max * q;
    let ctx = LatticeSumContext::new(lattice, k, z_max)?;
    let bracket = bracket_above_k(&ctx)?;

    let mut samples = Vec::with_capacity(a_values.len());
    for &a in a_values {
        let alpha = a * q;
        let z_star = if alpha == 0.0 { k2 } else { oracle_dispersion_root(&ctx, alpha, bracket)? };
        let asymptotic_value = k2 + unit * alpha;
        let abs_error = (z_star - asymptotic_value).abs();
        let shift = z_star - k2;
        samples.push(OracleSample {
            a,
            alpha,
            z_star,
            asymptotic_value,
            abs_error,
            relative_error: if shift != 0.0 { abs_error / shift.abs() } else { 0.0 },
        });
    }

    let slopes: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.alpha > 0.0)
        .map(|s| (s.alpha, (s.z_star - k2) / s.alpha))
        .collect();
    let fitted_slope = if slopes.len() >= 2 { linear_fit(&slopes).0 } else { 0.0 };
    let errors: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.alpha > 0.0 && s.abs_error > 0.0)
        .map(|s| (s.a.ln(), s.abs_error.ln()))
        .collect();
    let fitted_error_order = (errors.len() >= 2).then(|| linear_fit(&errors).1);
    Ok(OracleCase {
        label: label.to_string(),
        k: [k.x, k.y, k.z],
        order: n,
        samples,
        fitted_slope,
        expected_slope: unit,
        slope_relative_error: if q > 0.0 { (fitted_slope - unit).abs() / unit } else { 0.0 },
        fitted_error_order,
    })
}

/// Pole structure at an exceptional vector: `n` coincident poles, one shifted root.
pub fn unshifted_branch_check(lattice: &Lattice, k: Vec3) -> Result<UnshiftedBranchCheck> {
    let exc = enumerate_exceptional(lattice, k, DEFAULT_EXCEPTIONAL_TOL)?;
    let n = exc.order;
    let k2 = k.norm_squared();
    let z_max = k2 + 4.0 * lattice.recip.iter().map(|b| b.norm()).fold(0.0, f64::max).powi(2);
    let ctx = LatticeSumContext::new(lattice, k, z_max)?;
    let residue = pole_residue(&ctx, &[1e-3, 1e-4, 1e-5])?;

    let per_alpha = 4.0 * PI / lattice.cell_volume;
    let shift_per_alpha = (2..=n)
        .map(|s| {
            let sum: f64 = crate::dispersion::helmert_vector(n, s).iter().sum();
            per_alpha * sum * sum
        })
        .collect();

    // g increases between poles, so a sign-change count over a fine grid counts roots.
    let (lo, hi) = bracket_above_k(&ctx)?;
    let target = 1.0 / (4.0 * PI * 1e-3);
    let grid = 64;
    let mut shifted_roots = 0;
    let mut prev: Option<f64> = None;
    for i in 0..=grid {
        let z = lo + (hi - lo) * (i as f64 / grid as f64).powi(3);
        let f = regularized_green(&ctx, z)? + target;
        if let Some(p) = prev {
            if p.signum() != f.signum() {
                shifted_roots += 1;
            }
        }
        prev = Some(f);
    }
    Ok(UnshiftedBranchCheck {
        k: [k.x, k.y, k.z],
        order: n,
        residue,
        shift_per_alpha,
        shifted_roots,
    })
}

/// Non-exceptional and order-2 comparisons of the point model with the closed forms.
///
/// The non-exceptional vector is `(0.13, 0.21, 0.34)` and the exceptional one `b₁/2`,
/// both in fractional reciprocal coordinates.
pub fn oracle_validation_suite(lattice: &Lattice, q: f64, a_values: &[f64]) -> Result<ValidationReport> {
    if a_values.len() < 3 {
        return Err(Error::InvalidArgument("validation needs at least three a values".into()));
    }
    if !a_values.windows(2).all(|w| w[1] < w[0]) || a_values.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::InvalidArgument("a values must be positive and strictly decreasing".into()));
    }
    if !(q >= 0.0) {
        return Err(Error::InvalidArgument(format!("q must be non-negative, got {q}")));
    }
    let k_generic = lattice.reciprocal_cartesian([0.13, 0.21, 0.34]);
    let k_edge = lattice.reciprocal_cartesian([0.5, 0.0, 0.0]);
    let cases = vec![
        oracle_case(lattice, "non-exceptional", k_generic, q, a_values)?,
        oracle_case(lattice, "exceptional", k_edge, q, a_values)?,
    ];
    Ok(ValidationReport {
        q,
        cell_volume: lattice.cell_volume,
        cases,
        unshifted: unshifted_branch_check(lattice, k_edge)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> Lattice {
        Lattice::cubic(2.0 * PI).unwrap()
    }

    #[test]
    fn eta_invariance_generic_point() {
        let ctx = LatticeSumContext::new(&cubic(), Vec3::new(0.13, 0.21, 0.34), 4.0).unwrap();
        let g = ctx.green_unchecked(0.01);
        let g2 = ctx.green_at_double_eta(0.01);
        assert!((g - g2).abs() <= 1e-8 * (1.0 + g.abs()), "{g} vs {g2}");
        assert!(regularized_green(&ctx, 0.01).is_ok());
    }

    #[test]
    fn resonance_is_rejected() {
        let k = Vec3::new(0.13, 0.21, 0.34);
        let ctx = LatticeSumContext::new(&cubic(), k, 4.0).unwrap();
        let err = regularized_green(&ctx, k.norm_squared()).unwrap_err();
        assert!(err.to_string().contains("resonant z"));
    }

    #[test]
    fn bracket_must_change_sign() {
        let k = Vec3::new(0.13, 0.21, 0.34);
        let ctx = LatticeSumContext::new(&cubic(), k, 4.0).unwrap();
        let k2 = k.norm_squared();
        let err = oracle_dispersion_root(&ctx, 1e-3, (k2 + 0.05, k2 + 0.06)).unwrap_err();
        assert!(err.to_string().contains("bracket invalid"), "{err}");
    }

    #[test]
    fn self_term_at_zero_z() {
        let eta = 0.3;
        assert!((self_term(eta, 1.0 / (4.0 * eta * eta), 0.0) + eta / (2.0 * PI.powf(1.5))).abs() < 1e-16);
    }

    #[test]
    fn linear_fit_exact_line() {
        let (b, m) = linear_fit(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]);
        assert!((b - 1.0).abs() < 1e-14 && (m - 2.0).abs() < 1e-14);
    }
}
