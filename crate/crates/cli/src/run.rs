use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{ensure, Context};
use cavity_bloch::dispersion::{bloch_field, cutoff, dispersion_clusters, near_exceptional};
use cavity_bloch::oracle::{oracle_validation_suite, ValidationReport};
use cavity_bloch::capacitance::richardson_extrapolate;
use cavity_bloch::{enumerate_exceptional, load_off, solve_capacitance, ClusterBranch, ExceptionalSet, Shape, Vec3};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;

pub const SCHEMA_LINE: &str = "# schema=1";
pub const BANDS_HEADER: &str =
    "path_coord,kx,ky,kz,order_n,branch_s,k_squared,omega,shift_order,amplitude_determined,near_exceptional_warning";
pub const FIELD_HEADER: &str = "x,y,z,re,im,abs,warning";

/// 17 significant digits, locale-free.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// One sampled Bloch vector on the path.
#[derive(Debug, Clone)]
pub struct KSample {
    pub path_coord: f64,
    pub k: Vec3,
}

/// Uniform samples along each segment in fractional coordinates, endpoints shared.
pub fn sample_path(config: &RunConfig) -> anyhow::Result<Vec<KSample>> {
    let lattice = config.lattice()?;
    let nodes = &config.kpath.nodes;
    let per = config.kpath.samples_per_segment;
    let mut out = Vec::with_capacity((nodes.len() - 1) * per + 1);
    let mut coord = 0.0;
    for (seg, pair) in nodes.windows(2).enumerate() {
        let a = lattice.reciprocal_cartesian(pair[0].frac);
        let b = lattice.reciprocal_cartesian(pair[1].frac);
        let last = seg + 2 == nodes.len();
        let steps = if last { per + 1 } else { per };
        for j in 0..steps {
            let t = j as f64 / per as f64;
            let frac = [0, 1, 2].map(|i| pair[0].frac[i] + t * (pair[1].frac[i] - pair[0].frac[i]));
            out.push(KSample {
                path_coord: coord + t * (b - a).norm(),
                k: lattice.reciprocal_cartesian(frac),
            });
        }
        coord += (b - a).norm();
    }
    Ok(out)
}

struct SampleRows {
    order: usize,
    text: String,
}

/// The band table as CSV. Samples are processed on the current rayon pool and
/// emitted in path order.
pub fn bands_csv(config: &RunConfig) -> anyhow::Result<String> {
    let q = config.resolve_q()?;
    let params = config.params(q)?;
    let samples = sample_path(config)?;
    let tol = config.medium.exceptional_tol;

    let rows: Vec<SampleRows> = samples
        .par_iter()
        .map(|s| -> anyhow::Result<SampleRows> {
            let exc = enumerate_exceptional(&params.lattice, s.k, tol)?;
            let warn = exc.order == 1 && near_exceptional(&params, s.k)?;
            let mut text = String::new();
            for b in dispersion_clusters(&params, &exc) {
                writeln!(
                    text,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    fmt_f64(s.path_coord),
                    fmt_f64(s.k.x),
                    fmt_f64(s.k.y),
                    fmt_f64(s.k.z),
                    exc.order,
                    b.index,
                    fmt_f64(b.k_squared),
                    fmt_f64(b.omega),
                    b.shift_order.label(),
                    b.amplitude_determined,
                    warn
                )?;
            }
            Ok(SampleRows { order: exc.order, text })
        })
        .collect::<anyhow::Result<_>>()?;

    let mut out = String::new();
    writeln!(out, "{SCHEMA_LINE}")?;
    writeln!(out, "# q={}", fmt_f64(q))?;
    let orders: BTreeSet<usize> = rows.iter().map(|r| r.order).collect();
    for n in orders {
        let c = cutoff(&params, n)?;
        writeln!(
            out,
            "# cutoff n={n} s=1 omega_c={} lambda_max={}",
            fmt_f64(c.omega_c),
            fmt_f64(c.lambda_max)
        )?;
        if n > 1 {
            writeln!(out, "# cutoff n={n} s>1 O(a), unresolved at leading order")?;
        }
    }
    writeln!(out, "{BANDS_HEADER}")?;
    for r in rows {
        out.push_str(&r.text);
    }
    Ok(out)
}

/// Branch `branch` (1-based) at path sample `k_index`, with its exceptional set.
pub fn select_branch(config: &RunConfig, k_index: usize, branch: usize) -> anyhow::Result<(ClusterBranch, ExceptionalSet)> {
    let samples = sample_path(config)?;
    ensure!(
        k_index < samples.len(),
        "k index {k_index} out of range: the path has {} samples",
        samples.len()
    );
    let q = config.resolve_q()?;
    let params = config.params(q)?;
    let exc = enumerate_exceptional(&params.lattice, samples[k_index].k, config.medium.exceptional_tol)?;
    let branches = dispersion_clusters(&params, &exc);
    ensure!(
        branch >= 1 && branch <= branches.len(),
        "branch {branch} out of range: k sample {k_index} has {} branches",
        branches.len()
    );
    Ok((branches[branch - 1].clone(), exc))
}

/// Leading-order field of one branch on an `n³` grid over the period cell.
pub fn field_csv(config: &RunConfig, k_index: usize, branch: usize, grid: usize) -> anyhow::Result<String> {
    ensure!(grid >= 1, "grid must be at least 1");
    let (b, exc) = select_branch(config, k_index, branch)?;
    let lattice = config.lattice()?;
    let mut points = Vec::with_capacity(grid * grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            for l in 0..grid {
                let f = [i, j, l].map(|x| x as f64 / grid as f64);
                points.push(lattice.direct_cartesian(f));
            }
        }
    }
    let values = bloch_field(&b, &exc, &points)?;
    let warning = if b.amplitude_determined { "" } else { "amplitude_undetermined" };
    let mut out = String::new();
    writeln!(out, "{SCHEMA_LINE}")?;
    writeln!(out, "{FIELD_HEADER}")?;
    for (x, u) in points.iter().zip(values) {
        writeln!(
            out,
            "{},{},{},{},{},{},{warning}",
            fmt_f64(x.x),
            fmt_f64(x.y),
            fmt_f64(x.z),
            fmt_f64(u.re),
            fmt_f64(u.im),
            fmt_f64(u.norm())
        )?;
    }
    Ok(out)
}

/// Pass/fail thresholds of the verification report.
pub const SLOPE_TOL: f64 = 0.02;
pub const SAMPLE_TOL: f64 = 0.02;
pub const SAMPLE_A_MAX: f64 = 1e-3;
pub const MIN_ERROR_ORDER: f64 = 1.7;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutput {
    pub pass: bool,
    pub checks: Vec<Check>,
    pub report: ValidationReport,
}

pub fn verify(config: &RunConfig) -> anyhow::Result<VerifyOutput> {
    let q = config.resolve_q()?;
    let lattice = config.lattice()?;
    let report = oracle_validation_suite(&lattice, q, &config.verify.a_values)?;
    let mut checks = Vec::new();
    let mut push = |name: String, value: f64, threshold: f64, pass: bool| {
        checks.push(Check {
            name,
            value,
            threshold,
            pass,
        })
    };
    for case in &report.cases {
        push(
            format!("{}: slope relative error", case.label),
            case.slope_relative_error,
            SLOPE_TOL,
            case.slope_relative_error <= SLOPE_TOL,
        );
        for s in case.samples.iter().filter(|s| s.a <= SAMPLE_A_MAX) {
            push(
                format!("{}: relative error at a={}", case.label, s.a),
                s.relative_error,
                SAMPLE_TOL,
                s.relative_error <= SAMPLE_TOL,
            );
        }
        if let Some(p) = case.fitted_error_order {
            push(format!("{}: error order in a", case.label), p, MIN_ERROR_ORDER, p >= MIN_ERROR_ORDER);
        }
    }
    let u = &report.unshifted;
    push(
        "unshifted: pole multiplicity".into(),
        u.residue.multiplicity,
        u.order as f64,
        u.residue.count == u.order,
    );
    let max_shift = u.shift_per_alpha.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    push("unshifted: O(a) shift of s>1 clusters".into(), max_shift, 1e-12, max_shift <= 1e-12);
    push(
        "unshifted: shifted roots below next pole".into(),
        u.shifted_roots as f64,
        1.0,
        u.shifted_roots == 1,
    );
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyOutput { pass, checks, report })
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacitanceOutput {
    pub q: f64,
    pub residual: f64,
    pub triangles: usize,
    pub fitted_order: Option<f64>,
    /// Present with `--extrapolate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub non_monotone: Option<bool>,
    pub units: &'static str,
}

const UNITS: &str = "unit-scale shape coefficient; the physical capacitance is a*q";

/// Builtin names `sphere`, `cube` and `spheroid` (semi-axes 2, 1, 1), otherwise an OFF path.
pub fn shape_from_arg(arg: &str) -> anyhow::Result<Shape> {
    Ok(match arg {
        "sphere" => Shape::Sphere { radius: 1.0 },
        "cube" => Shape::Box { sides: Vec3::repeat(1.0) },
        "spheroid" => Shape::Ellipsoid {
            semi_axes: Vec3::new(2.0, 1.0, 1.0),
        },
        path => {
            let bytes = std::fs::read(Path::new(path))
                .with_context(|| format!("'{path}' is neither a builtin shape (sphere, cube, spheroid) nor a readable file"))?;
            Shape::Mesh(load_off(&bytes)?)
        }
    })
}

/// Solves at `refinements`, or extrapolates over levels `refinements-2 ..= refinements`.
pub fn capacitance(shape: &Shape, refinements: u32, extrapolate: bool) -> anyhow::Result<CapacitanceOutput> {
    let finest = shape.mesh(refinements)?;
    if !extrapolate {
        let sol = solve_capacitance(&finest)?;
        return Ok(CapacitanceOutput {
            q: sol.q,
            residual: sol.residual,
            triangles: finest.len(),
            fitted_order: None,
            level_values: None,
            non_monotone: None,
            units: UNITS,
        });
    }
    ensure!(refinements >= 2, "--extrapolate needs --refinements of at least 2");
    let mut sizes = Vec::new();
    let mut values = Vec::new();
    let mut residual = 0.0;
    for level in refinements - 2..=refinements {
        let mesh = if level == refinements { finest.clone() } else { shape.mesh(level)? };
        let sol = solve_capacitance(&mesh)?;
        sizes.push(mesh.mesh_size());
        values.push(sol.q);
        residual = sol.residual;
    }
    let est = richardson_extrapolate(&sizes, &values)?;
    Ok(CapacitanceOutput {
        q: est.q,
        residual,
        triangles: finest.len(),
        fitted_order: est.fitted_order,
        level_values: Some(est.level_values),
        non_monotone: Some(est.non_monotone),
        units: UNITS,
    })
}
