//! Run configuration.
//!
//! A config is a TOML document with the sections below; unknown keys are rejected.
//!
//! ```toml
//! [lattice]
//! ell1 = [1.0, 0.0, 0.0]          # direct basis, length units
//! ell2 = [0.0, 1.0, 0.0]
//! ell3 = [0.0, 0.0, 1.0]
//!
//! [cavity]
//! shape = "sphere"                # sphere | ellipsoid | box | mesh
//! radius = 1.0                    # sphere
//! # semi_axes = [2.0, 1.0, 1.0]   # ellipsoid
//! # sides = [1.0, 1.0, 1.0]       # box
//! # path = "cavity.off"           # mesh, relative to the config file
//! refinement = 3                  # icosphere level, box 2^level, or OFF subdivisions
//! # q = 1.0                       # skip the boundary-element solve
//!
//! [medium]
//! a = 0.01                        # cavity scale
//! c = 1.0                         # wave speed (default 1)
//! exceptional_tol = 1e-9          # default 1e-9
//!
//! [kpath]
//! samples_per_segment = 8
//! nodes = [
//!   { label = "G", frac = [0.0, 0.0, 0.0] },   # reciprocal-basis coordinates
//!   { label = "X", frac = [0.5, 0.0, 0.0] },
//! ]
//!
//! [verify]                        # optional
//! a_values = [1e-3, 5e-4, 2.5e-4]
//!
//! [output]                        # optional; stdout when absent
//! bands = "bands.csv"
//! field = "field.csv"
//! verify = "verify.json"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use cavity_bloch::lattice::DEFAULT_EXCEPTIONAL_TOL;
use cavity_bloch::{load_off, make_lattice, solve_capacitance, Lattice, MediumParams, Shape, Vec3};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub ell1: [f64; 3],
    pub ell2: [f64; 3],
    pub ell3: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySpec {
    pub shape: String,
    pub radius: Option<f64>,
    pub semi_axes: Option<[f64; 3]>,
    pub sides: Option<[f64; 3]>,
    pub path: Option<PathBuf>,
    #[serde(default = "default_refinement")]
    pub refinement: u32,
    pub q: Option<f64>,
}

fn default_refinement() -> u32 {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub a: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_tol")]
    pub exceptional_tol: f64,
}

fn default_c() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    DEFAULT_EXCEPTIONAL_TOL
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KNode {
    pub label: String,
    pub frac: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KPath {
    pub nodes: Vec<KNode>,
    pub samples_per_segment: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub a_values: Vec<f64>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            a_values: vec![1e-3, 5e-4, 2.5e-4],
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub bands: Option<PathBuf>,
    pub field: Option<PathBuf>,
    pub verify: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSpec,
    pub cavity: CavitySpec,
    pub medium: MediumSpec,
    pub kpath: KPath,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse(&text, base).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Parses and validates config text; errors carry line and column.
    pub fn parse(text: &str, base_dir: PathBuf) -> anyhow::Result<RunConfig> {
        let mut config: RunConfig = toml::from_str(text)?;
        config.base_dir = base_dir;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> anyhow::Result<()> {
        let m = &self.medium;
        ensure!(m.a >= 0.0 && m.a.is_finite(), "medium.a must be non-negative, got {}", m.a);
        ensure!(m.c > 0.0 && m.c.is_finite(), "medium.c must be positive, got {}", m.c);
        ensure!(
            m.exceptional_tol > 0.0 && m.exceptional_tol < 0.5,
            "medium.exceptional_tol must lie in (0, 0.5), got {}",
            m.exceptional_tol
        );
        ensure!(self.kpath.nodes.len() >= 2, "kpath needs at least two nodes");
        ensure!(self.kpath.samples_per_segment >= 1, "kpath.samples_per_segment must be at least 1");
        for node in &self.kpath.nodes {
            ensure!(node.frac.iter().all(|x| x.is_finite()), "k-point {} is not finite", node.label);
        }
        if let Some(q) = self.cavity.q {
            ensure!(q > 0.0 && q.is_finite(), "cavity.q must be positive, got {q}");
        }
        if let Some(path) = &self.cavity.path {
            let full = self.base_dir.join(path);
            ensure!(full.exists(), "cavity mesh {} does not exist", full.display());
        }
        self.shape()?;
        Ok(())
    }

    pub fn lattice(&self) -> anyhow::Result<Lattice> {
        let v = |a: [f64; 3]| Vec3::from(a);
        let l = &self.lattice;
        Ok(make_lattice(v(l.ell1), v(l.ell2), v(l.ell3))?)
    }

    pub fn shape(&self) -> anyhow::Result<Shape> {
        let c = &self.cavity;
        let shape = match c.shape.as_str() {
            "sphere" => Shape::Sphere {
                radius: c.radius.context("cavity.radius is required for a sphere")?,
            },
            "ellipsoid" => Shape::Ellipsoid {
                semi_axes: Vec3::from(c.semi_axes.context("cavity.semi_axes is required for an ellipsoid")?),
            },
            "box" => Shape::Box {
                sides: Vec3::from(c.sides.context("cavity.sides is required for a box")?),
            },
            "mesh" => {
                let path = self.base_dir.join(c.path.as_ref().context("cavity.path is required for a mesh")?);
                let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
                Shape::Mesh(load_off(&bytes)?)
            }
            other => bail!("unknown cavity.shape '{other}' (sphere, ellipsoid, box, mesh)"),
        };
        Ok(shape)
    }

    /// Capacitance coefficient: the configured override, or a boundary-element solve.
    pub fn resolve_q(&self) -> anyhow::Result<f64> {
        if let Some(q) = self.cavity.q {
            return Ok(q);
        }
        let mesh = self.shape()?.mesh(self.cavity.refinement)?;
        let sol = solve_capacitance(&mesh)?;
        log::info!("capacitance q = {} on {} triangles", sol.q, mesh.len());
        let params = MediumParams::new(self.lattice()?, self.medium.a, sol.q, self.medium.c)?;
        if params.cavity_too_large(mesh.diameter()) {
            log::warn!("cavity diameter a·d exceeds 0.2 of the shortest period; asymptotics are unreliable");
        }
        Ok(sol.q)
    }

    pub fn params(&self, q: f64) -> anyhow::Result<MediumParams> {
        Ok(MediumParams::new(self.lattice()?, self.medium.a, q, self.medium.c)?)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }
}
