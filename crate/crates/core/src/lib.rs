//! Leading-order Bloch-wave dispersion for periodic media with small Dirichlet cavities.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: direct/reciprocal bases and exceptional Bloch vectors;
//! * [`geometry`]: closed triangle meshes of the unit-scale cavity;
//! * [`capacitance`]: single-layer boundary elements for the shape coefficient `q`;
//! * [`dispersion`]: closed-form dispersion branches, cutoffs, and cluster fields;
//! * [`oracle`]: exact point-scatterer lattice model used to cross-check the asymptotics.

pub mod capacitance;
pub mod dispersion;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod oracle;
mod quadrature;
pub mod roots;

pub use capacitance::{richardson_q, solve_capacitance, CapacitanceSolution, RichardsonEstimate};
pub use dispersion::{ClusterBranch, CutoffData, MediumParams, ShiftOrder};
pub use error::{Error, Result};
pub use geometry::{load_off, Shape, SurfaceMesh};
pub use lattice::{
    distance_to_exceptional, enumerate_exceptional, make_lattice, ExceptionalSet, Lattice, ReciprocalPoint, Vec3,
};
pub use oracle::LatticeSumContext;
