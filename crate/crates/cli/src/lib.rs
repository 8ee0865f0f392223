//! Command-line front end: config parsing, band sweeps, field export, verification.

pub mod config;
pub mod run;

pub use config::RunConfig;

/// Exit status for an error: 2 for numerical failures, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<cavity_bloch::Error>() {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}
