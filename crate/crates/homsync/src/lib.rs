//! Simulation and estimation library for bidirectional two-way clock
//! synchronization with weak coherent pulses and Hong-Ou-Mandel (HOM)
//! interference.
//!
//! Two parties with a constant, unknown clock offset exchange trains of
//! BB84-polarized weak coherent pulses and interfere them on local 50/50
//! beamsplitters. Sweeping a local variable delay line traces an inverted
//! Gaussian coincidence dip; fitting the dip in both directions and
//! recovering the integer pulse-index offsets yields the clock offset with
//! the unknown channel delay cancelled. Post-selection on matched BB84
//! preparations doubles as source authentication: an intercept-resend
//! attack raises the post-selected coincidence floor above the honest
//! minimum, which a binomial threshold test detects.
//!
//! Modules:
//! - [`model`]: closed-form coincidence/visibility formulas,
//! - [`sim`]: seeded Monte Carlo pulse-train and coincidence simulation,
//! - [`estimate`]: weighted dip fitting, correlation scan, offset algebra,
//! - [`security`]: intercept-resend model and eavesdropper detection,
//! - [`config`] / [`pipeline`] / [`report`]: experiment orchestration and
//!   byte-stable result emission.

pub mod config;
pub mod estimate;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod security;
pub mod sim;
pub mod stats;

pub use estimate::FitError;

/// Crate-level error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a mathematical precondition.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),
    /// The dip fit failed.
    #[error("fit failure: {0}")]
    Fit(#[from] FitError),
    /// Not enough events to support the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
