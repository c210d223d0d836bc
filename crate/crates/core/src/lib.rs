//! Mean-variance spanning tests for panels of asset returns.
//!
//! The batch-mean Cauchy-combination (BCS) tests live in [`spanning`], the
//! classical competitors in [`classical`], simulators in [`dgp`] and the
//! size/power harness in [`montecarlo`].

pub mod classical;
pub mod cli;
pub mod dgp;
pub mod distributions;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
pub mod regression;
pub mod report;
pub mod spanning;

pub use error::{Error, Result};
pub use panel::ReturnPanel;
pub use spanning::{bcs_test, BcsConfig, Decision, Hypothesis, PValue, TestOutcome};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const GIT_HASH: &str = env!("SPANLAB_GIT_HASH");
