//! Optimal and drift-maximizing fitness-dependent mutation strengths and
//! rates for elitist (1+1) unbiased algorithms on OneMax.
//!
//! - [`kernel`]: transition laws on fitness levels.
//! - [`policy`]: per-level parameter tables (drift-maximizing, time-optimal,
//!   static, Bäck's rule).
//! - [`runtime`]: expected remaining and total optimization times.
//! - [`simulate`]: reproducible Monte Carlo runs and anytime statistics.
//! - [`oracle`]: exact rational reference computations for small `n`.
//! - [`cli`]: the `onemax` command-line front end.

pub mod cli;
pub mod error;
pub mod kernel;
pub mod math;
pub mod oracle;
pub mod policy;
pub mod runtime;
pub mod simulate;

pub use error::{Error, Result};
