//! Optimal investment and proportional reinsurance for an insurer with
//! forward exponential preferences, in a market where a finite-state Markov
//! chain drives both the claim intensity and the coefficients of a CEV stock.
//!
//! The crate is organised bottom-up:
//!
//! * [`regime`]: exact simulation and stationary analysis of the chain.
//! * [`claims`]: claim intensity, Cox-process thinning, truncated-exponential
//!   claim sizes and their tilted moments.
//! * [`premium`]: insurance and reinsurance premium rules with analytic
//!   retention derivatives.
//! * [`config`]: the model configuration file, defaults and the standing
//!   assumption checks.
//! * [`retention`]: the optimal proportional reinsurance level.
//! * [`forward`]: the forward performance exponent `h`, the optimal
//!   portfolio and the forward utility.
//! * [`backward`]: the classical terminal-utility benchmark for independent
//!   markets.
//! * [`simulate`]: joint path simulation and the Monte Carlo martingale and
//!   density checks.

pub mod backward;
pub mod claims;
pub mod config;
mod error;
pub mod forward;
pub mod premium;
pub mod regime;
pub mod retention;
mod roots;
pub mod simulate;
mod stats;

pub use error::{Error, Result};
pub use roots::{bisect, bracketed_root, RootOutcome};
pub use stats::NeumaierSum;
