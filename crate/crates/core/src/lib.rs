//! Nonparametric distributional regression with a single deterministic
//! network.
//!
//! The library trains a feed-forward network that maps an input
//! together with a uniform noise vector to a target sample, by
//! minimizing a negated finite-sample energy score. Repeated forward
//! passes under fresh noise then yield an arbitrary-size ensemble that
//! approximates the predictive distribution p(y|x). The crate also
//! ships the measurement side: histogram densities, distribution
//! distances (Jensen-Shannon, Hellinger, Wasserstein-1, energy
//! distance), proper scoring rules (CRPS, KDE-based NLL), synthetic
//! data generators with their analytic conditional densities, a
//! quantile-normal preprocessor for tabular data, and a numerical
//! check that the expected score is minimized exactly at the true
//! distribution.

pub mod compute;
pub mod data;
pub mod error;
pub mod inference;
pub mod loss;
pub mod mathx;
pub mod metrics;
pub mod model;
pub mod propriety;
pub mod trainer;

pub use error::{Error, Result};
