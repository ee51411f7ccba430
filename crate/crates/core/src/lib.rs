//! Preference-controllable multi-objective generation at desk scale.
//!
//! Stage one merges backbone policies, each trained on a blend of the
//! objective rewards, with coefficients solved from the user preference.
//! Stage two steers the merged policy token by token with a merged value
//! model. Everything runs on small tabular models so each step can be
//! checked exactly.
//!
//! - [`merge`]: weight matrices, coefficient solving, merging, extrapolation
//! - [`oracle`]: closed-form quadratic-reward testbed
//! - [`world`]: the token-generation task, tabular policies, training
//! - [`value`]: explicit and implicit value models, merging and ensembling
//! - [`decode`]: guided greedy, beam, and ensemble decoding
//! - [`metrics`]: hypervolume, inner product, sparsity, spacing, controllability
//! - [`runner`]: configuration, checkpoints, sweeps, CSV and reports

pub mod decode;
pub mod error;
pub mod merge;
pub mod metrics;
pub mod oracle;
pub mod runner;
pub mod value;
pub mod world;

pub use error::{Error, Result};
