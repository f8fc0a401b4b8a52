//! Separate-and-learn OOD detection on unlabeled wild data.
//!
//! A K-class predictor is trained on labeled in-distribution (ID) data, each
//! wild sample is turned into a loss gradient relative to the mean ID
//! gradient, and samples whose centered gradient projects strongly onto the
//! top singular direction(s) of the wild gradient matrix are taken as
//! candidate outliers. A binary ID-vs-outlier head is then trained on the
//! ID data and those candidates.
//!
//! Module layout follows the pipeline:
//!
//! - [`numerics`]: dense vectors/matrices, power iteration, percentiles, seeded RNG
//! - [`datagen`]: Gaussian toy data, Huber mixtures, CSV IO
//! - [`model`]: two-layer tanh network, binary head, losses and gradients
//! - [`erm`]: SGD training of the ID classifier
//! - [`filter`]: reference gradients, gradient matrix, scores, thresholding
//! - [`oodtrain`]: joint training of the binary OOD head
//! - [`eval`]: FPR at fixed TPR, AUROC, ID accuracy, post-hoc scoring
//! - [`theory`]: gradient discrepancy and the derived error diagnostics
//! - [`experiment`]: config-driven staged runner writing artifacts to disk

pub mod datagen;
pub mod erm;
mod error;
pub mod eval;
pub mod experiment;
pub mod filter;
pub mod model;
pub mod numerics;
pub mod oodtrain;
pub mod theory;

pub use error::{Result, SalError};
