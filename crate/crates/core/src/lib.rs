//! Certified logarithmic Sobolev constants for block-structured Gibbs
//! measures `q = exp(−V)` on `ℝ^N`, with exact Gaussian and Monte Carlo
//! verification of the entropy inequalities they imply.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod campaign;
pub mod criteria;
pub mod error;
pub mod fokker_planck;
pub mod gaussian;
pub mod gibbs;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod toeplitz;

pub use criteria::{CriteriaReport, DEFAULT_TOL};
pub use error::{Error, Result};
pub use gaussian::GaussianDist;
pub use gibbs::GaussianMixture;
pub use model::{load_model, AssumptionReport, BlockPartition, GibbsModel, ProbeSet};
