//! Estimators for "mutual-information-like" leakage between continuous random
//! variables.
//!
//! Leakage of a secret `X` through a view `Y` is measured by comparing samples
//! of the joint distribution `P_(X,Y)` with samples of the product of the
//! marginals `P_X ⊗ P_Y`. Five families of estimators are provided:
//!
//! | module | quantity |
//! |--------|----------|
//! | [`hist_divergence`] | KL, TV and JS divergences on shared-grid histograms |
//! | [`transport`] | Wasserstein-1 by exact transportation LP and by Sinkhorn scaling |
//! | [`knn`] | KL divergence from k-nearest-neighbour distances |
//! | [`mmd`] | unbiased squared maximum mean discrepancy, Gaussian kernel |
//! | [`oracles`] | closed-form Gaussian references (KL, W2, TV/JS bounds) |
//!
//! [`scenarios`] generates the two secret-sharing leakage scenarios,
//! [`bounds`] checks the analytic relations between the measures, and
//! [`harness`] drives convergence sweeps and writes CSV summaries.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod hist_divergence;
pub mod histogram;
pub mod knn;
pub mod mmd;
mod numeric;
pub mod oracles;
pub mod scenarios;
pub mod transport;

pub use error::{Error, Result};
pub use hist_divergence::{DivergenceKind, DivergenceValue, LogBase};
pub use histogram::{BinRange, HistogramGrid};
pub use scenarios::{GaussianSpec, SampleMatrix, ScenarioKind, ScenarioSpec};
pub use transport::{TransportPlan, TransportProblem};
