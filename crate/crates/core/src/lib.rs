//! Bayesian nonparametric multivariate ordinal regression.
//!
//! Ordinal responses are modelled as discretized latent continuous variables.
//! The joint density of latent responses and continuous covariates is a
//! truncated Dirichlet-process mixture of multivariate normals, fitted with a
//! blocked Gibbs sampler. Cut-offs are fixed; every regression functional
//! (response curves, inverse covariate densities, polychoric correlations,
//! rater agreement) is computed from stored posterior snapshots.
//!
//! Module map:
//!
//! * [`model`]: datasets, cut-off grids, hyperpriors and the sampler state.
//! * [`dist`]: normal, truncated-normal, Wishart and rectangle-probability kernels.
//! * [`prior`]: default hyperprior derivation from covariate centers and ranges.
//! * [`gibbs`]: the blocked Gibbs sampler and the snapshot store.
//! * [`functionals`]: posterior functionals computed from stored snapshots.
//! * [`binary`]: square-root-free Cholesky machinery for binary responses.
//! * [`oracle`]: simulation, exact and Monte Carlo oracles, Geweke testing.
//! * [`io`]: CSV ingestion, JSON configuration, draw persistence, run management.

pub mod binary;
pub mod dist;
mod error;
pub mod functionals;
pub mod gibbs;
pub mod io;
pub mod model;
pub mod oracle;
pub mod prior;
pub mod summary;

pub use error::{Error, Result};
