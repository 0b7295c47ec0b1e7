//! Generalized bootstrap aggregating (Bagging) for ℓ1-regularized sparse
//! recovery.
//!
//! Bagging here has two free parameters: the bootstrap sample size `L`
//! (usually quoted as the ratio `L/m`) and the number of estimates `K`. Each
//! estimate is a Lasso fit on `L` rows drawn with replacement; the bagged
//! solution is their average.
//!
//! Modules:
//! - [`linalg`], [`rng`]: dense matrices and seeded, splittable random streams.
//! - [`lasso`]: ADMM Lasso, a coordinate-descent oracle and a KKT certificate.
//! - [`ensemble`]: bootstrap sampling, Bagging, Bolasso and the plain ℓ1 baseline.
//! - [`theory`]: RIP/NSP checks, recovery constants, tail and Bagging error
//!   bounds with Monte-Carlo validators.
//! - [`experiment`]: the simulation sweep over `(m, L/m, K, λ)`.

pub mod ensemble;
pub mod experiment;
pub mod error;
pub mod lasso;
pub mod linalg;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
pub use lasso::{
    coordinate_descent_oracle, kkt_residual, objective, soft_threshold, solve_lasso, AdmmSolver,
    LassoConfig, LassoSolution,
};
pub use linalg::{gaussian_matrix, normalize_columns, DenseMatrix};
pub use rng::{Role, RngStream};
