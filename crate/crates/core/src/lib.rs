//! Multiple kernel k-means clustering.
//!
//! The central solver minimizes the kernel alignment `max_H Tr(K_γ H Hᵀ)`
//! over simplex weights γ with reduced gradient descent
//! ([`simple_mkkm::solve`]). Baselines, evaluation metrics, dataset I/O and a
//! command-line harness sit around it.

pub mod baselines;
pub mod cli;
pub mod data_io;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod simple_mkkm;
pub mod spectral;

pub use error::{Error, Result};
pub use kernel::{combine_linear, combine_squared, BallWeights, KernelMatrix, KernelSet, SimplexWeights};
pub use simple_mkkm::{solve, solve_kamm_r, SolveResult, SolverOptions};
pub use spectral::{discretize, solve_relaxed_kkm, ClusterLabels, Partition};
