//! Prepivoted permutation tests.
//!
//! A permutation test built on any statistic is exact when every group shares
//! one distribution, but it can be badly miscalibrated when only a parameter
//! (a mean, a median) is equal across groups. Transforming the statistic by an
//! estimate of its own distribution function before permuting it, i.e.
//! permuting one minus a large-sample p-value, keeps the exactness and restores
//! asymptotic validity for equality of parameters.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`] and [`rng`]: grouped datasets, relabelling and resampling, and
//!   path-keyed random streams that make every Monte Carlo result a pure
//!   function of its seed.
//! - [`distributions`]: normal and chi-squared distribution functions and the
//!   Monte Carlo Gaussian set-probability kernel.
//! - [`statistics`]: estimation kernels and the test statistics, each exposed
//!   through its `g(n^{1/2} Θ̂ Ĉ, η̂)` factorization.
//! - [`prepivot`]: Gaussian, bootstrap and bootstrap-after-Gaussian prepivoting.
//! - [`engine`]: permutation distributions, p-values and the nested test runner.
//! - [`harness`]: generative scenarios and rejection-rate simulations.

pub mod data;
pub mod distributions;
pub mod engine;
mod error;
pub mod harness;
pub mod prepivot;
pub mod rng;
pub mod statistics;

pub use data::{GroupAssignment, GroupedDataset};
pub use engine::{exact_test, run_test, run_tests, EmpiricalDistribution, TestResult};
pub use error::{Error, Result};
pub use prepivot::{GaussianMode, PrepivotSpec};
pub use rng::{derive_stream, RngStream};
pub use statistics::{StatisticId, StatisticSpec};
