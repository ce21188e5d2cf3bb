//! Stochastic-gradient Riemannian Langevin sampling for the assortative
//! mixed-membership stochastic blockmodel (a-MMSB).
//!
//! Memberships `pi` and community strengths `beta` are sampled through
//! Gamma-distributed expanded-mean parameters (`phi`, `theta`). Each
//! iteration draws a stratified edge mini-batch, updates the memberships of
//! every node it touches, then moves the strengths of a community subset.
//! [`sparse`] keeps only high-mass communities explicit per node so that the
//! cost per update stays flat as `K` grows. Collapsed Gibbs and full-data
//! Langevin samplers in [`baselines`] serve as exact references.

pub mod baselines;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod global;
pub mod graph;
pub mod kernels;
pub mod local;
pub mod minibatch;
pub mod rng;
pub mod sgmc;
pub mod sparse;
pub mod state;

pub use error::{Error, Result};
pub use global::Memberships;
pub use graph::{Graph, HeldOutSplit};
pub use sgmc::{Rows, SgmcSampler, SgmcSettings};
pub use state::{HyperParams, ModelState};
