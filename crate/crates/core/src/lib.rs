//! Stochastic Gradient Langevin Dynamics on synthetic non-convex empirical-risk
//! problems, together with the machinery needed to *certify* its generalization
//! behaviour:
//!
//! - [`problems`]: analytic loss families (quadratic regression, a smoothed 1-D
//!   double well, a two-component Gaussian mixture NLL) with exact
//!   gradient-gap, boundedness and subGaussian constants.
//! - [`langevin`]: the discrete samplers (SGLD, LMC, minibatch SGLD) and the
//!   exact Ornstein-Uhlenbeck step that matches one regularized SGLD update in
//!   distribution.
//! - [`certificates`]: step-schedule arithmetic and the four generalization
//!   bounds (LMC stability, succinct SGLD, prefix-split improved SGLD, and the
//!   three-case PAC-Bayes certificate with its KL recursion).
//! - [`density_lab`]: exact 1-D density propagation and Fokker-Planck
//!   evolution on a grid, used to verify the divergence inequalities the
//!   certificates rest on.
//! - [`experiments`]: Monte Carlo gap/stability estimation, bound-vs-gap
//!   sweeps, and the fence-sitting demonstration.

pub mod certificates;
pub mod density_lab;
pub mod error;
pub mod experiments;
pub mod langevin;
pub mod numeric;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};
