//! Exact 1-D density propagation and divergence verification.
//!
//! Everything here works on [`DensityGrid`]: a truncated, renormalized
//! probability density on a uniform grid. One SGLD step is represented
//! *exactly* (up to quadrature) as pushforward-then-convolution in a single
//! integral, so the divergence inequalities measured here carry no operator
//! splitting error. Continuous-time evolution uses an explicit
//! central-difference Fokker-Planck step.
//!
//! All inequalities being checked are dimension-free, so one dimension
//! suffices to falsify them while keeping the O(M²) quadrature cheap.

mod checks;
mod evolve;
mod grid;

pub use checks::{lab_verify, LabCheck, LabReport, LabRow, LabSetup};
pub use evolve::{evolve_fokker_planck, propagate, push_through_kernel, PropagateMode};
pub use grid::{
    divergence, expectation, gaussian_grid, make_grid, mean_var, DensityGrid, DivergenceKind,
    GridInit,
};

use crate::error::Result;
use crate::problems::{NeighborPair, ProblemInstance};

/// A drift field evaluable at every grid node. Problem-derived drifts carry
/// their instance by value; grids are 1-D so instances stay small.
#[derive(Debug, Clone)]
pub enum DriftSpec {
    /// `∇f(y; z_index) + λy`.
    PerExample {
        problem: ProblemInstance,
        index: usize,
        lambda: f64,
    },
    /// `∇F_n(y) + λy`.
    Full {
        problem: ProblemInstance,
        lambda: f64,
    },
    /// The difference of the two full drifts of a neighboring pair,
    /// `∇F_n(y) − ∇F_n′(y)`; bounded by `L/n`.
    NeighborDelta {
        base: ProblemInstance,
        variant: ProblemInstance,
    },
}

impl DriftSpec {
    fn require_1d(problem: &ProblemInstance) -> Result<()> {
        if problem.d != 1 {
            return Err(crate::error::Error::BadDimension {
                kind: problem.family.kind().to_string(),
                d: problem.d,
                reason: "density-grid drifts are one-dimensional".into(),
            });
        }
        Ok(())
    }

    pub fn per_example(problem: &ProblemInstance, index: usize, lambda: f64) -> Result<Self> {
        Self::require_1d(problem)?;
        if index >= problem.n() {
            return Err(crate::error::Error::IndexOutOfRange {
                index,
                n: problem.n(),
            });
        }
        Ok(DriftSpec::PerExample {
            problem: problem.clone(),
            index,
            lambda,
        })
    }

    pub fn full(problem: &ProblemInstance, lambda: f64) -> Result<Self> {
        Self::require_1d(problem)?;
        Ok(DriftSpec::Full {
            problem: problem.clone(),
            lambda,
        })
    }

    pub fn neighbor_delta(problem: &ProblemInstance, pair: &NeighborPair) -> Result<Self> {
        Self::require_1d(problem)?;
        Ok(DriftSpec::NeighborDelta {
            base: problem.clone(),
            variant: problem.variant_instance(pair)?,
        })
    }

    /// Drift value at a point (1-D problems only).
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            DriftSpec::PerExample {
                problem,
                index,
                lambda,
            } => problem.point_gradient(&[y], *index)[0] + lambda * y,
            DriftSpec::Full { problem, lambda } => problem.data_gradient(&[y])[0] + lambda * y,
            DriftSpec::NeighborDelta { base, variant } => {
                base.data_gradient(&[y])[0] - variant.data_gradient(&[y])[0]
            }
        }
    }
}
