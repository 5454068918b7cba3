//! Maximum entropy on the mean (MEM) for linear inverse problems with
//! empirical priors.
//!
//! Given samples `X_1, ..., X_n` in `[0,1]^d`, a forward operator `C` and an
//! observation `b = C x + noise`, the MEM estimate is recovered from the
//! smooth, `1/alpha`-strongly convex dual
//!
//! ```text
//! phi(z) = |z|^2 / (2 alpha) - <b, z> + log( (1/n) sum_i exp<C^T z, X_i> )
//! ```
//!
//! as `x_bar = grad L(C^T z_bar)`, a Gibbs-weighted convex combination of the
//! samples.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`dataset`] | IDX parsing, normalization, subsampling, nearest neighbour |
//! | [`operators`] | forward maps, adjoints, `‖C‖` and `σ_min(C)` |
//! | [`prior`] | the empirical prior and its log-moment generating function |
//! | [`solver`] | L-BFGS on the dual with a certified ε |
//! | [`recovery`] | primal/measure recovery and post-processing |
//! | [`noise`] | Gaussian and salt-and-pepper corruption |
//! | [`diagnostics`] | explicit constants, bound checks, rate experiment |
//! | [`io`] | PGM, weights CSV |
//!
//! With the default `parallel` feature, sums over samples and the cells of the
//! rate experiment run on rayon. Every reduction uses a fixed chunking and a
//! fixed tree order, so results are bit-identical for any thread count and
//! with the feature disabled.

pub mod dataset;
pub mod diagnostics;
mod error;
pub mod io;
pub mod noise;
pub mod operators;
pub mod par;
pub mod prior;
pub mod recovery;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};

pub use dataset::{ImageSet, SampleMatrix};
pub use diagnostics::{ProblemConstants, RateRecord, RateTable};
pub use operators::LinearOperator;
pub use par::Execution;
pub use prior::{EmpiricalPrior, LmgfEval, Precision};
pub use recovery::RecoveredSolution;
pub use solver::{DualProblem, DualSolveResult, SolverConfig};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFiniteInput { index }),
        None => Ok(()),
    }
}
