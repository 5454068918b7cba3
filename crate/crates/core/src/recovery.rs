//! From a dual point back to an image and a measure.
//!
//! `x_bar = ∇L(Cᵀz̄) = Σ_i w_i X_i`, where `w` are the Gibbs weights of the
//! optimal measure `Q_n ≪ μ_n`. Because `x_bar` is a convex combination of
//! samples it can be post-processed at the measure level (drop small weights)
//! or at the pixel level (snap near-black/near-white pixels).

use serde::{Deserialize, Serialize};

use crate::operators::LinearOperator;
use crate::par::Execution;
use crate::prior::EmpiricalPrior;
use crate::{check_finite, norm, Error, Result};

/// Threshold on Gibbs weights used for the compressed solution.
pub const DEFAULT_THRESHOLD: f64 = 0.01;

/// Pixel mask level.
pub const DEFAULT_MASK_GAMMA: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredSolution {
    pub x_bar: Vec<f64>,
    pub weights: Vec<f64>,
    pub support_size: usize,
}

pub fn recover_primal(
    prior: &EmpiricalPrior,
    op: &LinearOperator,
    z_bar: &[f64],
) -> Result<RecoveredSolution> {
    check_finite(z_bar)?;
    let y = op.apply_adjoint(z_bar)?;
    let eval = prior.lmgf_eval(&y)?;
    let support_size = eval.weights.iter().filter(|w| **w > 0.0).count();
    Ok(RecoveredSolution { x_bar: eval.gradient, weights: eval.weights, support_size })
}

/// Zeroes weights below `tau`, renormalizes the rest and rebuilds `x_bar`.
///
/// `tau = 0` returns the solution unchanged.
pub fn threshold_measure(
    prior: &EmpiricalPrior,
    sol: &RecoveredSolution,
    tau: f64,
) -> Result<RecoveredSolution> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("threshold {tau} outside [0, 1)")));
    }
    if sol.weights.len() != prior.n() {
        return Err(Error::DimensionMismatch { expected: prior.n(), got: sol.weights.len() });
    }
    if tau == 0.0 {
        return Ok(sol.clone());
    }
    let kept: Vec<f64> = sol.weights.iter().map(|&w| if w < tau { 0.0 } else { w }).collect();
    let mass = crate::par::pairwise_sum(&kept);
    if mass == 0.0 {
        return Err(Error::EmptySupport { tau });
    }
    let weights: Vec<f64> = kept.iter().map(|w| w / mass).collect();
    let x_bar = prior.weighted_sum(&weights, Execution::default());
    let support_size = weights.iter().filter(|w| **w > 0.0).count();
    Ok(RecoveredSolution { x_bar, weights, support_size })
}

/// Pixels `>= 1 - gamma` go to 1, pixels `<= gamma` go to 0.
pub fn pixel_mask(x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..0.5).contains(&gamma) {
        return Err(Error::InvalidGamma(gamma));
    }
    Ok(x.iter()
        .map(|&v| {
            if v >= 1.0 - gamma {
                1.0
            } else if v <= gamma {
                0.0
            } else {
                v
            }
        })
        .collect())
}

/// `KL(Q ‖ μ_n) = Σ_{w_i > 0} w_i log(n w_i)`.
pub fn kl_to_prior(sol: &RecoveredSolution) -> f64 {
    let n = sol.weights.len() as f64;
    sol.weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| w * (n * w).ln())
        .sum::<f64>()
        .max(0.0)
}

/// `‖x - x_ref‖ / ‖x_ref‖`.
pub fn relative_error(x: &[f64], x_ref: &[f64]) -> Result<f64> {
    if x.len() != x_ref.len() {
        return Err(Error::DimensionMismatch { expected: x_ref.len(), got: x.len() });
    }
    let r = norm(x_ref);
    if r == 0.0 {
        return Err(Error::ZeroReference);
    }
    let diff: f64 = x.iter().zip(x_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(diff.sqrt() / r)
}
