//! The empirical prior `μ_n = (1/n) Σ δ_{X_i}` and its log-moment generating
//! function
//!
//! ```text
//! L(y) = log( (1/n) Σ_i exp<y, X_i> )
//! ```
//!
//! evaluated as `M + log((1/n) Σ_i exp(<y, X_i> - M))` with `M = max_i <y, X_i>`,
//! so no term overflows. The gradient is the Gibbs-weighted sample mean
//! `Σ_i w_i X_i` with `w = softmax(<y, X_·>)`.
//!
//! Sums over samples go through [`crate::par`]: fixed chunks, tree-combined,
//! so the result does not depend on the thread count.

use nalgebra::DMatrix;

use crate::dataset::SampleMatrix;
use crate::par::{self, Execution};
use crate::{check_finite, Error, Result};

/// Gibbs weights below this are flushed to exactly zero.
pub const WEIGHT_FLUSH: f64 = 1e-300;

/// Largest dimension accepted by [`EmpiricalPrior::lmgf_hessian`].
pub const HESSIAN_DIM_LIMIT: usize = 64;

/// Largest score accepted by [`EmpiricalPrior::mgf`] before `exp` overflows.
pub const MGF_SCORE_LIMIT: f64 = 700.0;

/// Sample storage width.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    Double,
    /// Halves memory; scores and sums are still accumulated in `f64`.
    Single,
}

#[derive(Clone, Debug)]
enum Storage {
    F64(Vec<f64>),
    F32(Vec<f32>),
}

#[derive(Clone, Debug)]
pub struct EmpiricalPrior {
    storage: Storage,
    n: usize,
    d: usize,
    radius: f64,
}

/// Value, gradient and Gibbs weights of `L` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct LmgfEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EmpiricalPrior {
    pub fn new(samples: &SampleMatrix) -> Self {
        Self::with_precision(samples, Precision::Double)
    }

    pub fn with_precision(samples: &SampleMatrix, precision: Precision) -> Self {
        let storage = match precision {
            Precision::Double => Storage::F64(samples.as_slice().to_vec()),
            Precision::Single => {
                Storage::F32(samples.as_slice().iter().map(|&v| v as f32).collect())
            }
        };
        let mut prior = Self { storage, n: samples.n(), d: samples.d(), radius: 0.0 };
        prior.radius = prior.compute_radius();
        prior
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn precision(&self) -> Precision {
        match self.storage {
            Storage::F64(_) => Precision::Double,
            Storage::F32(_) => Precision::Single,
        }
    }

    /// `|X| = max_i ‖X_i‖`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Recomputes `max_i ‖X_i‖` from the stored samples.
    pub fn compute_radius(&self) -> f64 {
        (0..self.n)
            .map(|i| self.with_row(i, |r| r.iter().map(|v| v * v).sum::<f64>()).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn sample(&self, i: usize) -> Vec<f64> {
        self.with_row(i, |r| r.to_vec())
    }

    #[inline]
    fn with_row<T>(&self, i: usize, f: impl FnOnce(&[f64]) -> T) -> T {
        let span = i * self.d..(i + 1) * self.d;
        match &self.storage {
            Storage::F64(v) => f(&v[span]),
            Storage::F32(v) => {
                let row: Vec<f64> = v[span].iter().map(|&x| x as f64).collect();
                f(&row)
            }
        }
    }

    #[inline]
    fn score(&self, i: usize, y: &[f64]) -> f64 {
        let span = i * self.d..(i + 1) * self.d;
        match &self.storage {
            Storage::F64(v) => crate::dot(&v[span], y),
            Storage::F32(v) => v[span].iter().zip(y).map(|(&a, b)| a as f64 * b).sum(),
        }
    }

    #[inline]
    fn axpy_row(&self, i: usize, w: f64, acc: &mut [f64]) {
        let span = i * self.d..(i + 1) * self.d;
        match &self.storage {
            Storage::F64(v) => {
                for (a, x) in acc.iter_mut().zip(&v[span]) {
                    *a += w * x;
                }
            }
            Storage::F32(v) => {
                for (a, &x) in acc.iter_mut().zip(&v[span]) {
                    *a += w * x as f64;
                }
            }
        }
    }

    fn check_input(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: y.len() });
        }
        check_finite(y)
    }

    fn scores(&self, y: &[f64], exec: Execution) -> Vec<f64> {
        par::map_chunks(self.n, exec, |r| r.map(|i| self.score(i, y)).collect::<Vec<_>>())
            .concat()
    }

    /// `(max score, Σ exp(score - max))`.
    fn shifted_sum(scores: &[f64], exec: Execution) -> (f64, f64) {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let parts = par::map_chunks(scores.len(), exec, |r| {
            let e: Vec<f64> = scores[r].iter().map(|s| (s - max).exp()).collect();
            par::pairwise_sum(&e)
        });
        (max, par::pairwise_sum(&parts))
    }

    pub fn lmgf(&self, y: &[f64]) -> Result<f64> {
        self.lmgf_with(y, Execution::default())
    }

    pub fn lmgf_with(&self, y: &[f64], exec: Execution) -> Result<f64> {
        self.check_input(y)?;
        let scores = self.scores(y, exec);
        let (max, sum) = Self::shifted_sum(&scores, exec);
        Ok(max + (sum / self.n as f64).ln())
    }

    pub fn lmgf_eval(&self, y: &[f64]) -> Result<LmgfEval> {
        self.lmgf_eval_with(y, Execution::default())
    }

    pub fn lmgf_eval_with(&self, y: &[f64], exec: Execution) -> Result<LmgfEval> {
        self.check_input(y)?;
        let scores = self.scores(y, exec);
        let (max, sum) = Self::shifted_sum(&scores, exec);
        let value = max + (sum / self.n as f64).ln();
        let weights: Vec<f64> = scores
            .iter()
            .map(|s| {
                let w = (s - max).exp() / sum;
                if w < WEIGHT_FLUSH {
                    0.0
                } else {
                    w
                }
            })
            .collect();
        let gradient = self.weighted_sum(&weights, exec);
        Ok(LmgfEval { value, gradient, weights })
    }

    /// `Σ_i weights_i X_i` with the deterministic chunked reduction.
    pub fn weighted_sum(&self, weights: &[f64], exec: Execution) -> Vec<f64> {
        debug_assert_eq!(weights.len(), self.n);
        let parts = par::map_chunks(self.n, exec, |r| {
            let mut acc = vec![0.0; self.d];
            for i in r {
                if weights[i] != 0.0 {
                    self.axpy_row(i, weights[i], &mut acc);
                }
            }
            acc
        });
        par::tree_sum_vectors(parts, self.d)
    }

    /// `M(y) = exp(L(y))`; refuses inputs where a single term could overflow.
    pub fn mgf(&self, y: &[f64]) -> Result<f64> {
        self.check_input(y)?;
        let scores = self.scores(y, Execution::default());
        let max_score = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max_score > MGF_SCORE_LIMIT {
            return Err(Error::OverflowRisk { max_score });
        }
        let (max, sum) = Self::shifted_sum(&scores, Execution::default());
        Ok((max + (sum / self.n as f64).ln()).exp())
    }

    /// Gibbs covariance `Σ_i w_i X_i X_iᵀ - g gᵀ`, the Hessian of `L` at `y`.
    pub fn lmgf_hessian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        if self.d > HESSIAN_DIM_LIMIT {
            return Err(Error::DimensionTooLarge { d: self.d, limit: HESSIAN_DIM_LIMIT });
        }
        let eval = self.lmgf_eval(y)?;
        let d = self.d;
        let mut h = DMatrix::<f64>::zeros(d, d);
        for (i, &w) in eval.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            // centered form keeps H PSD to rounding
            self.with_row(i, |x| {
                for a in 0..d {
                    let da = x[a] - eval.gradient[a];
                    for b in 0..=a {
                        h[(a, b)] += w * da * (x[b] - eval.gradient[b]);
                    }
                }
            });
        }
        for a in 0..d {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        Ok(h)
    }
}
