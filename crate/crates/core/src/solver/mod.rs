//! The empirical MEM dual
//!
//! ```text
//! phi(z) = |z|^2 / (2 alpha) - <b, z> + L(C^T z)
//! grad phi(z) = z / alpha - b + C grad L(C^T z)
//! ```
//!
//! minimized by L-BFGS from `z = 0`. Since `phi` is `1/alpha`-strongly convex,
//! the Polyak–Łojasiewicz inequality certifies
//! `phi(z) - min phi <= alpha |grad phi(z)|^2 / 2`.

pub mod lbfgs;

use serde::{Deserialize, Serialize};

use crate::operators::LinearOperator;
use crate::prior::EmpiricalPrior;
use crate::{check_finite, dot, norm, Error, Result};

pub use lbfgs::{LbfgsConfig as SolverConfig, Minimum, Objective, Termination, TraceEntry};

/// The convex conjugate part of the dual, `z ↦ α g*(-z/α)`, for a fidelity `g`.
///
/// Implementations must be smooth and `strong_convexity()`-strongly convex.
pub trait ConjugateFidelity {
    fn dim(&self) -> usize;
    fn value_grad(&self, z: &[f64]) -> (f64, Vec<f64>);
    fn strong_convexity(&self) -> f64;
}

/// `g = ½‖b - ·‖²`, whose conjugate term is `‖z‖²/(2α) - ⟨b, z⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticFidelity {
    pub b: Vec<f64>,
    pub alpha: f64,
}

impl ConjugateFidelity for QuadraticFidelity {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let inv = 1.0 / self.alpha;
        let value = 0.5 * inv * dot(z, z) - dot(&self.b, z);
        let grad = z.iter().zip(&self.b).map(|(zi, bi)| zi * inv - bi).collect();
        (value, grad)
    }

    fn strong_convexity(&self) -> f64 {
        1.0 / self.alpha
    }
}

/// Dual objective for a prior, an operator and a fidelity conjugate.
#[derive(Clone, Debug)]
pub struct GeneralDual<'a, F> {
    prior: &'a EmpiricalPrior,
    op: &'a LinearOperator,
    fidelity: F,
}

impl<'a, F: ConjugateFidelity> GeneralDual<'a, F> {
    pub fn new(prior: &'a EmpiricalPrior, op: &'a LinearOperator, fidelity: F) -> Result<Self> {
        let (m, d) = op.shape();
        if prior.d() != d {
            return Err(Error::DimensionMismatch { expected: d, got: prior.d() });
        }
        if fidelity.dim() != m {
            return Err(Error::DimensionMismatch { expected: m, got: fidelity.dim() });
        }
        if !(fidelity.strong_convexity() > 0.0) {
            return Err(Error::InvalidParameter("fidelity conjugate must be strongly convex".into()));
        }
        Ok(Self { prior, op, fidelity })
    }

    pub fn prior(&self) -> &'a EmpiricalPrior {
        self.prior
    }

    pub fn op(&self) -> &'a LinearOperator {
        self.op
    }

    pub fn fidelity(&self) -> &F {
        &self.fidelity
    }

    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        let (q, _) = self.fidelity.value_grad(z);
        let y = self.op.apply_adjoint(z)?;
        Ok(q + self.prior.lmgf(&y)?)
    }

    pub fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_grad(z)?.1)
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.fidelity.dim() {
            return Err(Error::DimensionMismatch { expected: self.fidelity.dim(), got: z.len() });
        }
        check_finite(z)
    }

    /// Runs L-BFGS from `z = 0`.
    pub fn solve(&self, cfg: &SolverConfig) -> Result<DualSolveResult> {
        let m = self.fidelity.dim();
        let min = lbfgs::minimize(self, vec![0.0; m], cfg)?;
        let epsilon_cert = 0.5 * min.grad_norm * min.grad_norm / self.fidelity.strong_convexity();
        Ok(DualSolveResult {
            converged: min.termination == Termination::Converged,
            z_bar: min.x,
            grad_norm: min.grad_norm,
            epsilon_cert,
            iterations: min.iterations,
            objective: min.value,
            termination: min.termination,
            trace: min.trace,
        })
    }
}

impl<F: ConjugateFidelity> Objective for GeneralDual<'_, F> {
    fn dim(&self) -> usize {
        self.fidelity.dim()
    }

    fn value_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(z)?;
        let (q, mut grad) = self.fidelity.value_grad(z);
        let y = self.op.apply_adjoint(z)?;
        let eval = self.prior.lmgf_eval(&y)?;
        let cx = self.op.apply(&eval.gradient)?;
        for (g, c) in grad.iter_mut().zip(&cx) {
            *g += c;
        }
        Ok((q + eval.value, grad))
    }
}

/// The quadratic-fidelity dual, the case every bound in this crate refers to.
pub type DualProblem<'a> = GeneralDual<'a, QuadraticFidelity>;

impl<'a> GeneralDual<'a, QuadraticFidelity> {
    pub fn quadratic(
        prior: &'a EmpiricalPrior,
        op: &'a LinearOperator,
        b: Vec<f64>,
        alpha: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        check_finite(&b)?;
        Self::new(prior, op, QuadraticFidelity { b, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.fidelity.alpha
    }

    pub fn b(&self) -> &[f64] {
        &self.fidelity.b
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualSolveResult {
    pub z_bar: Vec<f64>,
    pub grad_norm: f64,
    /// `φ(z_bar) - min φ <= epsilon_cert`.
    pub epsilon_cert: f64,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    pub termination: Termination,
    pub trace: Vec<TraceEntry>,
}

pub fn dual_objective(p: &DualProblem, z: &[f64]) -> Result<f64> {
    p.objective(z)
}

pub fn dual_gradient(p: &DualProblem, z: &[f64]) -> Result<Vec<f64>> {
    p.gradient(z)
}

pub fn solve_dual(p: &DualProblem, cfg: &SolverConfig) -> Result<DualSolveResult> {
    p.solve(cfg)
}

/// `sqrt(2 alpha epsilon)`: how far an ε-minimizer of a `1/alpha`-strongly
/// convex function can be from the minimizer.
pub fn epsilon_distance_bound(alpha: f64, epsilon: f64) -> Result<f64> {
    if alpha < 0.0 {
        return Err(Error::NegativeInput(alpha));
    }
    if epsilon < 0.0 {
        return Err(Error::NegativeInput(epsilon));
    }
    if alpha == 0.0 {
        return Err(Error::InvalidParameter("alpha must be positive".into()));
    }
    Ok((2.0 * alpha * epsilon).sqrt())
}

/// `ρ̂ = 2α(‖b‖ + ‖C‖|X|)`, a radius containing the dual minimizer.
pub fn minimizer_radius(alpha: f64, b_norm: f64, op_norm: f64, radius: f64) -> f64 {
    2.0 * alpha * (b_norm + op_norm * radius)
}

pub(crate) fn b_norm(p: &DualProblem) -> f64 {
    norm(p.b())
}
