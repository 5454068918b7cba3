//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! Two-loop recursion over a ring of `(s, y)` pairs, initial scaling
//! `γ = sᵀy / yᵀy`, bracketing/zoom line search with safeguarded cubic
//! interpolation.

use std::collections::VecDeque;

use crate::{dot, norm, Result};

/// A smooth objective: value and gradient at a point.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            grad_tol: 1e-9,
            max_iter: 500,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search: 40,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.wolfe_c1
            && self.wolfe_c1 < self.wolfe_c2
            && self.wolfe_c2 < 1.0
            && self.memory >= 1
            && self.grad_tol >= 0.0
            && self.max_line_search >= 1;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidParameter(format!("invalid L-BFGS config {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailure,
}

/// One accepted iterate.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
    /// Accepted by the gradient-only (approximate Wolfe) test because the
    /// objective change was below rounding resolution.
    pub approximate: bool,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<TraceEntry>,
}

struct History {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    cap: usize,
}

impl History {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        // keeps the implicit inverse Hessian positive definite
        if sy <= 1e-12 * norm(&s) * norm(&y) {
            return false;
        }
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

fn cubic_min(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, lo: f64, hi: f64) -> f64 {
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let disc = d1 * d1 - g1 * g2;
    if disc >= 0.0 {
        let d2 = disc.sqrt();
        let t = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if t.is_finite() {
            return t.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone)]
struct Probe {
    t: f64,
    f: f64,
    g: Vec<f64>,
    gtd: f64,
}

struct LineSearch<'a, O: Objective> {
    obj: &'a O,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    gtd0: f64,
    c1: f64,
    c2: f64,
}

impl<O: Objective> LineSearch<'_, O> {
    fn eval(&self, t: f64) -> Result<Probe> {
        let xt: Vec<f64> = self.x.iter().zip(self.dir).map(|(a, d)| a + t * d).collect();
        let (f, g) = self.obj.value_grad(&xt)?;
        let gtd = dot(&g, self.dir);
        Ok(Probe { t, f, g, gtd })
    }

    fn armijo(&self, p: &Probe) -> bool {
        p.f <= self.f0 + self.c1 * p.t * self.gtd0
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.gtd.abs() <= -self.c2 * self.gtd0
    }

    // Hager–Zhang approximate Wolfe, used only once f differences are at rounding level.
    fn approx_wolfe(&self, p: &Probe) -> bool {
        let flat = (p.f - self.f0).abs() <= 1e-14 * (1.0 + self.f0.abs());
        flat && p.gtd <= (2.0 * self.c1 - 1.0) * self.gtd0 && self.curvature(p)
    }

    fn accept(&self, p: &Probe) -> Option<bool> {
        if !p.f.is_finite() {
            return None;
        }
        if self.armijo(p) && self.curvature(p) {
            // Armijo can hold with f == f0 once c1·t·g'd is below one ulp of f0
            Some(p.f >= self.f0)
        } else if self.approx_wolfe(p) {
            Some(true)
        } else {
            None
        }
    }

    /// Returns the accepted probe and whether it passed only the approximate test.
    fn run(&self, t0: f64, max_evals: usize) -> Result<Option<(Probe, bool)>> {
        let start = Probe { t: 0.0, f: self.f0, g: Vec::new(), gtd: self.gtd0 };
        let mut prev = start.clone();
        let mut t = t0;
        let mut evals = 0;
        let (mut lo, mut hi);
        loop {
            let cur = self.eval(t)?;
            evals += 1;
            if let Some(approx) = self.accept(&cur) {
                return Ok(Some((cur, approx)));
            }
            if !cur.f.is_finite() || !self.armijo(&cur) || (evals > 1 && cur.f >= prev.f) {
                lo = prev;
                hi = cur;
                break;
            }
            if cur.gtd >= 0.0 {
                lo = cur;
                hi = prev;
                break;
            }
            if evals >= max_evals {
                return Ok(None);
            }
            let next = if cur.f.is_finite() {
                cubic_min(prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd, cur.t + 0.01 * (cur.t - prev.t), 10.0 * cur.t)
            } else {
                0.5 * (prev.t + cur.t)
            };
            prev = cur;
            t = next;
        }
        // zoom: lo satisfies Armijo with the lower value, hi brackets the other side
        while evals < max_evals {
            let (a, b) = if lo.t < hi.t { (lo.t, hi.t) } else { (hi.t, lo.t) };
            if (b - a) <= 1e-16 * b.max(1.0) {
                break;
            }
            let mut t = if hi.f.is_finite() {
                cubic_min(lo.t, lo.f, lo.gtd, hi.t, hi.f, hi.gtd, a, b)
            } else {
                0.5 * (a + b)
            };
            let margin = 0.1 * (b - a);
            if t - a < margin || b - t < margin {
                t = 0.5 * (a + b);
            }
            let cur = self.eval(t)?;
            evals += 1;
            if let Some(approx) = self.accept(&cur) {
                return Ok(Some((cur, approx)));
            }
            if !cur.f.is_finite() || !self.armijo(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if cur.gtd * (hi.t - lo.t) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        Ok(None)
    }
}

/// Minimizes `obj` from `x0`.
pub fn minimize<O: Objective>(obj: &O, x0: Vec<f64>, cfg: &LbfgsConfig) -> Result<Minimum> {
    cfg.validate()?;
    let mut x = x0;
    let (mut f, mut g) = obj.value_grad(&x)?;
    let mut gnorm = norm(&g);
    let mut history = History { pairs: VecDeque::with_capacity(cfg.memory), cap: cfg.memory };
    let mut trace = vec![TraceEntry { iteration: 0, objective: f, grad_norm: gnorm, step: 0.0, approximate: false }];
    let mut iterations = 0;
    let termination = loop {
        if gnorm <= cfg.grad_tol {
            break Termination::Converged;
        }
        if iterations >= cfg.max_iter {
            break Termination::MaxIterations;
        }
        let mut dir = history.direction(&g);
        let mut gtd = dot(&g, &dir);
        if !(gtd < 0.0) {
            history.pairs.clear();
            dir = g.iter().map(|v| -v).collect();
            gtd = -gnorm * gnorm;
        }
        let t0 = if history.pairs.is_empty() {
            (1.0 / g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0)
        } else {
            1.0
        };
        let ls = LineSearch { obj, x: &x, dir: &dir, f0: f, gtd0: gtd, c1: cfg.wolfe_c1, c2: cfg.wolfe_c2 };
        let Some((probe, approximate)) = ls.run(t0, cfg.max_line_search)? else {
            break Termination::LineSearchFailure;
        };
        let s: Vec<f64> = dir.iter().map(|d| probe.t * d).collect();
        let y: Vec<f64> = probe.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        history.push(s, y);
        f = probe.f;
        g = probe.g;
        gnorm = norm(&g);
        iterations += 1;
        trace.push(TraceEntry { iteration: iterations, objective: f, grad_norm: gnorm, step: probe.t, approximate });
    };
    Ok(Minimum { x, value: f, gradient: g, grad_norm: gnorm, iterations, termination, trace })
}
