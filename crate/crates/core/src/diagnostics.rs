//! Explicit constants, distance surrogates and the convergence-rate experiment.
//!
//! With `|X| = max ‖X_i‖` and `ρ̂ = 2α(‖b‖ + ‖C‖|X|)`:
//!
//! ```text
//! ρ₀ = max{ ρ̂, ρ̂²/(2α) + ‖b‖ρ̂ + ρ̂‖C‖|X| }       bounds ‖z̄‖ and |φ(z̄)|
//! K̂(r) = |X| e^{4r|X|} + |X|² e^{2r|X|},  K = d K̂  Lipschitz constant of ∇L on B_r
//! ```
//!
//! and for an ε-minimizer of the dual under prior ν, compared with the exact
//! solution under μ,
//!
//! ```text
//! ‖x̄_{ν,ε} - x̄_μ‖ <= D/(α σ) + 2√2 √D/(√α σ) + (K‖C‖√(2α) + 2/(√α σ)) √ε
//! ```
//!
//! with `σ = σ_min(C)`, `D = D_ρ(ν, μ) = sup_{‖z‖<=ρ} |L_ν(Cᵀz) - L_μ(Cᵀz)|` and
//! `K` evaluated at `r = ‖C‖(ρ₀ + √(2αε))`.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{subsample, SampleMatrix};
use crate::operators::LinearOperator;
use crate::par::{self, Execution};
use crate::prior::EmpiricalPrior;
use crate::recovery::{recover_primal, relative_error};
use crate::rng::{derive_seed, rng_from_seed, MemRng};
use crate::solver::{b_norm, minimizer_radius, DualProblem, SolverConfig};
use crate::{Error, Result};

/// Relative tolerance for the power iteration behind `‖C‖`.
pub const OP_NORM_TOL: f64 = 1e-12;

/// Dense-grid estimates are limited to this many dual dimensions.
pub const GRID_DIM_LIMIT: usize = 4;

/// Grid points of the rate experiment run by the CLI when no grid is given.
pub const DEFAULT_GRID: (usize, usize, usize) = (10_000, 60_000, 20);
pub const DEFAULT_TRIALS: usize = 15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub alpha: f64,
    pub b_norm: f64,
    pub op_norm: f64,
    /// `|X|`.
    pub radius: f64,
    pub d: usize,
    pub epsilon: f64,
    pub rho_hat: f64,
    pub rho0: f64,
    /// Radius `‖C‖(ρ₀ + √(2αε))` at which `K̂` is evaluated.
    pub lipschitz_radius: f64,
    #[serde(rename = "K_hat")]
    pub k_hat: f64,
    #[serde(rename = "K")]
    pub k: f64,
    /// Default dual-ball radius for diagnostics, `2ρ₀`.
    pub ball_radius_used: f64,
}

/// `ρ₀` from its defining formula.
pub fn rho0(alpha: f64, b_norm: f64, op_norm: f64, radius: f64) -> (f64, f64) {
    let rho_hat = minimizer_radius(alpha, b_norm, op_norm, radius);
    let second = rho_hat * rho_hat / (2.0 * alpha) + b_norm * rho_hat + rho_hat * op_norm * radius;
    (rho_hat, rho_hat.max(second))
}

/// `K̂(r) = |X| e^{4r|X|} + |X|² e^{2r|X|}`.
pub fn lipschitz_k_hat(r: f64, radius: f64) -> f64 {
    radius * (4.0 * r * radius).exp() + radius * radius * (2.0 * r * radius).exp()
}

pub fn compute_constants(p: &DualProblem, epsilon: f64) -> Result<ProblemConstants> {
    compute_constants_with_radius(p, epsilon, p.prior().radius())
}

/// As [`compute_constants`] with an explicit `|X|` (e.g. covering two priors).
pub fn compute_constants_with_radius(
    p: &DualProblem,
    epsilon: f64,
    radius: f64,
) -> Result<ProblemConstants> {
    if epsilon < 0.0 {
        return Err(Error::NegativeInput(epsilon));
    }
    let op_norm = match p.op().spectral_norm(OP_NORM_TOL) {
        Ok(v) => v,
        Err(Error::NoConvergence { estimate }) => estimate,
        Err(e) => return Err(e),
    };
    if op_norm == 0.0 {
        return Err(Error::InvalidRank { estimate: 0.0 });
    }
    let alpha = p.alpha();
    let bn = b_norm(p);
    let (rho_hat, rho0) = rho0(alpha, bn, op_norm, radius);
    let lipschitz_radius = op_norm * (rho0 + (2.0 * alpha * epsilon).sqrt());
    let k_hat = lipschitz_k_hat(lipschitz_radius, radius);
    Ok(ProblemConstants {
        alpha,
        b_norm: bn,
        op_norm,
        radius,
        d: p.prior().d(),
        epsilon,
        rho_hat,
        rho0,
        lipschitz_radius,
        k_hat,
        k: p.prior().d() as f64 * k_hat,
        ball_radius_used: 2.0 * rho0,
    })
}

/// Uniform point in the Euclidean ball of radius `rho` in `R^m`.
pub fn sample_ball(rng: &mut MemRng, m: usize, rho: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let n = crate::norm(&v);
    let u: f64 = rng.random();
    let r = rho * u.powf(1.0 / m as f64);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x *= r / n);
    }
    v
}

fn check_pair(nu: &EmpiricalPrior, mu: &EmpiricalPrior, op: &LinearOperator) -> Result<()> {
    let (_, d) = op.shape();
    for p in [nu, mu] {
        if p.d() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.d() });
        }
    }
    Ok(())
}

fn lmgf_gap(nu: &EmpiricalPrior, mu: &EmpiricalPrior, op: &LinearOperator, z: &[f64]) -> Result<f64> {
    let y = op.apply_adjoint(z)?;
    Ok((nu.lmgf(&y)? - mu.lmgf(&y)?).abs())
}

/// Lower bound on `D_ρ(ν, μ)`: the largest LMGF gap over `samples` uniform
/// draws from `B_ρ`. For a fixed seed, a larger `samples` extends the same
/// sequence, so the estimate is non-decreasing in `samples`.
pub fn epi_distance_estimate(
    nu: &EmpiricalPrior,
    mu: &EmpiricalPrior,
    op: &LinearOperator,
    rho: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(rho > 0.0) || samples == 0 {
        return Err(Error::InvalidParameter("rho must be positive and samples >= 1".into()));
    }
    check_pair(nu, mu, op)?;
    if std::ptr::eq(nu, mu) {
        return Ok(0.0);
    }
    let (m, _) = op.shape();
    let mut rng = rng_from_seed(seed);
    let points: Vec<Vec<f64>> = (0..samples).map(|_| sample_ball(&mut rng, m, rho)).collect();
    let gaps = par::map_items(points, Execution::default(), |z| lmgf_gap(nu, mu, op, &z));
    gaps.into_iter().try_fold(0.0f64, |acc, g| Ok(acc.max(g?)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEstimate {
    /// Largest gap found on the grid (a lower bound only if every grid point lies in the ball).
    pub max_on_grid: f64,
    /// Certified upper bound on `D_ρ`.
    pub upper_bound: f64,
    pub spacing: f64,
    pub points: usize,
}

/// Dense-grid overestimate of `D_ρ(ν, μ)` for `m <= GRID_DIM_LIMIT`.
///
/// The grid covers the cube `[-ρ, ρ]^m` with spacing `h`. Every point of the
/// ball is within `h√m/2` of a grid point and the gap is `2‖C‖|X|`-Lipschitz,
/// so `max_on_grid + ‖C‖|X| h √m` bounds the supremum.
pub fn epi_distance_grid(
    nu: &EmpiricalPrior,
    mu: &EmpiricalPrior,
    op: &LinearOperator,
    rho: f64,
    points_per_axis: usize,
) -> Result<GridEstimate> {
    check_pair(nu, mu, op)?;
    let (m, _) = op.shape();
    if m > GRID_DIM_LIMIT {
        return Err(Error::DimensionTooLarge { d: m, limit: GRID_DIM_LIMIT });
    }
    if !(rho > 0.0) || points_per_axis < 2 {
        return Err(Error::InvalidParameter("rho must be positive and the grid needs >= 2 points per axis".into()));
    }
    let h = 2.0 * rho / (points_per_axis - 1) as f64;
    let total = points_per_axis.pow(m as u32);
    let coords = |mut k: usize| -> Vec<f64> {
        (0..m)
            .map(|_| {
                let i = k % points_per_axis;
                k /= points_per_axis;
                -rho + i as f64 * h
            })
            .collect()
    };
    let parts = par::map_chunks(total, Execution::default(), |r| {
        r.map(|k| lmgf_gap(nu, mu, op, &coords(k)))
            .try_fold(0.0f64, |acc, g| g.map(|g| acc.max(g)))
    });
    let max_on_grid = parts.into_iter().try_fold(0.0f64, |acc, g| g.map(|g| acc.max(g)))?;
    let op_norm = op.spectral_norm(OP_NORM_TOL).or_else(|e| match e {
        Error::NoConvergence { estimate } => Ok(estimate),
        e => Err(e),
    })?;
    let radius = nu.radius().max(mu.radius());
    let upper_bound = max_on_grid + op_norm * radius * h * (m as f64).sqrt();
    Ok(GridEstimate { max_on_grid, upper_bound, spacing: h, points: total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfBoundsReport {
    pub trials: usize,
    pub rho: f64,
    pub op_norm: f64,
    pub radius: f64,
    /// `e^{-ρ‖C‖|X|}`.
    pub lower_bound: f64,
    /// `e^{ρ‖C‖|X|}`.
    pub upper_bound: f64,
    pub violations: usize,
    /// Smallest `log M - log lower_bound` seen.
    pub min_log_margin_lower: f64,
    /// Smallest `log upper_bound - log M` seen.
    pub min_log_margin_upper: f64,
    pub mean_log_margin_upper: f64,
}

/// Samples `trials` points of `B_ρ` and compares `M(Cᵀz)` with
/// `[e^{-ρ‖C‖|X|}, e^{ρ‖C‖|X|}]` in log space. Violations are counted, not raised.
pub fn mgf_bounds_report(
    prior: &EmpiricalPrior,
    op: &LinearOperator,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<MgfBoundsReport> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let (m, _) = op.shape();
    let op_norm = op.spectral_norm(OP_NORM_TOL).or_else(|e| match e {
        Error::NoConvergence { estimate } => Ok(estimate),
        e => Err(e),
    })?;
    let log_bound = rho * op_norm * prior.radius();
    let mut rng = rng_from_seed(seed);
    let points: Vec<Vec<f64>> = (0..trials).map(|_| sample_ball(&mut rng, m, rho)).collect();
    let values = par::map_items(points, Execution::default(), |z| {
        op.apply_adjoint(&z).and_then(|y| prior.lmgf(&y))
    });
    // ‖C‖ is a power-iteration estimate; allow for its relative error
    let slack = 1e-9 * (1.0 + log_bound);
    let mut report = MgfBoundsReport {
        trials,
        rho,
        op_norm,
        radius: prior.radius(),
        lower_bound: (-log_bound).exp(),
        upper_bound: log_bound.exp(),
        violations: 0,
        min_log_margin_lower: f64::INFINITY,
        min_log_margin_upper: f64::INFINITY,
        mean_log_margin_upper: 0.0,
    };
    let mut sum = 0.0;
    for v in values {
        let l = v?;
        let lower = l + log_bound;
        let upper = log_bound - l;
        if lower < -slack || upper < -slack {
            report.violations += 1;
        }
        report.min_log_margin_lower = report.min_log_margin_lower.min(lower);
        report.min_log_margin_upper = report.min_log_margin_upper.min(upper);
        sum += upper;
    }
    report.mean_log_margin_upper = sum / trials as f64;
    Ok(report)
}

/// [`mgf_bounds_report`], failing with [`Error::BoundViolated`] on any violation.
pub fn mgf_bounds_check(
    prior: &EmpiricalPrior,
    op: &LinearOperator,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<MgfBoundsReport> {
    let report = mgf_bounds_report(prior, op, rho, trials, seed)?;
    if report.violations > 0 {
        return Err(Error::BoundViolated { violations: report.violations, trials });
    }
    Ok(report)
}

/// The right-hand side of the primal error bound for an ε-minimizer under `nu`
/// against the exact solution of `p` (whose prior plays the role of μ).
pub fn primal_error_bound(p: &DualProblem, nu: &EmpiricalPrior, epsilon: f64, d_rho: f64) -> Result<f64> {
    if epsilon < 0.0 {
        return Err(Error::NegativeInput(epsilon));
    }
    if d_rho < 0.0 {
        return Err(Error::NegativeInput(d_rho));
    }
    let sigma = p.op().sigma_min(1e-12).map_err(|e| match e {
        Error::InvalidRank { estimate } => Error::RankDeficient { sigma_min: estimate },
        e => e,
    })?;
    let radius = p.prior().radius().max(nu.radius());
    let c = compute_constants_with_radius(p, epsilon, radius)?;
    Ok(primal_error_bound_from(c.alpha, sigma, c.op_norm, c.k, epsilon, d_rho))
}

/// The bound as pure arithmetic on its inputs.
pub fn primal_error_bound_from(alpha: f64, sigma_min: f64, op_norm: f64, k: f64, epsilon: f64, d_rho: f64) -> f64 {
    let sa = alpha.sqrt();
    let mut bound = d_rho / (alpha * sigma_min) + 2.0 * std::f64::consts::SQRT_2 / (sa * sigma_min) * d_rho.sqrt();
    // K may overflow to +inf; an exact solve contributes nothing regardless
    if epsilon > 0.0 {
        bound += (k * op_norm * (2.0 * alpha).sqrt() + 2.0 / (sa * sigma_min)) * epsilon.sqrt();
    }
    bound
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub n: usize,
    pub trial: usize,
    pub rel_error: f64,
    pub epsilon_cert: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub records: Vec<RateRecord>,
    pub reference_n: usize,
    pub reference_epsilon: f64,
    pub reference_norm: f64,
}

pub const RATE_CSV_HEADER: &str = "n,trial,rel_error,epsilon_cert,wall_time_s";

impl RateTable {
    /// CSV with [`RATE_CSV_HEADER`]. Without `timing` the wall-time column is
    /// written as 0 so the file is a pure function of the inputs.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut s = format!("{RATE_CSV_HEADER}\n");
        for r in &self.records {
            let t = if timing { r.wall_time } else { 0.0 };
            s.push_str(&format!("{},{},{:e},{:e},{:.6}\n", r.n, r.trial, r.rel_error, r.epsilon_cert, t));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Vec<RateRecord>> {
        let mut lines = text.lines();
        if lines.next() != Some(RATE_CSV_HEADER) {
            return Err(Error::Format("missing rate table header".into()));
        }
        lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                let bad = || Error::Format(format!("bad rate row: {l}"));
                if f.len() != 5 {
                    return Err(bad());
                }
                Ok(RateRecord {
                    n: f[0].parse().map_err(|_| bad())?,
                    trial: f[1].parse().map_err(|_| bad())?,
                    rel_error: f[2].parse().map_err(|_| bad())?,
                    epsilon_cert: f[3].parse().map_err(|_| bad())?,
                    wall_time: f[4].parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }

    /// `(n, mean rel_error)` in grid order.
    pub fn mean_by_n(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for r in &self.records {
            match out.iter_mut().find(|(n, _, _)| *n == r.n) {
                Some(e) => {
                    e.1 += r.rel_error;
                    e.2 += 1;
                }
                None => out.push((r.n, r.rel_error, 1)),
            }
        }
        out.into_iter().map(|(n, s, c)| (n, s / c as f64)).collect()
    }

    pub fn summary(&self) -> RateSummary {
        RateSummary::from_means(self.mean_by_n())
    }
}

/// Shape checks on the mean error curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub means: Vec<(usize, f64)>,
    /// Spearman rank correlation between `n` and the mean error.
    pub spearman: f64,
    /// `c` in `c n^{-1/4}`, fitted so the envelope passes through the smallest `n`.
    pub envelope_c: f64,
    /// Whether every mean lies on or below the envelope.
    pub below_envelope: bool,
}

impl RateSummary {
    pub fn from_means(mut means: Vec<(usize, f64)>) -> Self {
        means.sort_by_key(|(n, _)| *n);
        let xs: Vec<f64> = means.iter().map(|(n, _)| *n as f64).collect();
        let ys: Vec<f64> = means.iter().map(|(_, e)| *e).collect();
        let spearman = spearman(&xs, &ys);
        let (n0, e0) = means.first().copied().unwrap_or((1, 0.0));
        let envelope_c = e0 * (n0 as f64).powf(0.25);
        let below_envelope = means
            .iter()
            .all(|&(n, e)| e <= envelope_c * (n as f64).powf(-0.25) * (1.0 + 1e-12));
        Self { means, spearman, envelope_c, below_envelope }
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// `points` sample sizes spaced linearly over `[min, max]`, rounded, duplicates dropped.
pub fn linear_grid(min: usize, max: usize, points: usize) -> Result<Vec<usize>> {
    if points == 0 || min == 0 || min > max {
        return Err(Error::InvalidParameter(format!("bad grid {min},{max},{points}")));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    let step = (max - min) as f64 / (points - 1) as f64;
    let mut grid: Vec<usize> = (0..points).map(|k| (min as f64 + k as f64 * step).round() as usize).collect();
    grid.dedup();
    Ok(grid)
}

/// Runs the sampling experiment: a reference solve on all of `data`, then for
/// every `(n, trial)` a solve on a uniform `n`-subsample and its relative error
/// against the reference. Cell seeds come from [`derive_seed`], so the table
/// does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn rate_experiment(
    data: &SampleMatrix,
    b: &[f64],
    op: &LinearOperator,
    alpha: f64,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<RateTable> {
    if trials == 0 || n_grid.is_empty() {
        return Err(Error::InvalidParameter("need trials >= 1 and a nonempty grid".into()));
    }
    if let Some(&n) = n_grid.iter().find(|&&n| n > data.n() || n == 0) {
        return Err(Error::SampleTooLarge { requested: n, available: data.n() });
    }
    let mut grid = n_grid.to_vec();
    grid.dedup();

    let full = EmpiricalPrior::new(data);
    let dual = DualProblem::quadratic(&full, op, b.to_vec(), alpha)?;
    let reference = dual.solve(cfg)?;
    let x_ref = recover_primal(&full, op, &reference.z_bar)?.x_bar;

    let cells: Vec<(usize, usize)> = grid.iter().flat_map(|&n| (0..trials).map(move |t| (n, t))).collect();
    let records = par::map_items(cells, Execution::default(), |(n, trial)| -> Result<RateRecord> {
        let start = Instant::now();
        let sub = subsample(data, n, derive_seed(seed, n as u64, trial as u64))?;
        let prior = EmpiricalPrior::new(&sub);
        let dual = DualProblem::quadratic(&prior, op, b.to_vec(), alpha)?;
        let res = dual.solve(cfg)?;
        let x = recover_primal(&prior, op, &res.z_bar)?.x_bar;
        Ok(RateRecord {
            n,
            trial,
            rel_error: relative_error(&x, &x_ref)?,
            epsilon_cert: res.epsilon_cert,
            wall_time: start.elapsed().as_secs_f64(),
        })
    });
    Ok(RateTable {
        records: records.into_iter().collect::<Result<_>>()?,
        reference_n: data.n(),
        reference_epsilon: reference.epsilon_cert,
        reference_norm: crate::norm(&x_ref),
    })
}

/// Two well-separated clusters in `[0,1]^d`, a desk-scale stand-in for an image dataset.
///
/// Cluster centres are `0.25` and `0.75` in every coordinate, with the second
/// cluster's pattern alternating so the clusters differ in direction as well as
/// brightness; points are spread uniformly `±0.2` around the centre.
pub fn two_cluster_samples(n: usize, d: usize, seed: u64) -> Result<SampleMatrix> {
    let mut rng = rng_from_seed(seed);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let second = rng.random::<f64>() < 0.5;
        for k in 0..d {
            let centre = match (second, k % 2) {
                (false, _) => 0.25,
                (true, 0) => 0.75,
                (true, _) => 0.6,
            };
            let v: f64 = centre + (rng.random::<f64>() - 0.5) * 0.4;
            data.push(v.clamp(0.0, 1.0));
        }
    }
    SampleMatrix::new(data, n, d)
}
