//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::panic;
use std::time::{Duration, Instant};

use mem_core::dataset::{parse_idx, subsample, SampleMatrix};
use mem_core::diagnostics::{
    compute_constants, epi_distance_grid, linear_grid, mgf_bounds_report, primal_error_bound, rate_experiment,
    two_cluster_samples,
};
use mem_core::noise::add_gaussian;
use mem_core::recovery::{kl_to_prior, recover_primal, threshold_measure};
use mem_core::rng::{rng_from_seed, MemRng};
use mem_core::solver::{dual_gradient, dual_objective, epsilon_distance_bound, solve_dual};
use mem_core::{DualProblem, EmpiricalPrior, Error, LinearOperator, SolverConfig};
use rand::Rng;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn unit_vec(r: &mut MemRng, d: usize) -> Vec<f64> {
    (0..d).map(|_| r.random::<f64>()).collect()
}

fn sym_vec(r: &mut MemRng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| (r.random::<f64>() - 0.5) * 2.0 * scale).collect()
}

fn samples(r: &mut MemRng, n: usize, d: usize) -> SampleMatrix {
    SampleMatrix::new((0..n * d).map(|_| r.random::<f64>()).collect(), n, d).unwrap()
}

/// Well-conditioned random square or tall operator: identity plus a small perturbation.
fn operator(r: &mut MemRng, m: usize, d: usize) -> LinearOperator {
    let data = (0..m * d)
        .map(|k| if k / d == k % d { 1.0 } else { 0.0 } + (r.random::<f64>() - 0.5) * 0.6)
        .collect();
    LinearOperator::dense(m, d, data).unwrap()
}

type Check = fn() -> Result<String, String>;

fn closed_form_oracle() -> Result<String, String> {
    let mut r = rng_from_seed(1);
    let cfg = SolverConfig::default();
    let mut worst_z = 0.0f64;
    let mut worst_x = 0.0f64;
    for _ in 0..50 {
        let d = r.random_range(1..=16);
        let x1 = unit_vec(&mut r, d);
        let b = sym_vec(&mut r, d, 2.0);
        let alpha = 0.05 + 5.0 * r.random::<f64>();
        let prior = EmpiricalPrior::new(&SampleMatrix::from_rows(&[x1.clone()]).unwrap());
        let op = LinearOperator::identity(d);
        let p = DualProblem::quadratic(&prior, &op, b.clone(), alpha).unwrap();
        let res = solve_dual(&p, &cfg).unwrap();
        let expected: Vec<f64> = b.iter().zip(&x1).map(|(bi, xi)| alpha * (bi - xi)).collect();
        let ez = norm(&sub(&res.z_bar, &expected));
        if ez > 1e-7 * (1.0 + norm(&res.z_bar)) {
            return Err(format!("‖z̄ - α(b - X₁)‖ = {ez:e}"));
        }
        let x = recover_primal(&prior, &op, &res.z_bar).unwrap().x_bar;
        let ex = norm(&sub(&x, &x1));
        if ex > 1e-9 {
            return Err(format!("‖x̄ - X₁‖ = {ex:e}"));
        }
        worst_z = worst_z.max(ez / (1.0 + norm(&res.z_bar)));
        worst_x = worst_x.max(ex);
    }
    Ok(format!("50 instances, max rel z error {worst_z:.1e}, max x error {worst_x:.1e}"))
}

fn gradient_check() -> Result<String, String> {
    let mut r = rng_from_seed(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.random_range(1..=50);
        let d = r.random_range(1..=16);
        let m = r.random_range(1..=16);
        let prior = EmpiricalPrior::new(&samples(&mut r, n, d));
        let op = operator(&mut r, m, d);
        let b = unit_vec(&mut r, m);
        let alpha = 0.1 + 3.0 * r.random::<f64>();
        let p = DualProblem::quadratic(&prior, &op, b, alpha).unwrap();
        let z = sym_vec(&mut r, m, 2.0);
        let g = dual_gradient(&p, &z).unwrap();
        let fd: Vec<f64> = (0..m)
            .map(|i| {
                let h = 1e-5 * (1.0 + z[i].abs());
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                (dual_objective(&p, &zp).unwrap() - dual_objective(&p, &zm).unwrap()) / (2.0 * h)
            })
            .collect();
        let rel = norm(&sub(&g, &fd)) / norm(&g);
        if rel > 1e-5 {
            return Err(format!("relative gradient error {rel:e} (n={n}, d={d}, m={m})"));
        }
        worst = worst.max(rel);
    }
    Ok(format!("100 instances, max relative error {worst:.1e}"))
}

fn strong_convexity_suite() -> Result<String, String> {
    let mut r = rng_from_seed(3);
    for k in 0..1000 {
        let (n, d, m) = (r.random_range(1..=30), r.random_range(1..=8), r.random_range(1..=8));
        let prior = EmpiricalPrior::new(&samples(&mut r, n, d));
        let op = operator(&mut r, m, d);
        let alpha = 0.1 + 3.0 * r.random::<f64>();
        let p = DualProblem::quadratic(&prior, &op, unit_vec(&mut r, m), alpha).unwrap();
        let z1 = sym_vec(&mut r, m, 5.0);
        let z2 = sym_vec(&mut r, m, 5.0);
        let (f1, f2) = (dual_objective(&p, &z1).unwrap(), dual_objective(&p, &z2).unwrap());
        let g1 = dual_gradient(&p, &z1).unwrap();
        let dz = sub(&z2, &z1);
        let gap = f2 - (f1 + dot(&g1, &dz) + dot(&dz, &dz) / (2.0 * alpha));
        if gap < -1e-10 {
            return Err(format!("pair {k}: strong convexity violated by {:e}", -gap));
        }
    }
    let loose = SolverConfig { grad_tol: 1e-5, ..Default::default() };
    let tight = SolverConfig { grad_tol: 1e-13, max_iter: 5000, ..Default::default() };
    let mut worst_ratio = 0.0f64;
    for t in 0..100 {
        let (n, d) = (r.random_range(2..=50), r.random_range(1..=8));
        let m = r.random_range(1..=8);
        let prior = EmpiricalPrior::new(&samples(&mut r, n, d));
        let op = operator(&mut r, m, d);
        let alpha = 0.1 + 3.0 * r.random::<f64>();
        let p = DualProblem::quadratic(&prior, &op, sym_vec(&mut r, m, 2.0), alpha).unwrap();
        let eps = solve_dual(&p, &loose).unwrap();
        let reference = solve_dual(&p, &tight).unwrap();
        let dist = norm(&sub(&eps.z_bar, &reference.z_bar));
        let bound = epsilon_distance_bound(alpha, eps.epsilon_cert).unwrap();
        if dist > bound {
            return Err(format!(
                "trial {t}: ‖z̄_ε - z̄_ref‖ = {dist:e} > √(2αε) = {bound:e} (reference grad {:e})",
                reference.grad_norm
            ));
        }
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(dist / bound);
        }
    }
    Ok(format!("1000 pairs, 100/100 distance checks, max dist/bound {worst_ratio:.2}"))
}

fn rho0_suite() -> Result<String, String> {
    let mut r = rng_from_seed(4);
    let cfg = SolverConfig::default();
    let mut tightest = 0.0f64;
    for k in 0..20 {
        let (n, d) = (r.random_range(1..=40), r.random_range(1..=10));
        let m = r.random_range(d..=d + 3);
        let prior = EmpiricalPrior::new(&samples(&mut r, n, d));
        let op = operator(&mut r, m, d);
        let alpha = 0.1 + 5.0 * r.random::<f64>();
        let p = DualProblem::quadratic(&prior, &op, sym_vec(&mut r, m, 2.0), alpha).unwrap();
        let res = solve_dual(&p, &cfg).unwrap();
        let c = compute_constants(&p, res.epsilon_cert).unwrap();
        let (zn, phi) = (norm(&res.z_bar), res.objective.abs());
        if zn > c.rho0 || phi > c.rho0 {
            return Err(format!("instance {k}: ‖z̄‖ = {zn}, |φ(z̄)| = {phi}, ρ₀ = {}", c.rho0));
        }
        tightest = tightest.max(zn.max(phi) / c.rho0);
    }
    Ok(format!("20 instances, 0 violations, max ratio to ρ₀ {tightest:.3}"))
}

fn mgf_bounds_suite() -> Result<String, String> {
    let mut r = rng_from_seed(5);
    let mut total = 0;
    for k in 0..10 {
        let (n, d) = (r.random_range(1..=60), r.random_range(1..=12));
        let m = r.random_range(1..=12);
        let prior = EmpiricalPrior::new(&samples(&mut r, n, d));
        let op = if k % 3 == 0 { LinearOperator::identity(d) } else { operator(&mut r, m, d) };
        let rho = 0.1 + 10.0 * r.random::<f64>();
        let rep = mgf_bounds_report(&prior, &op, rho, 100, 50 + k).map_err(|e| e.to_string())?;
        if rep.violations > 0 {
            return Err(format!("prior {k}: {} violations", rep.violations));
        }
        total += rep.trials;
    }
    Ok(format!("{total} sampled points across 10 priors, 0 violations"))
}

fn primal_bound_suite() -> Result<String, String> {
    let mut r = rng_from_seed(6);
    let loose = SolverConfig { grad_tol: 1e-4, ..Default::default() };
    let tight = SolverConfig { grad_tol: 1e-12, max_iter: 5000, ..Default::default() };
    let mut worst = 0.0f64;
    for k in 0..20 {
        let d = r.random_range(1..=4);
        let big = r.random_range(2..=20);
        let mu_samples = samples(&mut r, big, d);
        let mu = EmpiricalPrior::new(&mu_samples);
        let nu = EmpiricalPrior::new(&subsample(&mu_samples, r.random_range(1..=big), k).unwrap());
        let op = operator(&mut r, d, d);
        let alpha = 0.2 + 2.0 * r.random::<f64>();
        let b = unit_vec(&mut r, d);
        let p_mu = DualProblem::quadratic(&mu, &op, b.clone(), alpha).unwrap();
        let p_nu = DualProblem::quadratic(&nu, &op, b, alpha).unwrap();
        let x_mu = recover_primal(&mu, &op, &solve_dual(&p_mu, &tight).unwrap().z_bar).unwrap().x_bar;
        let sol_nu = solve_dual(&p_nu, &loose).unwrap();
        let x_nu = recover_primal(&nu, &op, &sol_nu.z_bar).unwrap().x_bar;
        let rho = compute_constants(&p_mu, sol_nu.epsilon_cert).unwrap().ball_radius_used;
        let per_axis = [0, 61, 25, 13, 9][d];
        let d_hat = epi_distance_grid(&nu, &mu, &op, rho, per_axis).unwrap().upper_bound;
        let bound = primal_error_bound(&p_mu, &nu, sol_nu.epsilon_cert, d_hat).unwrap();
        let measured = norm(&sub(&x_nu, &x_mu));
        if measured > bound {
            return Err(format!("instance {k}: measured {measured:e} > bound {bound:e}"));
        }
        worst = worst.max(measured / bound);
    }
    Ok(format!("20 instances, 0 violations, max measured/bound {worst:.2e}"))
}

fn rate_suite() -> Result<String, String> {
    let data = two_cluster_samples(2000, 9, 7).unwrap();
    let truth = two_cluster_samples(1, 9, 8).unwrap();
    let b = add_gaussian(truth.row(0), 0.10, 9).unwrap();
    let op = LinearOperator::identity(9);
    let grid = linear_grid(100, 1000, 10).unwrap();
    let table = rate_experiment(&data, &b, &op, 1.0, &grid, 15, 10, &SolverConfig::default())
        .map_err(|e| e.to_string())?;
    let s = table.summary();
    let curve: Vec<String> = s.means.iter().map(|(n, e)| format!("{n}:{e:.4}")).collect();
    let detail = format!("spearman {:.3}, c = {:.4}, means [{}]", s.spearman, s.envelope_c, curve.join(" "));
    if table.records.len() != 150 {
        return Err(format!("{} rows", table.records.len()));
    }
    if s.spearman > -0.8 {
        return Err(format!("not monotone: {detail}"));
    }
    if !s.below_envelope {
        return Err(format!("above c·n^(-1/4): {detail}"));
    }
    Ok(detail)
}

fn recovery_invariants() -> Result<String, String> {
    let mut r = rng_from_seed(10);
    let cfg = SolverConfig::default();
    for k in 0..1000 {
        let (n, d) = (r.random_range(1..=40), r.random_range(1..=6));
        let m = r.random_range(1..=6);
        let data = samples(&mut r, n, d);
        let prior = EmpiricalPrior::new(&data);
        let op = operator(&mut r, m, d);
        let alpha = 0.1 + 10.0 * r.random::<f64>();
        let p = DualProblem::quadratic(&prior, &op, sym_vec(&mut r, m, 3.0), alpha).unwrap();
        let sol = recover_primal(&prior, &op, &solve_dual(&p, &cfg).unwrap().z_bar).unwrap();
        let mass: f64 = sol.weights.iter().sum();
        if sol.weights.iter().any(|w| *w < 0.0) || (mass - 1.0).abs() > 1e-12 {
            return Err(format!("solve {k}: weights off the simplex (mass {mass})"));
        }
        let combo: Vec<f64> = (0..d).map(|j| data.rows().zip(&sol.weights).map(|(x, w)| w * x[j]).sum()).collect();
        if norm(&sub(&combo, &sol.x_bar)) > 1e-12 {
            return Err(format!("solve {k}: x̄ is not Σ w_i X_i"));
        }
        for j in 0..d {
            let (lo, hi) = data.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[j]), hi.max(x[j])));
            if sol.x_bar[j] < lo - 1e-12 || sol.x_bar[j] > hi + 1e-12 {
                return Err(format!("solve {k}: x̄ outside the sample hull box"));
            }
        }
        let kl = kl_to_prior(&sol);
        if !(0.0..=(n as f64).ln() + 1e-12).contains(&kl) {
            return Err(format!("solve {k}: KL {kl} outside [0, log {n}]"));
        }
        if threshold_measure(&prior, &sol, 0.0).unwrap() != sol {
            return Err(format!("solve {k}: threshold 0 changed the solution"));
        }
    }
    Ok("1000 solves, all invariants hold".into())
}

fn determinism_suite() -> Result<String, String> {
    let data = two_cluster_samples(300, 6, 11).unwrap();
    let b = add_gaussian(data.row(0), 0.1, 12).unwrap();
    let op = LinearOperator::identity(6);
    let grid = linear_grid(50, 250, 3).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| rate_experiment(&data, &b, &op, 1.0, &grid, 4, 13, &SolverConfig::default()))
            .unwrap()
            .to_csv(false)
    };
    let one = run(1);
    if one != run(8) || one != run(1) {
        return Err("rate tables differ across thread counts".into());
    }
    Ok(format!("rate table identical across 1 and 8 threads ({} bytes); CLI byte checks live in the mem-cli tests", one.len()))
}

fn idx_fixtures() -> Result<String, String> {
    let mut valid = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
    valid.extend([0, 255, 1, 2, 3, 4, 5, 6]);
    let set = parse_idx(&valid).map_err(|e| e.to_string())?;
    if (set.count(), set.rows(), set.cols()) != (2, 2, 2) || set.image(0) != [0, 255, 1, 2] || set.image(1) != [3, 4, 5, 6] {
        return Err("valid tensor parsed incorrectly".into());
    }
    let mut bad = valid.clone();
    bad[3] = 1;
    if !matches!(parse_idx(&bad), Err(Error::MagicMismatch { .. })) {
        return Err("bad magic accepted".into());
    }
    let mut short = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2];
    short.extend([1, 2, 3]);
    if !matches!(parse_idx(&short), Err(Error::Truncated { .. })) {
        return Err("truncated payload accepted".into());
    }
    Ok("valid 2x2x2, bad magic and truncated fixtures behave as required".into())
}

fn main() {
    let criteria: [(u32, &str, Check, Option<Duration>); 10] = [
        (1, "closed-form oracle", closed_form_oracle, Some(Duration::from_secs(1))),
        (2, "gradient vs finite differences", gradient_check, Some(Duration::from_secs(10))),
        (3, "strong convexity and ε-distance", strong_convexity_suite, None),
        (4, "ρ₀ bounds", rho0_suite, None),
        (5, "MGF bounds", mgf_bounds_suite, None),
        (6, "primal error bound", primal_bound_suite, Some(Duration::from_secs(120))),
        (7, "sampling rate experiment", rate_suite, Some(Duration::from_secs(120))),
        (8, "recovery invariants", recovery_invariants, None),
        (9, "determinism across thread counts", determinism_suite, None),
        (10, "IDX fixtures", idx_fixtures, None),
    ];
    let mut failed = 0;
    for (id, name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(msg), Some(l)) if elapsed > l => Err(format!("took {elapsed:.2?}, limit {l:?}; {msg}")),
            (o, _) => o,
        };
        match outcome {
            Ok(msg) => println!("criterion {id:>2} PASS  {name} [{elapsed:.2?}]: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} [{elapsed:.2?}]: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
