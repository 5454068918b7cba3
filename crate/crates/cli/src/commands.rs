use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use mem_core::dataset::{load_images, load_labels, nearest_neighbor, normalize, subsample, ImageSet};
use mem_core::diagnostics::{compute_constants, linear_grid, mgf_bounds_report, rate_experiment, MgfBoundsReport};
use mem_core::io::{read_pgm, weights_csv, write_pgm};
use mem_core::noise::{add_gaussian, NoiseSpec, DEFAULT_GAUSSIAN_LEVEL, DEFAULT_SALT_PEPPER_LEVEL};
use mem_core::recovery::{kl_to_prior, pixel_mask, recover_primal, threshold_measure};
use mem_core::rng::{derive_seed, splitmix64};
use mem_core::{DualProblem, EmpiricalPrior, LinearOperator, SampleMatrix};

use crate::args::{DenoiseArgs, DiagnoseArgs, GroundTruth, NoiseArg, OperatorSpec, RatesArgs};
use crate::manifest::RunManifest;

/// Bad flag combinations found after parsing; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

// Independent streams for the different random choices of one run.
const NOISE_STREAM: u64 = 1;
const SUBSAMPLE_STREAM: u64 = 2;
const SYNTH_INDEX_STREAM: u64 = 3;

struct Dataset {
    set: ImageSet,
    samples: SampleMatrix,
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let set = load_images(path).with_context(|| format!("loading {}", path.display()))?;
    if set.trailing_bytes() > 0 {
        eprintln!("warning: {} has {} trailing bytes after the image tensor", path.display(), set.trailing_bytes());
    }
    let samples = normalize(&set)?;
    Ok(Dataset { set, samples })
}

fn build_operator(spec: &OperatorSpec, rows: usize, cols: usize, manifest: &mut RunManifest) -> Result<LinearOperator> {
    let op = match spec {
        OperatorSpec::Identity => LinearOperator::identity(rows * cols),
        OperatorSpec::Blur(k) => LinearOperator::blur(k.clone(), rows, cols)?,
        OperatorSpec::Csv(p) => {
            manifest.input("operator", p)?;
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            LinearOperator::from_csv(&text)?
        }
    };
    let (_, d) = op.shape();
    if d != rows * cols {
        return Err(usage(format!("operator acts on {d} pixels but images have {}", rows * cols)));
    }
    Ok(op)
}

fn read_observation(path: &Path, m: usize) -> Result<Vec<f64>> {
    let img = read_pgm(path).with_context(|| format!("reading {}", path.display()))?;
    if img.pixels.len() != m {
        return Err(usage(format!("{} has {} pixels, the operator produces {m}", path.display(), img.pixels.len())));
    }
    Ok(img.pixels)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<()> {
    std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub const DENOISE_OUTPUTS: [&str; 6] =
    ["b.pgm", "x_bar.pgm", "x_thresholded.pgm", "x_masked.pgm", "nearest_neighbor.pgm", "weights.csv"];

pub fn denoise(a: &DenoiseArgs) -> Result<()> {
    let cfg = a.solver.config();
    let mut manifest = RunManifest::new("denoise", a, cfg.clone())?;
    manifest.input("data", &a.data)?;
    let mut data = load_dataset(&a.data)?;
    if let Some(l) = &a.labels {
        manifest.input("labels", l)?;
        data.set.attach_labels(load_labels(l)?)?;
    }
    let (rows, cols) = (data.set.rows(), data.set.cols());
    let d = rows * cols;

    // the pool excludes the ground truth when it comes from the dataset
    let (truth, pool, excluded) = match &a.ground_truth {
        GroundTruth::Index(i) => {
            if *i >= data.samples.n() {
                return Err(usage(format!("ground truth index {i} out of range (dataset has {})", data.samples.n())));
            }
            if data.samples.n() < 2 {
                return Err(usage("a dataset ground truth needs at least one other image for the prior"));
            }
            (data.samples.row(*i).to_vec(), data.samples.without_row(*i)?, Some(*i))
        }
        GroundTruth::Pgm(p) => {
            manifest.input("ground_truth", p)?;
            let img = read_pgm(p).with_context(|| format!("reading {}", p.display()))?;
            if (img.height, img.width) != (rows, cols) {
                return Err(usage(format!(
                    "ground truth is {}x{}, dataset images are {rows}x{cols}",
                    img.height, img.width
                )));
            }
            (img.pixels, data.samples.clone(), None)
        }
    };
    let original_index = |i: usize| match excluded {
        Some(g) if i >= g => i + 1,
        _ => i,
    };

    let op = build_operator(&a.operator, rows, cols, &mut manifest)?;
    if op.shape().0 != d {
        return Err(usage("denoise needs an operator whose output is an image of the same size"));
    }

    let prior_samples = match a.n {
        Some(n) => {
            let n = n as usize;
            let s = derive_seed(a.seed, n as u64, SUBSAMPLE_STREAM);
            manifest.seed("subsample", s);
            subsample(&pool, n, s)?
        }
        None => pool.clone(),
    };
    let level = a.level.unwrap_or(match a.noise {
        NoiseArg::Gaussian => DEFAULT_GAUSSIAN_LEVEL,
        NoiseArg::SaltPepper => DEFAULT_SALT_PEPPER_LEVEL,
    });
    let noise_seed = derive_seed(a.seed, 0, NOISE_STREAM);
    manifest.seed("noise", noise_seed);
    let spec = NoiseSpec { kind: a.noise.into(), level, seed: noise_seed, scale: a.gaussian_scale.into() };
    spec.validate()?;
    if !(a.mask_gamma < 0.5) {
        return Err(usage(format!("--mask-gamma {} must be below 0.5", a.mask_gamma)));
    }
    if !(a.threshold < 1.0) {
        return Err(usage(format!("--threshold {} must be below 1", a.threshold)));
    }

    manifest.outputs = DENOISE_OUTPUTS.iter().map(|s| s.to_string()).collect();
    create_out(&a.out)?;
    manifest.write(&a.out)?;

    let b = spec.apply(&op.apply(&truth)?)?;
    let prior = EmpiricalPrior::new(&prior_samples);
    let dual = DualProblem::quadratic(&prior, &op, b.clone(), a.alpha)?;
    let res = dual.solve(&cfg)?;
    let sol = recover_primal(&prior, &op, &res.z_bar)?;
    let thresholded = threshold_measure(&prior, &sol, a.threshold)?;
    let masked = pixel_mask(&thresholded.x_bar, a.mask_gamma)?;
    let nn = nearest_neighbor(&pool, &b)?;

    let out = |name: &str| a.out.join(name);
    write_pgm(out("b.pgm"), &b, cols, rows)?;
    write_pgm(out("x_bar.pgm"), &sol.x_bar, cols, rows)?;
    write_pgm(out("x_thresholded.pgm"), &thresholded.x_bar, cols, rows)?;
    write_pgm(out("x_masked.pgm"), &masked, cols, rows)?;
    write_pgm(out("nearest_neighbor.pgm"), pool.row(nn), cols, rows)?;
    std::fs::write(out("weights.csv"), weights_csv(&sol.weights))?;

    let label = |i: usize| data.set.labels().map(|l| format!(" (label {})", l[i])).unwrap_or_default();
    println!("prior: {} images of {rows}x{cols}", prior.n());
    if let Some(g) = excluded {
        println!("ground truth: dataset image {g}{}", label(g));
    }
    println!(
        "solver: {:?} after {} iterations, |grad| = {:.3e}, epsilon = {:.3e}",
        res.termination, res.iterations, res.grad_norm, res.epsilon_cert
    );
    println!(
        "measure: support {} of {}, KL to prior {:.4}, {} weights >= {}",
        sol.support_size,
        prior.n(),
        kl_to_prior(&sol),
        thresholded.support_size,
        a.threshold
    );
    println!("nearest neighbour of b: dataset image {}{}", original_index(nn), label(original_index(nn)));
    if !res.converged {
        return Err(anyhow!("solver stopped without reaching --grad-tol {} ({:?})", cfg.grad_tol, res.termination));
    }
    Ok(())
}

pub fn rates(a: &RatesArgs) -> Result<()> {
    let cfg = a.solver.config();
    let mut manifest = RunManifest::new("rates", a, cfg.clone())?;
    manifest.input("data", &a.data)?;
    let data = load_dataset(&a.data)?;
    let op = build_operator(&a.operator, data.set.rows(), data.set.cols(), &mut manifest)?;
    let (m, _) = op.shape();
    let b = match (&a.b, a.synthesize) {
        (Some(p), false) => {
            manifest.input("b", p)?;
            read_observation(p, m)?
        }
        (None, true) => {
            let idx = (splitmix64(derive_seed(a.seed, 0, SYNTH_INDEX_STREAM)) % data.samples.n() as u64) as usize;
            let noise_seed = derive_seed(a.seed, 0, NOISE_STREAM);
            manifest.seed("synthetic_index", idx as u64);
            manifest.seed("noise", noise_seed);
            add_gaussian(&op.apply(data.samples.row(idx))?, DEFAULT_GAUSSIAN_LEVEL, noise_seed)?
        }
        _ => return Err(usage("give exactly one of --b and --synthesize")),
    };
    let grid = linear_grid(a.grid.min, a.grid.max, a.grid.points)?;
    if a.grid.max > data.samples.n() {
        return Err(usage(format!("--grid max {} exceeds the {} images in the dataset", a.grid.max, data.samples.n())));
    }
    manifest.seed("experiment", a.seed);
    manifest.outputs = vec!["rates.csv".into()];
    create_out(&a.out)?;
    manifest.write(&a.out)?;

    let table = rate_experiment(&data.samples, &b, &op, a.alpha, &grid, a.trials as usize, a.seed, &cfg)?;
    std::fs::write(a.out.join("rates.csv"), table.to_csv(a.timing))?;

    let summary = table.summary();
    println!("{:>8}  {:>12}  {:>12}", "n", "mean error", "c n^-1/4");
    for (n, e) in &summary.means {
        println!("{n:>8}  {e:>12.6}  {:>12.6}", summary.envelope_c * (*n as f64).powf(-0.25));
    }
    println!("spearman(n, mean error) = {:.3}", summary.spearman);
    Ok(())
}

#[derive(Serialize)]
struct MinimizerCheck {
    z_norm: f64,
    objective_abs: f64,
    rho0: f64,
    within_rho0: bool,
    grad_norm: f64,
    epsilon_cert: f64,
}

#[derive(Serialize)]
struct BoundsReport {
    rho: f64,
    mgf: MgfBoundsReport,
    minimizer: MinimizerCheck,
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<()> {
    let cfg = a.solver.config();
    let mut manifest = RunManifest::new("diagnose", a, cfg.clone())?;
    manifest.input("data", &a.data)?;
    manifest.input("b", &a.b)?;
    let data = load_dataset(&a.data)?;
    let op = build_operator(&a.operator, data.set.rows(), data.set.cols(), &mut manifest)?;
    let b = read_observation(&a.b, op.shape().0)?;
    manifest.seed("ball", a.seed);
    manifest.outputs = vec!["constants.json".into(), "bounds_report.json".into()];
    create_out(&a.out)?;
    manifest.write(&a.out)?;

    let prior = EmpiricalPrior::new(&data.samples);
    let dual = DualProblem::quadratic(&prior, &op, b, a.alpha)?;
    // ε certified by a solve that stops exactly at the gradient tolerance
    let epsilon = a.alpha * cfg.grad_tol * cfg.grad_tol / 2.0;
    let constants = compute_constants(&dual, epsilon)?;
    let rho = a.rho.unwrap_or(constants.ball_radius_used);
    let mgf = mgf_bounds_report(&prior, &op, rho, a.ball_samples as usize, a.seed)?;
    let res = dual.solve(&cfg)?;
    let z_norm = res.z_bar.iter().map(|v| v * v).sum::<f64>().sqrt();
    let minimizer = MinimizerCheck {
        z_norm,
        objective_abs: res.objective.abs(),
        rho0: constants.rho0,
        within_rho0: z_norm <= constants.rho0 && res.objective.abs() <= constants.rho0,
        grad_norm: res.grad_norm,
        epsilon_cert: res.epsilon_cert,
    };
    write_json(a.out.join("constants.json"), &constants)?;
    let report = BoundsReport { rho, mgf, minimizer };
    write_json(a.out.join("bounds_report.json"), &report)?;

    println!("rho_hat = {:.6e}, rho0 = {:.6e}, K = {:.6e}", constants.rho_hat, constants.rho0, constants.k);
    println!(
        "MGF bounds on B_{rho:.4}: {} violations in {} samples; minimizer within rho0: {}",
        report.mgf.violations, report.mgf.trials, report.minimizer.within_rho0
    );
    if report.mgf.violations > 0 {
        return Err(mem_core::Error::BoundViolated { violations: report.mgf.violations, trials: report.mgf.trials }.into());
    }
    if !report.minimizer.within_rho0 {
        return Err(anyhow!("minimizer outside the rho0 ball"));
    }
    if !res.converged {
        return Err(anyhow!("solver stopped without reaching --grad-tol {} ({:?})", cfg.grad_tol, res.termination));
    }
    Ok(())
}
