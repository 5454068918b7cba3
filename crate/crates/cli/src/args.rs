use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use mem_core::noise::{GaussianScale, NoiseKind};
use mem_core::recovery::{DEFAULT_MASK_GAMMA, DEFAULT_THRESHOLD};
use mem_core::SolverConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseArg {
    Gaussian,
    SaltPepper,
}

impl From<NoiseArg> for NoiseKind {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Gaussian => NoiseKind::Gaussian,
            NoiseArg::SaltPepper => NoiseKind::SaltPepper,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleArg {
    #[default]
    PerPixel,
    Total,
}

impl From<ScaleArg> for GaussianScale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::PerPixel => GaussianScale::PerPixel,
            ScaleArg::Total => GaussianScale::Total,
        }
    }
}

/// `identity`, `blur:<k1,k2,...>` (separable, odd length) or `csv:<path>` (dense rows).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OperatorSpec {
    Identity,
    Blur(Vec<f64>),
    Csv(PathBuf),
}

impl FromStr for OperatorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "identity" {
            return Ok(Self::Identity);
        }
        if let Some(k) = s.strip_prefix("blur:") {
            let taps = k
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("bad blur kernel '{k}': {e}"))?;
            if taps.len() % 2 == 0 {
                return Err(format!("blur kernel needs an odd number of taps, got {}", taps.len()));
            }
            return Ok(Self::Blur(taps));
        }
        if let Some(p) = s.strip_prefix("csv:") {
            return Ok(Self::Csv(PathBuf::from(p)));
        }
        Err(format!("unknown operator '{s}' (expected identity, blur:<taps> or csv:<path>)"))
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::Blur(k) => {
                let taps: Vec<String> = k.iter().map(|t| t.to_string()).collect();
                write!(f, "blur:{}", taps.join(","))
            }
            Self::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

impl TryFrom<String> for OperatorSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<OperatorSpec> for String {
    fn from(o: OperatorSpec) -> String {
        o.to_string()
    }
}

/// Ground truth as a dataset index or a PGM path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundTruth {
    Index(usize),
    Pgm(PathBuf),
}

impl FromStr for GroundTruth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("empty ground truth".into());
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => Self::Index(i),
            Err(_) => Self::Pgm(PathBuf::from(s)),
        })
    }
}

/// `min,max,points`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub min: usize,
    pub max: usize,
    pub points: usize,
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<usize> = s
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("grid '{s}': {e}"))?;
        match v[..] {
            [min, max, points] if min >= 1 && min <= max && points >= 1 => Ok(Grid { min, max, points }),
            [_, _, _] => Err(format!("grid '{s}' needs 1 <= min <= max and points >= 1")),
            _ => Err(format!("grid '{s}' must be min,max,points")),
        }
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("{v} must be positive and finite")),
        Err(e) => Err(e.to_string()),
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("{v} must be non-negative and finite")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverArgs {
    /// Stop once the dual gradient norm falls below this.
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iter: u64,
    /// L-BFGS history length.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub memory: u64,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            grad_tol: self.grad_tol,
            max_iter: self.max_iter as usize,
            memory: self.memory as usize,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiseArgs {
    /// IDX image file (optionally gzip-compressed).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Dataset index (excluded from the prior) or PGM path.
    #[arg(long, value_name = "PGM|INDEX")]
    pub ground_truth: GroundTruth,
    #[arg(long, value_enum)]
    pub noise: NoiseArg,
    /// Relative Gaussian level or salt-and-pepper probability; defaults to 0.10 / 0.2.
    #[arg(long, value_parser = nonnegative)]
    pub level: Option<f64>,
    #[arg(long, value_enum, default_value_t = ScaleArg::PerPixel)]
    pub gaussian_scale: ScaleArg,
    #[arg(long, value_parser = positive)]
    pub alpha: f64,
    /// Prior size; a uniform subsample of the dataset. All images by default.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = nonnegative)]
    pub threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MASK_GAMMA, value_parser = nonnegative)]
    pub mask_gamma: f64,
    #[arg(long, default_value = "identity")]
    pub operator: OperatorSpec,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[command(group(clap::ArgGroup::new("observation").required(true).args(["b", "synthesize"])))]
pub struct RatesArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Observation as a PGM.
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Observe a seeded random dataset image through the operator with 10% Gaussian noise.
    #[arg(long)]
    pub synthesize: bool,
    #[arg(long, value_parser = positive)]
    pub alpha: f64,
    #[arg(long, default_value = "10000,60000,20", value_name = "MIN,MAX,POINTS")]
    pub grid: Grid,
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "identity")]
    pub operator: OperatorSpec,
    /// Record wall-clock seconds per cell; otherwise the column is 0 and the file is reproducible.
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_parser = positive)]
    pub alpha: f64,
    /// Dual ball radius; `2ρ₀` by default.
    #[arg(long, value_parser = positive)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub ball_samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "identity")]
    pub operator: OperatorSpec,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}
