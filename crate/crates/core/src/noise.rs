//! Seeded corruption models: additive Gaussian and salt-and-pepper.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;
use crate::{norm, Error, Result};

pub const DEFAULT_GAUSSIAN_LEVEL: f64 = 0.10;
pub const DEFAULT_SALT_PEPPER_LEVEL: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian,
    SaltPepper,
}

/// How the Gaussian level is turned into a per-pixel standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianScale {
    /// `σ_px = level · ‖x‖ / sqrt(d)`, so the total noise norm is about `level · ‖x‖`.
    #[default]
    PerPixel,
    /// `σ_px = level · ‖x‖`.
    Total,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
    #[serde(default)]
    pub scale: GaussianScale,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0) || !self.level.is_finite() {
            return Err(Error::InvalidParameter(format!("noise level {} must be >= 0", self.level)));
        }
        if self.kind == NoiseKind::SaltPepper && 2.0 * self.level > 1.0 {
            return Err(Error::InvalidProbability(self.level));
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        match self.kind {
            NoiseKind::Gaussian => add_gaussian_scaled(x, self.level, self.seed, self.scale),
            NoiseKind::SaltPepper => add_salt_pepper(x, self.level, self.seed),
        }
    }
}

/// Per-pixel standard deviation for a given level.
pub fn gaussian_sigma(x: &[f64], sigma_rel: f64, scale: GaussianScale) -> f64 {
    match scale {
        GaussianScale::PerPixel => sigma_rel * norm(x) / (x.len().max(1) as f64).sqrt(),
        GaussianScale::Total => sigma_rel * norm(x),
    }
}

/// `x + η`, `η_i ~ N(0, σ_px²)` i.i.d. with [`GaussianScale::PerPixel`]. Not clamped.
pub fn add_gaussian(x: &[f64], sigma_rel: f64, seed: u64) -> Result<Vec<f64>> {
    add_gaussian_scaled(x, sigma_rel, seed, GaussianScale::PerPixel)
}

pub fn add_gaussian_scaled(x: &[f64], sigma_rel: f64, seed: u64, scale: GaussianScale) -> Result<Vec<f64>> {
    if !(sigma_rel >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_rel {sigma_rel} must be >= 0")));
    }
    let sigma = gaussian_sigma(x, sigma_rel, scale);
    if sigma == 0.0 {
        return Ok(x.to_vec());
    }
    let mut rng = rng_from_seed(seed);
    Ok(x.iter()
        .map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            v + sigma * e
        })
        .collect())
}

/// Each pixel independently: 1 with probability `p`, 0 with probability `p`,
/// otherwise unchanged.
pub fn add_salt_pepper(x: &[f64], p: f64, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    let mut rng = rng_from_seed(seed);
    Ok(x.iter()
        .map(|&v| {
            let u: f64 = rng.random();
            if u < p {
                1.0
            } else if u < 2.0 * p {
                0.0
            } else {
                v
            }
        })
        .collect())
}
