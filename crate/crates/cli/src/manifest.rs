//! Run manifests: everything needed to re-run a command, plus input checksums.
//!
//! The `invocation` block (argv, thread count, timestamp) describes how this
//! particular process was started and is the only part that differs between
//! otherwise identical runs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use mem_core::rng::RNG_ALGORITHM;
use mem_core::SolverConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl InputFile {
    pub fn hash(role: &str, path: &Path) -> Result<Self> {
        let data = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self { role: role.into(), path: path.to_path_buf(), sha256: sha256_hex(&data), bytes: data.len() as u64 })
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub argv: Vec<String>,
    pub threads: usize,
    pub started_utc: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved flags, defaults included.
    pub parameters: Value,
    pub seeds: Value,
    pub rng_algorithm: String,
    pub inputs: Vec<InputFile>,
    pub solver: SolverConfig,
    pub outputs: Vec<String>,
    pub invocation: Invocation,
}

impl RunManifest {
    pub fn new(command: &str, parameters: &impl Serialize, solver: SolverConfig) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            parameters: serde_json::to_value(parameters)?,
            seeds: Value::Object(Default::default()),
            rng_algorithm: RNG_ALGORITHM.into(),
            inputs: Vec::new(),
            solver,
            outputs: Vec::new(),
            invocation: Invocation {
                argv: std::env::args().collect(),
                threads: rayon::current_num_threads(),
                started_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            },
        })
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        if let Value::Object(m) = &mut self.seeds {
            m.insert(name.into(), value.into());
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(InputFile::hash(role, path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fails if any recorded input no longer matches its checksum.
    pub fn verify_inputs(&self) -> Result<()> {
        for f in &self.inputs {
            let now = InputFile::hash(&f.role, &f.path)?;
            if now.sha256 != f.sha256 {
                bail!("{} ({}) changed since the run: sha256 {} != {}", f.role, f.path.display(), now.sha256, f.sha256);
            }
        }
        Ok(())
    }
}
