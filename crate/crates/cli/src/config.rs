//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use impact_core::event::Trim;
use impact_core::tim::{NoiseAttach, NoiseModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::pipeline::Stage;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "IMPACT_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instrument: String,
    #[serde(default = "defaults::tick_size")]
    pub tick_size: f64,
    /// Largest lag of the response curves.
    pub ell_max: usize,
    /// Kernel length; defaults to `ell_max`.
    #[serde(default)]
    pub kernel_len: Option<usize>,
    /// Single-event volume exponent. Event files carry no volumes, so only 0 is accepted.
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub d0: f64,
    #[serde(default)]
    pub d_hf: f64,
    #[serde(default)]
    pub noise_attach: NoiseAttach,
    #[serde(default)]
    pub seed: u64,
    /// Solve over the event types that occur instead of failing on absent ones.
    #[serde(default)]
    pub allow_absent_types: bool,
    /// Stages executed by `run` when `--stages` is not given.
    #[serde(default)]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub trim: Trim,
    #[serde(default)]
    pub scale: ScaleBounds,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub generate: Option<GenerateConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleBounds {
    pub lower: f64,
    pub upper: f64,
    pub tolerance: f64,
}

impl Default for ScaleBounds {
    fn default() -> Self {
        ScaleBounds {
            lower: 0.1,
            upper: 10.0,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Tim,
    #[default]
    Hdim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub model: Model,
    /// Lower bound on replayed gaps; omit for no bound.
    #[serde(default = "defaults::gap_floor")]
    pub gap_floor: Option<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            model: Model::default(),
            gap_floor: defaults::gap_floor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Largest accepted R/S partial-sum and C-structure violation, in price units.
    pub identity: f64,
    pub max_condition: f64,
    pub ridge: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-9,
            max_condition: 1e12,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Raw book updates, input of `classify`.
    #[serde(default)]
    pub updates: Option<PathBuf>,
    /// Event stream; defaults to `events.csv` in the output directory.
    #[serde(default)]
    pub events: Option<PathBuf>,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            updates: None,
            events: None,
            out_dir: defaults::out_dir(),
        }
    }
}

/// Synthetic stream for `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub n_events: usize,
    #[serde(default = "defaults::one")]
    pub n_sessions: usize,
    #[serde(default = "defaults::initial_mid")]
    pub initial_mid: f64,
    /// i.i.d. type probabilities in the order MO0, MOP, CA0, CAP, LO0, LOP.
    #[serde(default)]
    pub type_probabilities: Option<[f64; 6]>,
    /// Markov transition matrix; takes precedence over `type_probabilities`.
    #[serde(default)]
    pub type_transitions: Option<[[f64; 6]; 6]>,
    /// Long-memory sign exponent; i.i.d. signs when absent.
    #[serde(default)]
    pub sign_gamma: Option<f64>,
    /// Gaps of MOP, CAP, LOP (the base gaps when `kappa` is set).
    pub gaps: [f64; 3],
    /// Kernel CSV driving history-dependent gaps.
    #[serde(default)]
    pub kappa: Option<PathBuf>,
    #[serde(default)]
    pub gap_noise_sd: f64,
    #[serde(default = "defaults::generator_floor")]
    pub gap_floor: f64,
}

mod defaults {
    use std::path::PathBuf;

    pub fn tick_size() -> f64 {
        1.0
    }
    pub fn gap_floor() -> Option<f64> {
        Some(0.0)
    }
    pub fn out_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn one() -> usize {
        1
    }
    pub fn initial_mid() -> f64 {
        1000.0
    }
    pub fn generator_floor() -> f64 {
        1e-3
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing config")?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.paths.out_dir);
        cfg.paths.updates.as_mut().map(rebase);
        cfg.paths.events.as_mut().map(rebase);
        if let Some(g) = cfg.generate.as_mut() {
            g.kappa.as_mut().map(rebase);
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.ell_max == 0 {
            bail!("ell_max must be at least 1");
        }
        if self.kernel_len() == 0 || self.kernel_len() > self.ell_max {
            bail!("kernel_len must lie in 1..={}", self.ell_max);
        }
        if self.theta != 0.0 {
            bail!("theta = {} needs event volumes, which event files do not carry; use theta = 0", self.theta);
        }
        if !(self.tick_size > 0.0) {
            bail!("tick_size must be positive");
        }
        if !(self.tolerances.identity >= 0.0 && self.tolerances.max_condition > 1.0 && self.tolerances.ridge >= 0.0) {
            bail!("tolerances must be non-negative and max_condition above 1");
        }
        if !(self.scale.lower > 0.0 && self.scale.upper > self.scale.lower && self.scale.tolerance > 0.0) {
            bail!("scale bounds must satisfy 0 < lower < upper with a positive tolerance");
        }
        self.noise()?;
        Ok(())
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_len.unwrap_or(self.ell_max)
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        let mut n = NoiseModel::new(self.d0, self.d_hf)?;
        n.attach = self.noise_attach;
        Ok(n)
    }

    pub fn events_path(&self) -> PathBuf {
        self.paths.events.clone().unwrap_or_else(|| self.paths.out_dir.join(crate::pipeline::EVENTS))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
