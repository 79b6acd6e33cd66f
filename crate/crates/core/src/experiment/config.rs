use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stream::StreamSpec;
use crate::baselines::{StrategyConfig, StrategyKind};
use crate::envs::ExpertConfig;
use crate::error::{Error, Result};
use crate::gcrl::{desk_her_temperature, desk_waystep, HbcShapes, HerConfig, TrainConfig};
use crate::subspace::{HispoConfig, SubspaceConfig, Variant};

/// A baseline strategy or one of the subspace methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Baseline(StrategyKind),
    Subspace(Variant),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline(k) => k.name(),
            Method::Subspace(v) => v.name(),
        }
    }

    pub fn all() -> Vec<Method> {
        Variant::ALL
            .into_iter()
            .map(Method::Subspace)
            .chain(StrategyKind::ALL.into_iter().map(Method::Baseline))
            .collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(v) = s.parse::<Variant>() {
            return Ok(Method::Subspace(v));
        }
        s.parse::<StrategyKind>().map(Method::Baseline).map_err(|_| Error::Unknown {
            kind: "method",
            name: s.to_string(),
        })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

/// Backbone training knobs shared by every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    /// Gradient steps per head and training phase. `None` falls back to
    /// `epochs` passes over the data.
    pub steps: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub her_fraction: f64,
    /// Defaults to the desk way-step of the first task's layout.
    pub waystep: Option<usize>,
    /// Defaults to the desk temperature of the first task's layout.
    pub her_temperature: Option<f64>,
    pub high_width: usize,
    pub low_width: usize,
    pub dropout: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            steps: Some(3000),
            epochs: 20,
            batch_size: 256,
            lr: 3e-3,
            her_fraction: HerConfig::default().fraction,
            waystep: None,
            her_temperature: None,
            high_width: 32,
            low_width: 64,
            dropout: 0.0,
        }
    }
}

impl TrainSettings {
    pub fn shapes(&self) -> HbcShapes {
        HbcShapes::with_widths(self.high_width, self.low_width, self.dropout)
    }

    /// Concrete training config for a stream whose first task uses `layout`.
    pub fn train_config(&self, layout: &str) -> TrainConfig {
        TrainConfig {
            epochs: if self.steps.is_some() { 1 } else { self.epochs },
            batch_size: self.batch_size,
            lr: self.lr,
            her: HerConfig {
                temperature: self.her_temperature.unwrap_or_else(|| desk_her_temperature(layout)),
                fraction: self.her_fraction,
            },
            waystep: self.waystep.unwrap_or_else(|| desk_waystep(layout)),
            steps_per_epoch: self.steps,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.high_width == 0 || self.low_width == 0 {
            return Err(Error::Config("batch size and widths must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.her_fraction) {
            return Err(Error::Config(format!("HER fraction {} outside [0, 1]", self.her_fraction)));
        }
        if self.waystep == Some(0) {
            return Err(Error::Config("way-step must be at least 1".into()));
        }
        if self.her_temperature.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("HER temperature must be positive".into()));
        }
        self.shapes().high.validate()
    }
}

/// Everything needed to reproduce one method over one stream and several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub stream: StreamSpec,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub subspace: SubspaceConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    /// λ values tried for L2/EWC; the best mean PER wins. Empty means
    /// `strategy.lambda` alone.
    #[serde(default)]
    pub lambda_sweep: Vec<f64>,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Also train a from-scratch policy per task so FWT can be reported.
    #[serde(default)]
    pub fwt_reference: bool,
    #[serde(default)]
    pub expert: ExpertConfig,
    /// Worker threads; `Some(1)` gives single-threaded evaluation.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Output root; excluded from the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_eval_episodes() -> usize {
    100
}

/// λ grid for the regularized baselines.
pub const LAMBDA_GRID: [f64; 5] = [1e-2, 1e-1, 1.0, 1e1, 1e2];

impl RunConfig {
    pub fn new(method: Method, stream: StreamSpec, seeds: Vec<u64>) -> Self {
        RunConfig {
            method,
            stream,
            seeds,
            train: TrainSettings::default(),
            subspace: SubspaceConfig::default(),
            strategy: StrategyConfig::default(),
            lambda_sweep: Vec::new(),
            eval_episodes: default_eval_episodes(),
            fwt_reference: false,
            expert: ExpertConfig::default(),
            threads: None,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        if self.lambda_sweep.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config("sweep values must be finite and nonnegative".into()));
        }
        self.stream.validate()?;
        self.train.validate()?;
        self.subspace.validate()?;
        self.strategy.validate()
    }

    /// The layout id that fixes the way-step and HER temperature.
    pub fn first_layout(&self) -> &str {
        self.stream.tasks.first().map_or("U", |t| t.layout.as_str())
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.train_config(self.first_layout())
    }

    pub fn hispo_config(&self, variant: Variant) -> HispoConfig {
        HispoConfig {
            variant,
            subspace: self.subspace.clone(),
            shapes: self.train.shapes(),
            train: self.train_config(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form, without `out_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// `<method>_<stream>` directory name.
    pub fn run_name(&self) -> String {
        format!("{}_{}", self.method, self.stream.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RunConfig {
        RunConfig::new(
            Method::Subspace(Variant::HiSPO),
            StreamSpec::canned("kinematic", 10).unwrap(),
            vec![0, 1],
        )
    }

    #[test]
    fn method_names() {
        for m in Method::all() {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(Method::all().len(), 11);
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn json_round_trip_and_minimal_form() {
        let c = cfg();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        let minimal = r#"{"method":"FT1","stream":{"name":"s","tasks":[{"layout":"U","transform":"N","source":{"generate":{"episodes":3,"seed":0}}}]},"seeds":[4]}"#;
        let m: RunConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(m.method, Method::Baseline(StrategyKind::FT1));
        assert_eq!(m.eval_episodes, 100);
        m.validate().unwrap();
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = cfg();
        let mut b = a.clone();
        b.out_dir = Some("/tmp/x".into());
        assert_eq!(a.hash(), b.hash());
        b.seeds.push(9);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn validation() {
        let mut c = cfg();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.train.lr = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.lambda_sweep = vec![f64::NAN];
        assert!(c.validate().is_err());
    }

    #[test]
    fn waystep_follows_first_layout() {
        let c = cfg();
        assert_eq!(c.train_config().waystep, desk_waystep("U"));
        assert_eq!(c.train_config().total_steps(1_000_000), 3000);
    }
}
