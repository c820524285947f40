//! TOML run configuration. Every section and key is optional except where
//! a command needs it; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use funcdist::distance::Convention;
use funcdist::econometrics::{default_specs, DealParams, SyntheticDistanceParams, TableSpec};
use funcdist::neural::{Activation, Architecture, TrainConfig};
use funcdist::panel::{DatasetOptions, OutputKind, Schema, DEFAULT_MIN_FIRMS, MIN_TOTAL_ASSETS};
use funcdist::seed::derive_seed;
use funcdist::simulate::FirmPanelParams;
use funcdist::workflow::WorkflowOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub panel: PanelSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub distance: DistanceSection,
    pub stylized: StylizedSection,
    pub synthetic: SyntheticSection,
    pub regress: RegressSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            panel: Default::default(),
            network: Default::default(),
            training: Default::default(),
            distance: Default::default(),
            stylized: Default::default(),
            synthetic: Default::default(),
            regress: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanelSection {
    /// Firm-year CSV. When absent, a synthetic panel is generated and
    /// written to `firms.csv` in the output directory.
    pub path: Option<PathBuf>,
    /// Field → CSV column overrides.
    pub schema: BTreeMap<String, String>,
    pub min_total_assets: f64,
    pub output_kind: OutputKind,
    pub min_firms: usize,
    pub winsorize: Option<f64>,
}

impl Default for PanelSection {
    fn default() -> Self {
        PanelSection {
            path: None,
            schema: BTreeMap::new(),
            min_total_assets: MIN_TOTAL_ASSETS,
            output_kind: OutputKind::LogQ,
            min_firms: DEFAULT_MIN_FIRMS,
            winsorize: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let a = Architecture::default();
        NetworkSection {
            layer_sizes: a.layer_sizes,
            hidden_activation: a.hidden_activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub early_stop_patience: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            early_stop_patience: t.early_stop_patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceSection {
    pub holdout_fraction: f64,
    pub convention: Convention,
}

impl Default for DistanceSection {
    fn default() -> Self {
        DistanceSection {
            holdout_fraction: 0.0,
            convention: Convention::Rmse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StylizedSection {
    pub sigma: f64,
    pub n: usize,
    pub tolerance: f64,
}

impl Default for StylizedSection {
    fn default() -> Self {
        StylizedSection {
            sigma: 0.1,
            n: 200_000,
            tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DealDistances {
    /// Planted synthetic distance series.
    #[default]
    Synthetic,
    /// `distances.csv` produced by the `distances` command.
    Computed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub firms: FirmPanelParams,
    pub distances: SyntheticDistanceParams,
    pub deals: DealParams,
    pub deal_distances: DealDistances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressSection {
    /// Pair-year panel; defaults to `pairs.csv` in the output directory.
    pub pairs: Option<PathBuf>,
    /// Deal panel; defaults to `deals.csv` in the output directory.
    pub deals: Option<PathBuf>,
    pub specs: Vec<TableSpec>,
}

impl Default for RegressSection {
    fn default() -> Self {
        RegressSection {
            pairs: None,
            deals: None,
            specs: default_specs(),
        }
    }
}

/// Child seed for one subsystem.
pub fn subsystem_seed(seed: u64, tag: &str) -> u64 {
    derive_seed(seed, tag)
}

impl RunConfig {
    /// Parses a config file and resolves relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.output_dir);
        if let Some(p) = cfg.panel.path.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.regress.pairs.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.regress.deals.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture()?;
        self.train_config(0)
            .validate()
            .map_err(|e| anyhow::anyhow!("[training] {e}"))?;
        Schema::with_overrides(&self.panel.schema).context("[panel.schema]")?;
        if let Some(p) = self.panel.winsorize {
            if !(0.0..0.5).contains(&p) {
                bail!("[panel] winsorize must lie in [0, 0.5), got {p}");
            }
        }
        if !(0.0..1.0).contains(&self.distance.holdout_fraction) {
            bail!("[distance] holdout_fraction must lie in [0, 1)");
        }
        if !(self.stylized.sigma >= 0.0 && self.stylized.sigma.is_finite()) {
            bail!("[stylized] sigma must be finite and non-negative");
        }
        if self.stylized.n == 0 {
            bail!("[stylized] n must be positive");
        }
        if !(self.stylized.tolerance >= 0.0) {
            bail!("[stylized] tolerance must be non-negative");
        }
        self.synthetic.firms.validate().map_err(|e| anyhow::anyhow!("[synthetic.firms] {e}"))?;
        self.synthetic.distances.validate().context("[synthetic.distances]")?;
        self.synthetic.deals.validate().context("[synthetic.deals]")?;
        Ok(())
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Ok(Architecture::new(self.network.layer_sizes.clone())
            .map_err(|e| anyhow::anyhow!("[network] {e}"))?
            .with_activation(self.network.hidden_activation))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            seed,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            early_stop_patience: t.early_stop_patience,
            freeze_prefix: false,
        }
    }

    pub fn workflow(&self) -> Result<WorkflowOptions> {
        Ok(WorkflowOptions {
            architecture: self.architecture()?,
            train: self.train_config(subsystem_seed(self.seed, "training")),
            output_kind: self.panel.output_kind,
            dataset: DatasetOptions {
                min_firms: self.panel.min_firms,
                winsorize: self.panel.winsorize,
            },
            holdout_fraction: self.distance.holdout_fraction,
            convention: self.distance.convention,
        })
    }

    pub fn schema(&self) -> Result<Schema> {
        Ok(Schema::with_overrides(&self.panel.schema)?)
    }

    pub fn pairs_path(&self) -> PathBuf {
        self.regress
            .pairs
            .clone()
            .unwrap_or_else(|| self.output_dir.join("pairs.csv"))
    }

    pub fn deals_path(&self) -> PathBuf {
        self.regress
            .deals
            .clone()
            .unwrap_or_else(|| self.output_dir.join("deals.csv"))
    }

    /// Full configuration with every default filled in.
    pub fn resolved_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.resolved_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[training]\nepoch = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[synthetic.deals]\ngama_count = -3.0").is_err());
        assert!(toml::from_str::<RunConfig>("[training]\nepochs = 3").is_ok());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.distance.holdout_fraction = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.network.layer_sizes = vec![7, 4, 1];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.panel.schema.insert("nonsense".into(), "x".into());
        assert!(cfg.validate().is_err());
    }
}
