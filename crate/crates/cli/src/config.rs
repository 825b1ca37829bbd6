//! Experiment configuration: a TOML document with inline defaults,
//! overridable by command-line flags.

use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};

use pq_core::bootstrap::BootstrapConfig;
use pq_core::classifier::TrainConfig;
use pq_core::interval::Method;
use pq_core::sampler::SamplerConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; everything else derives from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub methods: Vec<String>,
    pub test_sizes: Vec<usize>,
    /// Test sets per prevalence level (the full protocol uses 10).
    pub replicates: usize,
    /// One value runs each method once; several values sweep the
    /// bin-sensitive methods and label each series with the bin count.
    #[serde(deserialize_with = "one_or_many")]
    pub n_bins: Vec<usize>,
    /// Nominal interval probability content.
    pub mass: f64,
    pub workers: usize,
    pub format: OutputFormat,
    pub dataset: DatasetConfig,
    pub sampler: SamplerSettings,
    pub bootstrap: BootstrapSettings,
    pub classifier: ClassifierSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("results"),
            methods: vec![
                "pq".into(),
                "bayesian-cc".into(),
                "pcc".into(),
                "pacc".into(),
                "hdy".into(),
                "emq".into(),
            ],
            test_sizes: vec![100, 500, 1000, 2000],
            replicates: 10,
            n_bins: vec![4],
            mass: 0.5,
            workers: 1,
            format: OutputFormat::Csv,
            dataset: DatasetConfig::default(),
            sampler: SamplerSettings::default(),
            bootstrap: BootstrapSettings::default(),
            classifier: ClassifierSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Two unit-variance Gaussians; a logistic classifier is trained on a
    /// fresh draw and scores a fresh validation draw.
    Gaussian {
        #[serde(default = "defaults::mean_pos")]
        mean_pos: f64,
        #[serde(default = "defaults::train_size")]
        train_size: usize,
        #[serde(default = "defaults::train_prevalence")]
        train_prevalence: f64,
        #[serde(default = "defaults::validation_size")]
        validation_size: usize,
        #[serde(default = "defaults::validation_prevalence")]
        validation_prevalence: f64,
    },
    /// Externally produced classifier scores: a labeled validation file and
    /// a labeled pool file that test cases are drawn from.
    Scores {
        validation_path: PathBuf,
        pool_path: PathBuf,
        #[serde(default)]
        header: bool,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Gaussian {
            mean_pos: defaults::mean_pos(),
            train_size: defaults::train_size(),
            train_prevalence: defaults::train_prevalence(),
            validation_size: defaults::validation_size(),
            validation_prevalence: defaults::validation_prevalence(),
        }
    }
}

mod defaults {
    pub fn mean_pos() -> f64 {
        1.0
    }
    pub fn train_size() -> usize {
        10_000
    }
    pub fn train_prevalence() -> f64 {
        0.9
    }
    pub fn validation_size() -> usize {
        1000
    }
    pub fn validation_prevalence() -> f64 {
        0.5
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSettings {
    pub warmup: usize,
    pub keep: usize,
    pub target_accept: f64,
    pub initial_step: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let base = SamplerConfig::default();
        Self {
            warmup: base.warmup,
            keep: base.keep,
            target_accept: base.target_accept,
            initial_step: base.initial_step,
        }
    }
}

impl SamplerSettings {
    pub fn to_config(self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            warmup: self.warmup,
            keep: self.keep,
            seed,
            target_accept: self.target_accept,
            initial_step: self.initial_step,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSettings {
    pub iterations: usize,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self { iterations: 1000 }
    }
}

impl BootstrapSettings {
    pub fn to_config(self, mass: f64, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            iterations: self.iterations,
            mass,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSettings {
    pub max_iter: usize,
    pub tolerance: f64,
    pub l2: f64,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            max_iter: base.max_iter,
            tolerance: base.tolerance,
            l2: base.l2,
        }
    }
}

impl ClassifierSettings {
    pub fn to_config(self) -> TrainConfig {
        TrainConfig {
            max_iter: self.max_iter,
            tolerance: self.tolerance,
            l2: self.l2,
        }
    }
}

/// Command-line flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub methods: Vec<String>,
    pub bins: Option<usize>,
    pub mass: Option<f64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub format: Option<OutputFormat>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&std::path::Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => ExperimentConfig::default(),
        };
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if !overrides.methods.is_empty() {
            self.methods = overrides.methods.clone();
        }
        if let Some(bins) = overrides.bins {
            self.n_bins = vec![bins];
        }
        if let Some(mass) = overrides.mass {
            self.mass = mass;
        }
        if let Some(out) = &overrides.out {
            self.out_dir = out.clone();
        }
        if let Some(workers) = overrides.workers {
            self.workers = workers;
        }
        if let Some(format) = overrides.format {
            self.format = format;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.methods.is_empty() {
            return Err(CliError::Config("methods must be nonempty".into()));
        }
        self.parsed_methods()?;
        if self.test_sizes.is_empty() || self.test_sizes.iter().any(|&s| s < 1) {
            return Err(CliError::Config("test_sizes must all be >= 1".into()));
        }
        if self.replicates < 1 {
            return Err(CliError::Config("replicates must be >= 1".into()));
        }
        if self.n_bins.is_empty() || self.n_bins.iter().any(|&b| b < 1) {
            return Err(CliError::Config("n_bins must all be >= 1".into()));
        }
        if !(self.mass > 0.0 && self.mass < 1.0) {
            return Err(CliError::Config(format!(
                "mass {} outside (0, 1)",
                self.mass
            )));
        }
        if self.workers < 1 {
            return Err(CliError::Config("workers must be >= 1".into()));
        }
        if let DatasetConfig::Gaussian {
            train_size,
            train_prevalence,
            validation_size,
            validation_prevalence,
            ..
        } = &self.dataset
        {
            if *train_size < 2 || *validation_size < 2 {
                return Err(CliError::Config("dataset sizes must be >= 2".into()));
            }
            for p in [train_prevalence, validation_prevalence] {
                if !(0.0..=1.0).contains(p) {
                    return Err(CliError::Config(format!("prevalence {p} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>, CliError> {
        self.methods
            .iter()
            .map(|m| {
                m.parse::<Method>()
                    .map_err(|e| CliError::Config(e.to_string()))
            })
            .collect()
    }
}

fn one_or_many<'de, D>(deserializer: D) -> Result<Vec<usize>, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(deserializer)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(vs) => vs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let config = ExperimentConfig::default();
        config.validate().unwrap();
        assert_eq!(config.parsed_methods().unwrap().len(), 6);
    }

    #[test]
    fn toml_round_trip_with_scalar_bins() {
        let text = r#"
            seed = 7
            n_bins = 8
            test_sizes = [100]

            [dataset]
            kind = "gaussian"
            mean_pos = 2.5
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.n_bins, vec![8]);
        match config.dataset {
            DatasetConfig::Gaussian {
                mean_pos,
                train_size,
                ..
            } => {
                assert_eq!(mean_pos, 2.5);
                assert_eq!(train_size, 10_000);
            }
            _ => panic!("expected gaussian dataset"),
        }
    }

    #[test]
    fn toml_accepts_bin_list() {
        let text = "n_bins = [4, 8, 16]\n";
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(config.n_bins, vec![4, 8, 16]);
    }

    #[test]
    fn overrides_take_precedence() {
        let mut config = ExperimentConfig::default();
        let overrides = Overrides {
            seed: Some(99),
            methods: vec!["pcc".into()],
            bins: Some(16),
            mass: Some(0.9),
            out: Some(PathBuf::from("elsewhere")),
            workers: Some(4),
            format: Some(OutputFormat::Json),
        };
        config.apply(&overrides);
        assert_eq!(config.seed, 99);
        assert_eq!(config.methods, vec!["pcc".to_string()]);
        assert_eq!(config.n_bins, vec![16]);
        assert_eq!(config.mass, 0.9);
        assert_eq!(config.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(config.workers, 4);
        assert_eq!(config.format, OutputFormat::Json);
    }

    #[test]
    fn unknown_method_rejected() {
        let config = ExperimentConfig {
            methods: vec!["nope".into()],
            ..ExperimentConfig::default()
        };
        assert!(matches!(config.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "not_a_key = 1\n";
        assert!(toml::from_str::<ExperimentConfig>(text).is_err());
    }
}
