//! Experiment configuration: one JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use fedmf::datagen::{PartitionMode, SyntheticSpec};
use fedmf::resampler::{ResampleMode, ResamplePolicy};
use fedmf::solver::{Momentum, SolveMode, SolverConfig, StepSize};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// A scalar or a list in the config file; always used as a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Low-rank signal plus Gaussian noise, split by rows.
    Synthetic {
        #[serde(default = "default_clients")]
        num_clients: usize,
        #[serde(default = "default_rows")]
        rows_per_client: usize,
        #[serde(default = "default_rows")]
        dim: usize,
        #[serde(default = "default_true_rank")]
        true_rank: usize,
        /// Defaults to `true_rank` ones.
        #[serde(default)]
        signal_values: Option<Vec<f64>>,
        #[serde(default)]
        noise_std: f64,
        /// Defaults to the master seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        num_clients: usize,
        #[serde(default = "default_partition")]
        partition: PartitionMode,
        #[serde(default)]
        has_label_column: bool,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        center: bool,
    },
    Libsvm {
        path: PathBuf,
        dim: usize,
        num_clients: usize,
        #[serde(default = "default_partition")]
        partition: PartitionMode,
        #[serde(default)]
        center: bool,
    },
    /// Shards written by `fedmf generate`.
    Manifest { path: PathBuf },
}

fn default_clients() -> usize {
    25
}
fn default_rows() -> usize {
    200
}
fn default_true_rank() -> usize {
    5
}
fn default_partition() -> PartitionMode {
    PartitionMode::RowSplit
}
fn default_delimiter() -> char {
    ','
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            num_clients: default_clients(),
            rows_per_client: default_rows(),
            dim: default_rows(),
            true_rank: default_true_rank(),
            signal_values: None,
            noise_std: 0.0,
            seed: None,
        }
    }
}

impl DatasetConfig {
    /// The synthetic spec, if this is a synthetic dataset.
    pub fn synthetic_spec(&self, master_seed: u64) -> Option<SyntheticSpec> {
        match self {
            DatasetConfig::Synthetic {
                num_clients,
                rows_per_client,
                dim,
                true_rank,
                signal_values,
                noise_std,
                seed,
            } => Some(SyntheticSpec {
                num_clients: *num_clients,
                rows_per_client: *rows_per_client,
                dim: *dim,
                true_rank: *true_rank,
                signal_values: signal_values.clone().unwrap_or_else(|| vec![1.0; *true_rank]),
                noise_std: *noise_std,
                seed: seed.unwrap_or(master_seed),
            }),
            _ => None,
        }
    }

    fn referenced_file(&self) -> Option<&Path> {
        match self {
            DatasetConfig::Synthetic { .. } => None,
            DatasetConfig::Csv { path, .. } | DatasetConfig::Libsvm { path, .. } | DatasetConfig::Manifest { path } => Some(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub iterations: usize,
    pub step_size: StepSize,
    pub ridge: f64,
    pub mode: SolveMode,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            iterations: SolverConfig::default().iterations,
            step_size: StepSize::Auto,
            ridge: 0.0,
            mode: SolveMode::Descent,
        }
    }
}

impl SolverSection {
    pub fn solver_config(&self, momentum: Momentum) -> SolverConfig {
        SolverConfig {
            iterations: self.iterations,
            step_size: self.step_size,
            momentum,
            ridge: self.ridge,
            record_trajectory: true,
        }
    }
}

/// Probabilities used by `fedmf bounds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    /// Failure parameter of the condition-number bound.
    pub p_kappa: f64,
    /// Failure parameter of the error bound.
    pub p_error: f64,
    /// Target success probability for the resampling count.
    pub target_probability: f64,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            p_kappa: 1.0 / 6.0,
            p_error: 0.25,
            target_probability: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub rank: OneOrMany<usize>,
    pub alpha: OneOrMany<usize>,
    pub momentum: OneOrMany<Momentum>,
    pub solver: SolverSection,
    pub resample: ResampleMode,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub bounds: BoundsSection,
    /// Run clients on the rayon pool.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            rank: OneOrMany::One(5),
            alpha: OneOrMany::One(0),
            momentum: OneOrMany::One(Momentum::None),
            solver: SolverSection::default(),
            resample: ResampleMode::FixedM(1),
            trials: 1,
            seed: 0,
            out: PathBuf::from("results"),
            bounds: BoundsSection::default(),
            parallel: false,
        }
    }
}

/// Flag values that replace config fields when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<Vec<usize>>,
    pub rank: Option<Vec<usize>>,
    pub momentum: Option<Vec<Momentum>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads `path` (or starts from defaults), applies `overrides` and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| CliError::ConfigIo { path: p.to_path_buf(), source })?;
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
            None => ExperimentConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(a) = &o.alpha {
            self.alpha = OneOrMany::Many(a.clone());
        }
        if let Some(r) = &o.rank {
            self.rank = OneOrMany::Many(r.clone());
        }
        if let Some(m) = &o.momentum {
            self.momentum = OneOrMany::Many(m.clone());
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |e: fedmf::Error| CliError::config(e.to_string());
        if self.rank.to_vec().is_empty() || self.alpha.to_vec().is_empty() || self.momentum.to_vec().is_empty() {
            return Err(CliError::config("rank, alpha and momentum lists must be non-empty"));
        }
        if self.rank.to_vec().contains(&0) {
            return Err(CliError::config("rank must be at least 1"));
        }
        if self.trials == 0 {
            return Err(CliError::config("trials must be at least 1"));
        }
        self.solver.solver_config(Momentum::None).validate().map_err(bad)?;
        ResamplePolicy { mode: self.resample, base_seed: 0 }.validate().map_err(bad)?;
        for (name, p) in [
            ("bounds.p_kappa", self.bounds.p_kappa),
            ("bounds.p_error", self.bounds.p_error),
            ("bounds.target_probability", self.bounds.target_probability),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return Err(CliError::config(format!("{name} must lie in (0, 1), got {p}")));
            }
        }
        if let Some(spec) = self.dataset.synthetic_spec(self.seed) {
            spec.validate().map_err(bad)?;
        }
        match &self.dataset {
            DatasetConfig::Csv { num_clients, .. } | DatasetConfig::Libsvm { num_clients, .. } if *num_clients == 0 => {
                return Err(CliError::config("num_clients must be at least 1"));
            }
            DatasetConfig::Libsvm { dim: 0, .. } => return Err(CliError::config("libsvm dim must be at least 1")),
            _ => {}
        }
        if let Some(p) = self.dataset.referenced_file() {
            if !p.is_file() {
                return Err(CliError::config(format!("dataset file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Rank checks that need the loaded dataset's shape.
    pub fn check_ranks(&self, rows: usize, dim: usize) -> CliResult<()> {
        let limit = rows.min(dim);
        match self.rank.to_vec().into_iter().find(|&r| r > limit) {
            Some(r) => Err(CliError::config(format!("rank {r} exceeds min(rows, dim) = {limit}"))),
            None => Ok(()),
        }
    }
}

pub fn parse_momentum(s: &str) -> Result<Momentum, String> {
    match s.to_ascii_lowercase().as_str() {
        "none" | "off" | "gd" => Ok(Momentum::None),
        "nesterov" | "on" => Ok(Momentum::Nesterov),
        other => Err(format!("unknown momentum '{other}', expected none or nesterov")),
    }
}

pub fn momentum_name(m: Momentum) -> &'static str {
    match m {
        Momentum::None => "gd",
        Momentum::Nesterov => "nesterov",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars_and_lists_parse() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"rank": 3, "alpha": [0, 1], "momentum": ["none", "nesterov"]}"#).unwrap();
        assert_eq!(cfg.rank.to_vec(), vec![3]);
        assert_eq!(cfg.alpha.to_vec(), vec![0, 1]);
        assert_eq!(cfg.momentum.to_vec(), vec![Momentum::None, Momentum::Nesterov]);
        cfg.validate().unwrap();
    }

    #[test]
    fn resample_modes_parse() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"resample": {"threshold": {"kappa_target": 10.0, "max_draws": 4}}}"#).unwrap();
        assert_eq!(cfg.resample, ResampleMode::Threshold { kappa_target: 10.0, max_draws: 4 });
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"resample": {"target_probability": 0.999}}"#).unwrap();
        assert_eq!(cfg.resample, ResampleMode::TargetProbability(0.999));
    }

    #[test]
    fn unknown_fields_and_bad_values_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"ranks": 3}"#).is_err());
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"alpha": []}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"resample": {"fixed_m": 0}}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"dataset": {"kind": "csv", "path": "/no/such/file", "num_clients": 2}}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_replace_fields() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(&Overrides { alpha: Some(vec![2]), trials: Some(4), seed: Some(9), ..Default::default() });
        assert_eq!(cfg.alpha.to_vec(), vec![2]);
        assert_eq!((cfg.trials, cfg.seed), (4, 9));
        assert_eq!(cfg.dataset.synthetic_spec(cfg.seed).unwrap().seed, 9);
    }

    #[test]
    fn momentum_names() {
        assert_eq!(parse_momentum("Nesterov").unwrap(), Momentum::Nesterov);
        assert_eq!(parse_momentum("none").unwrap(), Momentum::None);
        assert!(parse_momentum("heavy-ball").is_err());
    }
}
