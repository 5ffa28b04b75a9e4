//! Run configuration: one JSON document per run, written next to the outputs.

use std::fs;
use std::path::{Path, PathBuf};

use rpnet_core::data::io::Format;
use rpnet_core::data::{ShapeKind, Task, ToyDatasetSpec};
use rpnet_core::models::set_path;
use rpnet_core::nn::LrSchedule;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// File name of the resolved config inside every output directory.
pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Train,
    Eval,
    Gradcheck,
    Bench,
    Ablate,
    Robustness,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Gradcheck => "gradcheck",
            Command::Bench => "bench",
            Command::Ablate => "ablate",
            Command::Robustness => "robustness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: PathBuf,
    /// Cloud label for classification; segmentation labels live in the file.
    #[serde(default)]
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDataset {
    pub task: Task,
    pub num_classes: usize,
    /// Inferred from each file's extension when absent.
    #[serde(default)]
    pub format: Option<Format>,
    pub train: Vec<FileEntry>,
    pub test: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetConfig {
    Toy(ToyDatasetSpec),
    Files(FileDataset),
}

impl DatasetConfig {
    pub fn task(&self) -> Task {
        match self {
            DatasetConfig::Toy(t) => t.task,
            DatasetConfig::Files(f) => f.task,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            DatasetConfig::Toy(t) => t.num_classes(),
            DatasetConfig::Files(f) => f.num_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GradcheckScope {
    Primitives,
    Gra,
    Model,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    pub scope: GradcheckScope,
    pub seeds: Vec<u64>,
    pub step: f64,
    pub tol: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig { scope: GradcheckScope::All, seeds: vec![0, 1, 2, 3, 4], step: 1e-3, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub channels: Vec<usize>,
    pub group: usize,
    /// Number of groups per forward.
    pub centroids: usize,
    pub warmup: usize,
    pub reps: usize,
    /// Classification preset used for the whole-network comparison.
    pub network_preset: String,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { channels: vec![64, 128], group: 32, centroids: 128, warmup: 3, reps: 30, network_preset: "W3".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Geometric,
    Semantic,
    Aggregation,
    CrossChannel,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateConfig {
    pub axis: AblationAxis,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig { axis: AblationAxis::All }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    /// Offset applied to every axis, once with each sign.
    pub translate: f64,
    pub rotations_deg: Vec<f64>,
    pub noise_sigmas: Vec<f64>,
    pub noise_fraction: f64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            translate: 0.2,
            rotations_deg: vec![90.0, 180.0, 270.0],
            noise_sigmas: vec![0.0, 0.01, 0.02, 0.04, 0.08],
            noise_fraction: 1.0,
        }
    }
}

fn default_votes() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub preset: String,
    /// Model-spec overrides as `dotted.path=json`.
    #[serde(default)]
    pub overrides: Vec<String>,
    pub dataset: DatasetConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "yes")]
    pub augment: bool,
    #[serde(default)]
    pub lr: LrSchedule,
    #[serde(default = "default_votes")]
    pub votes: usize,
    /// Weights for `eval` and `robustness`; defaults to the output
    /// directory's `checkpoint.rpnt`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub gradcheck: GradcheckConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub ablate: AblateConfig,
    #[serde(default)]
    pub robustness: RobustnessConfig,
}

pub fn toy_classify() -> ToyDatasetSpec {
    ToyDatasetSpec {
        task: Task::Classify,
        classes: vec![ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Cylinder],
        points_per_cloud: 256,
        clouds_per_class: 100,
        seed: 0,
    }
}

pub fn toy_segment() -> ToyDatasetSpec {
    ToyDatasetSpec {
        task: Task::Segment,
        classes: vec![ShapeKind::Plane, ShapeKind::Sphere],
        points_per_cloud: 2048,
        clouds_per_class: 100,
        seed: 0,
    }
}

impl RunConfig {
    /// Defaults per command: W3 on toy shapes for the classification
    /// commands, D4 on toy scenes for the ablation sweep.
    pub fn default_for(command: Command) -> Self {
        let segment = command == Command::Ablate;
        RunConfig {
            command,
            preset: if segment { "D4" } else { "W3" }.into(),
            overrides: Vec::new(),
            dataset: DatasetConfig::Toy(if segment { toy_segment() } else { toy_classify() }),
            epochs: if segment { 20 } else { 30 },
            batch_size: if segment { 8 } else { 16 },
            seed: 0,
            out_dir: PathBuf::from("runs").join(command.name()),
            augment: true,
            lr: LrSchedule::default(),
            votes: 1,
            checkpoint: None,
            gradcheck: GradcheckConfig::default(),
            bench: BenchConfig::default(),
            ablate: AblateConfig::default(),
            robustness: RobustnessConfig::default(),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("RunConfig serializes")
    }

    /// Write the resolved config into `out_dir`, creating it.
    pub fn save(&self) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))?;
        let path = self.out_dir.join(RUN_CONFIG_FILE);
        fs::write(&path, self.to_json() + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// `run.<path>=value` edits this config; anything else is a model
    /// override and is appended to `overrides`.
    pub fn apply_override(&mut self, kv: &str) -> CliResult<()> {
        let (key, value) = split_override(kv)?;
        match key.strip_prefix("run.") {
            Some(path) => {
                let mut v = serde_json::to_value(&*self).expect("RunConfig serializes");
                set_path(&mut v, path, value)?;
                *self = serde_json::from_value(v).map_err(|e| CliError::Config(format!("override {kv:?}: {e}")))?;
            }
            None => self.overrides.push(kv.to_string()),
        }
        Ok(())
    }

    pub fn model_overrides(&self) -> CliResult<Vec<(String, String)>> {
        self.overrides
            .iter()
            .map(|kv| split_override(kv).map(|(k, v)| (k.to_string(), v.to_string())))
            .collect()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("checkpoint.rpnt"))
    }
}

fn split_override(kv: &str) -> CliResult<(&str, &str)> {
    kv.split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| CliError::Config(format!("override {kv:?} is not key=value")))
}
