//! Run configuration: JSON config files plus flag overrides.
//!
//! Defaults mirror the reference federation: batch 64, lr 0.001, alpha 0.7,
//! 5 local epochs and 200 rounds for the fixed-schedule baselines, 3 tasks of
//! 4/11/8 classes across 8 hospitals each (24 total), 5% server fraction,
//! 70/10/20 stratified splits, and 7/10-epoch evaluation strips.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use unifed_core::{
    Algorithm, Averaging, DynamicConfig, Error, FederationConfig, MetricsScope, ModelKind,
    ModelSpec, OrderDirection, PartitionPlan, Result, Scenario, TaskGenerator, TaskSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmName {
    Unifed,
    Fedavg,
    Fedprox,
    Fedseq,
    Nofed,
}

impl AlgorithmName {
    pub const ALL: [AlgorithmName; 5] = [
        AlgorithmName::Nofed,
        AlgorithmName::Fedavg,
        AlgorithmName::Fedprox,
        AlgorithmName::Fedseq,
        AlgorithmName::Unifed,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmName::Unifed => "unifed",
            AlgorithmName::Fedavg => "fedavg",
            AlgorithmName::Fedprox => "fedprox",
            AlgorithmName::Fedseq => "fedseq",
            AlgorithmName::Nofed => "nofed",
        }
    }
}

impl FromStr for AlgorithmName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unifed" => Ok(AlgorithmName::Unifed),
            "fedavg" => Ok(AlgorithmName::Fedavg),
            "fedprox" => Ok(AlgorithmName::Fedprox),
            "fedseq" => Ok(AlgorithmName::Fedseq),
            "nofed" => Ok(AlgorithmName::Nofed),
            other => Err(Error::config(
                "algorithm",
                format!(
                    "unknown algorithm `{other}` (expected unifed|fedavg|fedprox|fedseq|nofed)"
                ),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Strong,
    Moderate,
}

impl ScenarioName {
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioName::Strong => "strong",
            ScenarioName::Moderate => "moderate",
        }
    }
}

impl FromStr for ScenarioName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "strong" => Ok(ScenarioName::Strong),
            "moderate" => Ok(ScenarioName::Moderate),
            other => Err(Error::config(
                "scenario",
                format!("unknown scenario `{other}` (expected strong|moderate)"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Softmax,
            hidden_dim: 0,
        }
    }
}

/// One synthetic (or CSV-backed) task of the mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub csv: Option<PathBuf>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            num_classes: 4,
            feature_dim: 16,
            samples_per_class: 150,
            center_scale: 3.0,
            noise_sigma: 1.0,
            csv: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub algorithm: AlgorithmName,
    pub seed: u64,
    pub alpha: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub fedprox_mu: f64,
    pub e_f: usize,
    pub model: ModelConfig,
    pub tasks: Vec<TaskConfig>,
    pub scenario: ScenarioName,
    pub dirichlet_beta: f64,
    pub hospitals_per_task: usize,
    pub server_fraction: f64,
    pub split_fractions: [f64; 3],
    pub dynamic: DynamicConfig,
    pub order: OrderDirection,
    pub direct_relay: bool,
    pub keep_round0: bool,
    pub avg: Averaging,
    pub metrics_scope: MetricsScope,
    pub global_early_stop: bool,
    pub nofed_dynamic: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: AlgorithmName::Unifed,
            seed: 1,
            alpha: 0.7,
            rounds: 200,
            local_epochs: 5,
            fedprox_mu: 0.01,
            e_f: 1,
            model: ModelConfig::default(),
            tasks: vec![
                TaskConfig {
                    num_classes: 4,
                    ..TaskConfig::default()
                },
                TaskConfig {
                    num_classes: 11,
                    ..TaskConfig::default()
                },
                TaskConfig {
                    num_classes: 8,
                    ..TaskConfig::default()
                },
            ],
            scenario: ScenarioName::Strong,
            dirichlet_beta: 0.3,
            hospitals_per_task: 8,
            server_fraction: 0.05,
            split_fractions: [0.70, 0.10, 0.20],
            dynamic: DynamicConfig::default(),
            order: OrderDirection::Asc,
            direct_relay: false,
            keep_round0: false,
            avg: Averaging::Macro,
            metrics_scope: MetricsScope::Pooled,
            global_early_stop: true,
            nofed_dynamic: false,
            out_dir: None,
        }
    }
}

impl RunConfig {
    /// Desk-scale profile used by `bench` and `alpha-sweep` when no config
    /// file is given: 30 rounds, per-epoch evaluation strips, and a 4-epoch
    /// session cap sized for the small synthetic tasks. The cap bounds the
    /// dynamic federation's hospital epochs at 24*4*30 + 24 regardless of
    /// when the round-level stop fires, and a full five-method comparison
    /// finishes in seconds. Task noise levels differ so the mixture spans
    /// easy and hard tasks.
    pub fn desk_bench() -> Self {
        let noise = [2.6, 1.8, 1.0];
        let mut cfg = RunConfig {
            rounds: 30,
            dirichlet_beta: 0.1,
            dynamic: DynamicConfig {
                strip_local: 1,
                strip_global: 1,
                z: 3,
                plateau_eps: 0.02,
                max_epochs: 4,
                lr: 0.01,
                batch_size: 64,
            },
            ..RunConfig::default()
        };
        for (task, sigma) in cfg.tasks.iter_mut().zip(noise) {
            task.noise_sigma = sigma;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(
                "alpha",
                format!("must be in [0, 1], got {}", self.alpha),
            ));
        }
        if self.rounds < 1 {
            return Err(Error::config("rounds", "must be >= 1"));
        }
        if self.local_epochs < 1 {
            return Err(Error::config("local_epochs", "must be >= 1"));
        }
        if self.e_f < 1 {
            return Err(Error::config("e_f", "must be >= 1"));
        }
        if !(self.fedprox_mu >= 0.0 && self.fedprox_mu.is_finite()) {
            return Err(Error::config("fedprox_mu", "must be finite and >= 0"));
        }
        if self.tasks.is_empty() {
            return Err(Error::config("tasks", "at least one task is required"));
        }
        for t in self.task_specs() {
            t.validate()?;
        }
        self.model_spec()?.validate()?;
        self.partition_plan().validate()?;
        self.dynamic.validate()?;
        Ok(())
    }

    pub fn task_specs(&self) -> Vec<TaskSpec> {
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, t)| TaskSpec {
                task_id: i as u32,
                local_num_classes: t.num_classes,
                feature_dim: t.feature_dim,
                generator: match &t.csv {
                    Some(path) => TaskGenerator::CsvFile { path: path.clone() },
                    None => TaskGenerator::GaussianBlobs {
                        center_scale: t.center_scale,
                        noise_sigma: t.noise_sigma,
                    },
                },
                samples_per_class: t.samples_per_class,
            })
            .collect()
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let input_dim = self
            .tasks
            .iter()
            .map(|t| t.feature_dim)
            .max()
            .ok_or_else(|| Error::config("tasks", "at least one task is required"))?;
        let num_classes: usize = self.tasks.iter().map(|t| t.num_classes).sum();
        let spec = ModelSpec {
            kind: self.model.kind,
            input_dim,
            hidden_dim: self.model.hidden_dim,
            num_classes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn partition_plan(&self) -> PartitionPlan {
        PartitionPlan {
            scenario: match self.scenario {
                ScenarioName::Strong => Scenario::StronglyNonIid {
                    dirichlet_beta: self.dirichlet_beta,
                },
                ScenarioName::Moderate => Scenario::ModeratelyNonIid,
            },
            hospitals_per_task: self.hospitals_per_task,
            server_fraction: self.server_fraction,
            split_fractions: self.split_fractions,
        }
    }

    pub fn federation_config(&self, algorithm: AlgorithmName) -> FederationConfig {
        FederationConfig {
            algorithm: match algorithm {
                AlgorithmName::Unifed => Algorithm::UniFed,
                AlgorithmName::Fedavg => Algorithm::FedAvg,
                AlgorithmName::Fedprox => Algorithm::FedProx {
                    mu: self.fedprox_mu,
                },
                AlgorithmName::Fedseq => Algorithm::FedSeq,
                AlgorithmName::Nofed => Algorithm::NoFed,
            },
            num_rounds: self.rounds,
            local_epochs: self.local_epochs,
            alpha: self.alpha,
            e_f: self.e_f,
            dynamic: self.dynamic,
            seed: self.seed,
            order: self.order,
            direct_relay: self.direct_relay,
            keep_round0: self.keep_round0,
            global_early_stop: self.global_early_stop,
            nofed_dynamic: self.nofed_dynamic,
            averaging: self.avg,
            metrics_scope: self.metrics_scope,
        }
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Load `path` over `base`, or return `base` when no file is given. Unknown
/// fields are rejected with the offending field named.
pub fn load_config(path: Option<&Path>, base: RunConfig) -> Result<RunConfig> {
    match path {
        None => Ok(base),
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&raw)
                .map_err(|e| Error::config("config", format!("{}: {e}", p.display())))
        }
    }
}

/// Flag-level overrides applied on top of the loaded config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub algorithm: Option<AlgorithmName>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub rounds: Option<usize>,
    pub local_epochs: Option<usize>,
    pub scenario: Option<ScenarioName>,
    pub order: Option<OrderDirection>,
    pub direct_relay: bool,
    pub avg: Option<Averaging>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(a) = self.algorithm {
            cfg.algorithm = a;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        if let Some(e) = self.local_epochs {
            cfg.local_epochs = e;
        }
        if let Some(s) = self.scenario {
            cfg.scenario = s;
        }
        if let Some(o) = self.order {
            cfg.order = o;
        }
        if self.direct_relay {
            cfg.direct_relay = true;
        }
        if let Some(a) = self.avg {
            cfg.avg = a;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        cfg
    }
}

pub fn parse_order(s: &str) -> Result<OrderDirection> {
    match s.to_ascii_lowercase().as_str() {
        "asc" => Ok(OrderDirection::Asc),
        "desc" => Ok(OrderDirection::Desc),
        other => Err(Error::config(
            "order",
            format!("unknown order `{other}` (expected asc|desc)"),
        )),
    }
}

pub fn parse_avg(s: &str) -> Result<Averaging> {
    match s.to_ascii_lowercase().as_str() {
        "macro" => Ok(Averaging::Macro),
        "micro" => Ok(Averaging::Micro),
        other => Err(Error::config(
            "avg",
            format!("unknown averaging `{other}` (expected macro|micro)"),
        )),
    }
}
