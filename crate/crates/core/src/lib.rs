//! Deterministic simulator for federated learning over a mixture of highly
//! heterogeneous classification tasks.
//!
//! The crate implements a dynamic sequential federation (loss-slope
//! curriculum ordering, convergence-driven local and server training,
//! sequential model relay, alpha-mixed accumulation) alongside FedAvg,
//! FedProx, FedSeq, and centralized baselines, with full communication- and
//! computation-cost accounting. Everything is seeded: identical inputs
//! reproduce identical runs bit for bit.

pub mod curriculum;
pub mod data;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod model;
pub mod persistence;
mod rng;
pub mod trainer;

pub use curriculum::{loss_slope, order_hospitals, ComplexityScore, LossTrace, OrderDirection};
pub use data::{
    build_mixture, build_unified, generate_task, load_csv, partition, stratified_split, Dataset,
    HospitalData, PartitionOutcome, PartitionPlan, Scenario, TaskGenerator, TaskSpec,
    UnifiedLabelMap,
};
pub use error::{Error, Result};
pub use federation::{
    mix, pool_hospitals, run, run_fedavg, run_fedprox, run_fedseq, run_nofed, run_unifed,
    session_seed, Algorithm, FederationConfig, NoopObserver, RoundObserver, RoundRecord, RunOutput,
};
pub use metrics::{
    bundle, bundle_with, confusion, Averaging, ConfusionMatrix, CostLedger, MetricBundle,
    MetricsScope,
};
pub use model::{
    forward_loss, gradient, init_weights, predict, sgd_step, Batch, ModelKind, ModelSpec,
    WeightVector,
};
pub use persistence::{
    load_checkpoint, read_manifest, read_rounds, save_checkpoint, write_manifest, RoundLogWriter,
    RunManifest,
};
pub use trainer::{
    evaluate_val_loss, train_dynamic, train_dynamic_with_eval, train_fixed, ConvergenceDetector,
    DynamicConfig, StopReason, TrainingOutcome,
};
