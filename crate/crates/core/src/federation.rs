//! Protocol orchestration: the dynamic sequential federation and the
//! FedAvg / FedProx / FedSeq / NoFed baselines.
//!
//! One run consumes partitioned hospital data plus an optional server set and
//! produces final weights, per-round records, and a cost ledger. Every
//! random choice derives from the run seed through [`session_seed`], so runs
//! are bitwise reproducible.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::curriculum::{loss_slope, order_hospitals_with, ComplexityScore, OrderDirection};
use crate::data::{Dataset, HospitalData};
use crate::error::{Error, Result};
use crate::metrics::{bundle_with, confusion, Averaging, CostLedger, MetricBundle, MetricsScope};
use crate::model::{self, init_weights, ModelSpec, WeightVector};
use crate::rng::{mix_seed, stream};
use crate::trainer::{
    evaluate_val_loss, train_dynamic, train_fixed_with_prox, ConvergenceDetector, DynamicConfig,
    StopReason,
};

/// Participant index used to derive the server's session seeds.
pub const SERVER_PARTICIPANT: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum Algorithm {
    UniFed,
    FedAvg,
    FedProx { mu: f64 },
    FedSeq,
    NoFed,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::UniFed => "unifed",
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx { .. } => "fedprox",
            Algorithm::FedSeq => "fedseq",
            Algorithm::NoFed => "nofed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub algorithm: Algorithm,
    /// Global communication rounds (upper bound when early stopping fires).
    pub num_rounds: usize,
    /// Fixed local epochs for the baselines and NoFed.
    pub local_epochs: usize,
    /// Mixing weight between the relayed model and the server model.
    pub alpha: f64,
    /// Local epochs of the first (parallel, scoring-only) round.
    pub e_f: usize,
    pub dynamic: DynamicConfig,
    pub seed: u64,
    pub order: OrderDirection,
    /// Relay hospital-to-hospital instead of bouncing through the server.
    pub direct_relay: bool,
    /// Start round 1 from the first-ordered hospital's round-0 weights
    /// instead of the initial broadcast.
    pub keep_round0: bool,
    /// Apply the convergence criterion to per-round server validation loss.
    pub global_early_stop: bool,
    /// Train NoFed with the dynamic criterion instead of the fixed schedule.
    pub nofed_dynamic: bool,
    pub averaging: Averaging,
    pub metrics_scope: MetricsScope,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            algorithm: Algorithm::UniFed,
            num_rounds: 200,
            local_epochs: 5,
            alpha: 0.7,
            e_f: 1,
            dynamic: DynamicConfig::default(),
            seed: 1,
            order: OrderDirection::Asc,
            direct_relay: false,
            keep_round0: false,
            global_early_stop: true,
            nofed_dynamic: false,
            averaging: Averaging::Macro,
            metrics_scope: MetricsScope::Pooled,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(
                "alpha",
                format!("must be in [0, 1], got {}", self.alpha),
            ));
        }
        if let Algorithm::FedProx { mu } = self.algorithm {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(Error::config(
                    "mu",
                    format!("must be finite and >= 0, got {mu}"),
                ));
            }
        }
        if self.num_rounds < 1 {
            return Err(Error::config("num_rounds", "must be >= 1"));
        }
        if self.local_epochs < 1 {
            return Err(Error::config("local_epochs", "must be >= 1"));
        }
        if self.e_f < 1 {
            return Err(Error::config("e_f", "must be >= 1"));
        }
        self.dynamic.validate()
    }
}

/// One federation participant: local splits plus transient protocol state.
pub struct Hospital {
    pub data: HospitalData,
    pub current_weights: Option<WeightVector>,
    pub last_score: Option<ComplexityScore>,
}

impl Hospital {
    pub fn new(data: HospitalData) -> Self {
        Hospital {
            data,
            current_weights: None,
            last_score: None,
        }
    }

    pub fn id(&self) -> u32 {
        self.data.hospital_id
    }
}

/// Server-side state: the kept model copy and the small mixed dataset split
/// 90/10 into train/val for dynamic server training.
pub struct ServerState {
    pub weights_copy: Option<WeightVector>,
    pub train: Dataset,
    pub val: Dataset,
}

impl ServerState {
    /// Split a server set 90/10 (stratified) for dynamic training. An empty
    /// set yields an inert server, valid only when `alpha == 1`.
    ///
    /// Very small server sets can starve the 10% validation share entirely;
    /// in that case one sample of every multi-sample class is held out
    /// instead, so the convergence criterion always has something to read.
    pub fn from_server_set(server_set: &Dataset, seed: u64) -> Result<Self> {
        if server_set.is_empty() {
            return Ok(ServerState {
                weights_copy: None,
                train: server_set.clone(),
                val: server_set.clone(),
            });
        }
        let split = crate::data::stratified_split(
            server_set,
            [0.9, 0.1, 0.0],
            mix_seed(seed, stream::SERVER_SPLIT, 0),
        )?;
        let (train, val) = if split.val.is_empty() {
            let pool = split.train;
            let mut class_count = std::collections::BTreeMap::new();
            for &l in pool.labels() {
                *class_count.entry(l).or_insert(0usize) += 1;
            }
            let mut last_of_class = std::collections::BTreeMap::new();
            for (i, &l) in pool.labels().iter().enumerate() {
                last_of_class.insert(l, i);
            }
            let mut train_idx = Vec::new();
            let mut val_idx = Vec::new();
            for i in 0..pool.len() {
                let l = pool.labels()[i];
                if class_count[&l] >= 2 && last_of_class[&l] == i {
                    val_idx.push(i);
                } else {
                    train_idx.push(i);
                }
            }
            if val_idx.is_empty() {
                // all classes are singletons: evaluate on the train pool
                (pool.clone(), pool)
            } else {
                (pool.select(&train_idx), pool.select(&val_idx))
            }
        } else {
            (split.train, split.val)
        };
        Ok(ServerState {
            weights_copy: None,
            train,
            val,
        })
    }

    pub fn has_data(&self) -> bool {
        !self.train.is_empty() && !self.val.is_empty()
    }
}

/// Per-hospital slice of a round record, in relay order.
#[derive(Clone, Debug, PartialEq)]
pub struct HospitalRoundEntry {
    pub hospital_id: u32,
    pub rank: usize,
    pub slope: f64,
    pub epochs_trained: usize,
    pub stop_reason: StopReason,
    pub val_loss: f64,
    pub incoming_hash: String,
    pub outgoing_hash: String,
}

/// Ledger of one global round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round_index: usize,
    pub ordering: Vec<u32>,
    pub per_hospital: Vec<HospitalRoundEntry>,
    pub transfers: u64,
    pub server_epochs: usize,
    pub theta_k_hash: String,
    pub theta_s_hash: String,
    pub global_val_loss: Option<f64>,
    pub metrics: MetricBundle,
}

#[derive(Debug)]
pub struct RunOutput {
    pub final_weights: WeightVector,
    pub rounds: Vec<RoundRecord>,
    pub ledger: CostLedger,
}

/// Observer invoked after every completed round with the record and the
/// round's resulting global weights.
pub trait RoundObserver {
    fn on_round(&mut self, record: &RoundRecord, weights: &WeightVector) -> Result<()>;
}

/// Ignores all rounds.
pub struct NoopObserver;

impl RoundObserver for NoopObserver {
    fn on_round(&mut self, _record: &RoundRecord, _weights: &WeightVector) -> Result<()> {
        Ok(())
    }
}

impl<F> RoundObserver for F
where
    F: FnMut(&RoundRecord, &WeightVector) -> Result<()>,
{
    fn on_round(&mut self, record: &RoundRecord, weights: &WeightVector) -> Result<()> {
        self(record, weights)
    }
}

/// Deterministic seed of one training session.
pub fn session_seed(base: u64, round: u64, participant: u64) -> u64 {
    mix_seed(
        mix_seed(base, stream::SESSION, round),
        stream::SESSION,
        participant,
    )
}

/// Elementwise convex combination `alpha * theta_k + (1 - alpha) * theta_s`.
/// The endpoints return exact copies.
pub fn mix(theta_k: &WeightVector, theta_s: &WeightVector, alpha: f64) -> Result<WeightVector> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(
            "alpha",
            format!("must be in [0, 1], got {alpha}"),
        ));
    }
    if theta_k.spec() != theta_s.spec() {
        return Err(Error::DimensionMismatch {
            context: "mix",
            expected: format!("{:?}", theta_k.spec()),
            actual: format!("{:?}", theta_s.spec()),
        });
    }
    if alpha == 1.0 {
        return Ok(theta_k.clone());
    }
    if alpha == 0.0 {
        return Ok(theta_s.clone());
    }
    let values = theta_k
        .values()
        .iter()
        .zip(theta_s.values())
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect();
    WeightVector::from_values(theta_k.spec(), values)
}

/// Union of all hospital splits, for the centralized baseline.
pub fn pool_hospitals(hospitals: &[HospitalData]) -> Result<HospitalData> {
    Ok(HospitalData {
        hospital_id: 0,
        task_id: 0,
        train: Dataset::concat(hospitals.iter().map(|h| &h.train))?,
        val: Dataset::concat(hospitals.iter().map(|h| &h.val))?,
        test: Dataset::concat(hospitals.iter().map(|h| &h.test))?,
    })
}

fn validate_inputs(spec: &ModelSpec, hospitals: &[HospitalData], require_val: bool) -> Result<()> {
    spec.validate()?;
    if hospitals.is_empty() {
        return Err(Error::Empty {
            what: "hospital list",
        });
    }
    let mut seen = std::collections::HashSet::new();
    for h in hospitals {
        if !seen.insert(h.hospital_id) {
            return Err(Error::DuplicateHospital(h.hospital_id));
        }
        if h.train.is_empty() {
            return Err(Error::Empty {
                what: "hospital training set",
            });
        }
        if require_val && h.val.is_empty() {
            return Err(Error::Empty {
                what: "hospital validation set",
            });
        }
        for ds in [&h.train, &h.val, &h.test] {
            if ds.is_empty() {
                continue;
            }
            if ds.feature_dim() != spec.input_dim {
                return Err(Error::DimensionMismatch {
                    context: "hospital dataset",
                    expected: format!("feature_dim {}", spec.input_dim),
                    actual: format!("feature_dim {}", ds.feature_dim()),
                });
            }
            if let Some(&bad) = ds
                .labels()
                .iter()
                .find(|&&l| l as usize >= spec.num_classes)
            {
                return Err(Error::DimensionMismatch {
                    context: "hospital labels",
                    expected: format!("label < {}", spec.num_classes),
                    actual: bad.to_string(),
                });
            }
        }
    }
    Ok(())
}

fn bundle_on(weights: &WeightVector, test: &Dataset, averaging: Averaging) -> Result<MetricBundle> {
    let preds = model::predict(weights, test.features())?;
    let cm = confusion(&preds, test.labels(), weights.spec().num_classes)?;
    bundle_with(&cm, averaging)
}

/// Round-metric evaluator: pooled union of the hospital test sets, or
/// per-hospital bundles averaged.
struct MetricsEval {
    averaging: Averaging,
    scope: MetricsScope,
    pooled: Dataset,
    per_hospital: Vec<Dataset>,
}

impl MetricsEval {
    fn new(cfg: &FederationConfig, hospitals: &[HospitalData]) -> Result<Self> {
        Ok(MetricsEval {
            averaging: cfg.averaging,
            scope: cfg.metrics_scope,
            pooled: Dataset::concat(hospitals.iter().map(|h| &h.test))?,
            per_hospital: match cfg.metrics_scope {
                MetricsScope::Pooled => Vec::new(),
                MetricsScope::PerHospital => hospitals.iter().map(|h| h.test.clone()).collect(),
            },
        })
    }

    fn evaluate(&self, weights: &WeightVector) -> Result<MetricBundle> {
        match self.scope {
            MetricsScope::Pooled => {
                if self.pooled.is_empty() {
                    return Ok(MetricBundle::default());
                }
                bundle_on(weights, &self.pooled, self.averaging)
            }
            MetricsScope::PerHospital => {
                let mut sum = MetricBundle::default();
                let mut n = 0usize;
                for test in self.per_hospital.iter().filter(|t| !t.is_empty()) {
                    let b = bundle_on(weights, test, self.averaging)?;
                    sum.accuracy += b.accuracy;
                    sum.f1_macro += b.f1_macro;
                    sum.sensitivity_macro += b.sensitivity_macro;
                    sum.specificity_macro += b.specificity_macro;
                    n += 1;
                }
                if n == 0 {
                    return Ok(MetricBundle::default());
                }
                let k = n as f64;
                Ok(MetricBundle {
                    accuracy: sum.accuracy / k,
                    f1_macro: sum.f1_macro / k,
                    sensitivity_macro: sum.sensitivity_macro / k,
                    specificity_macro: sum.specificity_macro / k,
                })
            }
        }
    }
}

fn session_val_loss(w: &WeightVector, h: &HospitalData) -> Result<f64> {
    // fall back to the training set when a hand-built hospital has no val split
    if h.val.is_empty() {
        evaluate_val_loss(w, &h.train)
    } else {
        evaluate_val_loss(w, &h.val)
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Dispatch on the configured algorithm.
pub fn run(
    cfg: &FederationConfig,
    spec: ModelSpec,
    hospitals: &[HospitalData],
    server_set: &Dataset,
    observer: &mut dyn RoundObserver,
) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.algorithm {
        Algorithm::UniFed => run_unifed(cfg, spec, hospitals, server_set, observer),
        Algorithm::FedAvg => run_fedavg(cfg, spec, hospitals, observer),
        Algorithm::FedProx { mu } => run_parallel(cfg, spec, hospitals, Some(mu), observer),
        Algorithm::FedSeq => run_fedseq(cfg, spec, hospitals, observer),
        Algorithm::NoFed => {
            let pooled = pool_hospitals(hospitals)?;
            run_nofed(cfg, spec, &pooled, observer)
        }
    }
}

/// The dynamic sequential federation: loss-slope curriculum ordering,
/// convergence-driven local and server sessions, sequential relay, and
/// alpha-mixed accumulation, with optional round-level early stopping.
pub fn run_unifed(
    cfg: &FederationConfig,
    spec: ModelSpec,
    hospital_data: &[HospitalData],
    server_set: &Dataset,
    observer: &mut dyn RoundObserver,
) -> Result<RunOutput> {
    cfg.validate()?;
    validate_inputs(&spec, hospital_data, true)?;
    let server = ServerState::from_server_set(server_set, cfg.seed)?;
    if cfg.alpha < 1.0 && !server.has_data() {
        return Err(Error::config(
            "alpha",
            "alpha < 1 requires a non-empty server set",
        ));
    }

    let payload = spec.parameter_count() as u64;
    let metrics_eval = MetricsEval::new(cfg, hospital_data)?;
    let mut hospitals: Vec<Hospital> = hospital_data.iter().cloned().map(Hospital::new).collect();
    let mut ledger = CostLedger::new();
    let mut rounds = Vec::new();

    // First training round: broadcast, short parallel-eligible sessions,
    // slopes only. Results are merged in hospital-id order.
    let theta0 = init_weights(spec, cfg.seed);
    let theta0_hash = theta0.content_hash();
    let mut round0_weights: Vec<(u32, WeightVector)> = Vec::new();
    let mut entries = Vec::with_capacity(hospitals.len());
    for (rank, h) in hospitals.iter_mut().enumerate() {
        let id = h.id();
        ledger.record_transfer(payload); // broadcast to hospital
        let started = Instant::now();
        let out = crate::trainer::train_fixed(
            &theta0,
            &h.data.train,
            cfg.e_f,
            &cfg.dynamic,
            session_seed(cfg.seed, 0, id as u64),
        )?;
        ledger.record_compute(&format!("hospital_{id}"), elapsed_ms(started))?;
        ledger.record_epochs(id, out.epochs_trained as u64);
        ledger.record_transfer(payload); // model returned for scoring
        let slope = loss_slope(&out.trace)?;
        h.last_score = Some(ComplexityScore {
            hospital_id: id,
            slope: slope.value,
            trace_len: out.trace.len(),
        });
        entries.push(HospitalRoundEntry {
            hospital_id: id,
            rank,
            slope: slope.value,
            epochs_trained: out.epochs_trained,
            stop_reason: out.stop_reason,
            val_loss: session_val_loss(&out.best_weights, &h.data)?,
            incoming_hash: theta0_hash.clone(),
            outgoing_hash: out.best_weights.content_hash(),
        });
        if cfg.keep_round0 {
            round0_weights.push((id, out.best_weights));
        }
    }
    let record = RoundRecord {
        round_index: 0,
        ordering: hospitals.iter().map(|h| h.id()).collect(),
        per_hospital: entries,
        transfers: 2 * hospitals.len() as u64,
        server_epochs: 0,
        theta_k_hash: theta0_hash.clone(),
        theta_s_hash: theta0_hash,
        global_val_loss: None,
        metrics: metrics_eval.evaluate(&theta0)?,
    };
    observer.on_round(&record, &theta0)?;
    rounds.push(record);

    let mut current = theta0;
    let mut global_detector = ConvergenceDetector::new(cfg.dynamic.z, cfg.dynamic.plateau_eps);

    for t in 1..=cfg.num_rounds {
        let scores: Vec<ComplexityScore> = hospitals
            .iter()
            .map(|h| h.last_score.expect("scored in phase 1"))
            .collect();
        let order = order_hospitals_with(&scores, cfg.order)?;
        if t == 1 && cfg.keep_round0 {
            if let Some((_, w)) = round0_weights.iter().find(|(id, _)| *id == order[0]) {
                current = w.clone();
            }
        }

        let kept_copy = current.clone();
        let mut relay = current;
        let mut transfers = 0u64;
        let mut entries = Vec::with_capacity(order.len());
        for (rank, &hid) in order.iter().enumerate() {
            let h = hospitals
                .iter_mut()
                .find(|h| h.id() == hid)
                .expect("ordering is a permutation of hospital ids");
            // server -> hospital (or hospital -> hospital under direct relay)
            ledger.record_transfer(payload);
            transfers += 1;
            let incoming_hash = relay.content_hash();
            let started = Instant::now();
            let out = train_dynamic(
                &relay,
                &h.data.train,
                &h.data.val,
                &cfg.dynamic,
                cfg.dynamic.strip_local,
                session_seed(cfg.seed, t as u64, hid as u64),
            )?;
            ledger.record_compute(&format!("hospital_{hid}"), elapsed_ms(started))?;
            ledger.record_epochs(hid, out.epochs_trained as u64);
            let is_last = rank + 1 == order.len();
            if !cfg.direct_relay || is_last {
                // hospital -> server leg (the relay always ends at the server)
                ledger.record_transfer(payload);
                transfers += 1;
            }
            let slope = loss_slope(&out.trace)?;
            h.last_score = Some(ComplexityScore {
                hospital_id: hid,
                slope: slope.value,
                trace_len: out.trace.len(),
            });
            entries.push(HospitalRoundEntry {
                hospital_id: hid,
                rank,
                slope: slope.value,
                epochs_trained: out.epochs_trained,
                stop_reason: out.stop_reason,
                val_loss: out
                    .val_curve
                    .iter()
                    .map(|&(_, v)| v)
                    .fold(f64::INFINITY, f64::min),
                incoming_hash,
                outgoing_hash: out.best_weights.content_hash(),
            });
            h.current_weights = Some(out.best_weights.clone());
            relay = out.best_weights;
        }
        let theta_k = relay;

        let (theta_s, server_epochs) = if server.has_data() {
            let started = Instant::now();
            let out = train_dynamic(
                &kept_copy,
                &server.train,
                &server.val,
                &cfg.dynamic,
                cfg.dynamic.strip_global,
                session_seed(cfg.seed, t as u64, SERVER_PARTICIPANT),
            )?;
            ledger.record_compute("server", elapsed_ms(started))?;
            ledger.record_server_epochs(out.epochs_trained as u64);
            (out.best_weights, out.epochs_trained)
        } else {
            (kept_copy, 0)
        };

        let next = mix(&theta_k, &theta_s, cfg.alpha)?;
        let global_val_loss = if server.has_data() {
            Some(evaluate_val_loss(&next, &server.val)?)
        } else {
            None
        };
        let record = RoundRecord {
            round_index: t,
            ordering: order,
            per_hospital: entries,
            transfers,
            server_epochs,
            theta_k_hash: theta_k.content_hash(),
            theta_s_hash: theta_s.content_hash(),
            global_val_loss,
            metrics: metrics_eval.evaluate(&next)?,
        };
        observer.on_round(&record, &next)?;
        rounds.push(record);
        current = next;

        if cfg.global_early_stop {
            if let Some(v) = global_val_loss {
                if global_detector.observe(v).is_some() {
                    break;
                }
            }
        }
    }

    Ok(RunOutput {
        final_weights: current,
        rounds,
        ledger,
    })
}

/// FedAvg: broadcast, fixed-epoch local training, sample-size-weighted
/// aggregation.
pub fn run_fedavg(
    cfg: &FederationConfig,
    spec: ModelSpec,
    hospitals: &[HospitalData],
    observer: &mut dyn RoundObserver,
) -> Result<RunOutput> {
    run_parallel(cfg, spec, hospitals, None, observer)
}

/// FedProx: FedAvg plus the proximal term `mu * (w - w_global)` in every
/// local gradient.
pub fn run_fedprox(
    cfg: &FederationConfig,
    spec: ModelSpec,
    hospitals: &[HospitalData],
    mu: f64,
    observer: &mut dyn RoundObserver,
) -> Result<RunOutput> {
    run_parallel(cfg, spec, hospitals, Some(mu), observer)
}

fn run_parallel(
    cfg: &FederationConfig,
    spec: ModelSpec,
    hospitals: &[HospitalData],
    prox_mu: Option<f64>,
    observer: &mut dyn RoundObserver,
) -> Result<RunOutput> {
    cfg.validate()?;
    validate_inputs(&spec, hospitals, false)?;
    let payload = spec.parameter_count() as u64;
    let metrics_eval = MetricsEval::new(cfg, hospitals)?;
    let total_n: usize = hospitals.iter().map(|h| h.train.len()).sum();
    let mut ledger = CostLedger::new();
    let mut rounds = Vec::new();
    let mut theta = init_weights(spec, cfg.seed);

    for t in 1..=cfg.num_rounds {
        let theta_hash = theta.content_hash();
        let mut acc = vec![0.0; theta.len()];
        let mut entries = Vec::with_capacity(hospitals.len());
        for (rank, h) in hospitals.iter().enumerate() {
            let id = h.hospital_id;
            ledger.record_transfer(payload); // broadcast
            let started = Instant::now();
            let out = train_fixed_with_prox(
                &theta,
                &h.train,
                cfg.local_epochs,
                &cfg.dynamic,
                session_seed(cfg.seed, t as u64, id as u64),
                prox_mu.map(|mu| (&theta, mu)),
            )?;
            ledger.record_compute(&format!("hospital_{id}"), elapsed_ms(started))?;
            ledger.record_epochs(id, out.epochs_trained as u64);
            ledger.record_transfer(payload); // upload
            let weight = h.train.len() as f64 / total_n as f64;
            for (a, v) in acc.iter_mut().zip(out.best_weights.values()) {
                *a += weight * v;
            }
            entries.push(HospitalRoundEntry {
                hospital_id: id,
                rank,
                slope: 0.0,
                epochs_trained: out.epochs_trained,
                stop_reason: out.stop_reason,
                val_loss: session_val_loss(&out.best_weights, h)?,
                incoming_hash: theta_hash.clone(),
                outgoing_hash: out.best_weights.content_hash(),
            });
        }
        theta = WeightVector::from_values(spec, acc)?;
        let agg_hash = theta.content_hash();
        let record = RoundRecord {
            round_index: t,
            ordering: hospitals.iter().map(|h| h.hospital_id).collect(),
            per_hospital: entries,
            transfers: 2 * hospitals.len() as u64,
            server_epochs: 0,
            theta_k_hash: agg_hash.clone(),
            theta_s_hash: agg_hash,
            global_val_loss: None,
            metrics: metrics_eval.evaluate(&theta)?,
        };
        observer.on_round(&record, &theta)?;
        rounds.push(record);
    }

    Ok(RunOutput {
        final_weights: theta,
        rounds,
        ledger,
    })
}

/// FedSeq: fixed-index-order sequential relay with fixed local epochs; no
/// server training, no mixing, no curriculum.
pub fn run_fedseq(
    cfg: &FederationConfig,
    spec: ModelSpec,
    hospitals: &[HospitalData],
    observer: &mut dyn RoundObserver,
) -> Result<RunOutput> {
    cfg.validate()?;
    validate_inputs(&spec, hospitals, false)?;
    let payload = spec.parameter_count() as u64;
    let metrics_eval = MetricsEval::new(cfg, hospitals)?;
    let mut ledger = CostLedger::new();
    let mut rounds = Vec::new();
    let mut theta = init_weights(spec, cfg.seed);

    for t in 1..=cfg.num_rounds {
        let mut relay = theta;
        let mut transfers = 0u64;
        let mut entries = Vec::with_capacity(hospitals.len());
        for (rank, h) in hospitals.iter().enumerate() {
            let id = h.hospital_id;
            ledger.record_transfer(payload);
            transfers += 1;
            let incoming_hash = relay.content_hash();
            let started = Instant::now();
            let out = train_fixed_with_prox(
                &relay,
                &h.train,
                cfg.local_epochs,
                &cfg.dynamic,
                session_seed(cfg.seed, t as u64, id as u64),
                None,
            )?;
            ledger.record_compute(&format!("hospital_{id}"), elapsed_ms(started))?;
            ledger.record_epochs(id, out.epochs_trained as u64);
            let is_last = rank + 1 == hospitals.len();
            if !cfg.direct_relay || is_last {
                ledger.record_transfer(payload);
                transfers += 1;
            }
            entries.push(HospitalRoundEntry {
                hospital_id: id,
                rank,
                slope: 0.0,
                epochs_trained: out.epochs_trained,
                stop_reason: out.stop_reason,
                val_loss: session_val_loss(&out.best_weights, h)?,
                incoming_hash,
                outgoing_hash: out.best_weights.content_hash(),
            });
            relay = out.best_weights;
        }
        theta = relay;
        let hash = theta.content_hash();
        let record = RoundRecord {
            round_index: t,
            ordering: hospitals.iter().map(|h| h.hospital_id).collect(),
            per_hospital: entries,
            transfers,
            server_epochs: 0,
            theta_k_hash: hash.clone(),
            theta_s_hash: hash,
            global_val_loss: None,
            metrics: metrics_eval.evaluate(&theta)?,
        };
        observer.on_round(&record, &theta)?;
        rounds.push(record);
    }

    Ok(RunOutput {
        final_weights: theta,
        rounds,
        ledger,
    })
}

/// Centralized upper-bound baseline: one model on the pooled union of all
/// hospital training sets.
pub fn run_nofed(
    cfg: &FederationConfig,
    spec: ModelSpec,
    pooled: &HospitalData,
    observer: &mut dyn RoundObserver,
) -> Result<RunOutput> {
    cfg.validate()?;
    validate_inputs(&spec, std::slice::from_ref(pooled), cfg.nofed_dynamic)?;
    let metrics_eval = MetricsEval::new(cfg, std::slice::from_ref(pooled))?;
    let mut ledger = CostLedger::new();
    let mut rounds = Vec::new();
    let mut theta = init_weights(spec, cfg.seed);

    for t in 1..=cfg.num_rounds {
        let started = Instant::now();
        let seed = session_seed(cfg.seed, t as u64, pooled.hospital_id as u64);
        let out = if cfg.nofed_dynamic {
            train_dynamic(
                &theta,
                &pooled.train,
                &pooled.val,
                &cfg.dynamic,
                cfg.dynamic.strip_global,
                seed,
            )?
        } else {
            train_fixed_with_prox(
                &theta,
                &pooled.train,
                cfg.local_epochs,
                &cfg.dynamic,
                seed,
                None,
            )?
        };
        ledger.record_compute("pool", elapsed_ms(started))?;
        ledger.record_epochs(pooled.hospital_id, out.epochs_trained as u64);
        let incoming_hash = theta.content_hash();
        theta = out.best_weights;
        let hash = theta.content_hash();
        let record = RoundRecord {
            round_index: t,
            ordering: vec![pooled.hospital_id],
            per_hospital: vec![HospitalRoundEntry {
                hospital_id: pooled.hospital_id,
                rank: 0,
                slope: 0.0,
                epochs_trained: out.epochs_trained,
                stop_reason: out.stop_reason,
                val_loss: session_val_loss(&theta, pooled)?,
                incoming_hash,
                outgoing_hash: hash.clone(),
            }],
            transfers: 0,
            server_epochs: 0,
            theta_k_hash: hash.clone(),
            theta_s_hash: hash,
            global_val_loss: None,
            metrics: metrics_eval.evaluate(&theta)?,
        };
        observer.on_round(&record, &theta)?;
        rounds.push(record);
    }

    Ok(RunOutput {
        final_weights: theta,
        rounds,
        ledger,
    })
}
