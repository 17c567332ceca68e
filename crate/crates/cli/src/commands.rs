//! Experiment execution: single runs, the five-method benchmark suite, and
//! the mixing-weight sweep.

use std::path::{Path, PathBuf};

use serde::Serialize;

use unifed_core::persistence::hash_json;
use unifed_core::{
    build_mixture, federation, partition, Dataset, Error, HospitalData, MetricBundle, ModelSpec,
    Result, RoundLogWriter, RunManifest, UnifiedLabelMap,
};

use crate::config::{AlgorithmName, RunConfig, ScenarioName};
use crate::report::render_table;

/// Prepared inputs shared by every method of a comparison: one partition, one
/// model spec, one hash identifying the exact data assignment.
pub struct Experiment {
    pub spec: ModelSpec,
    pub hospitals: Vec<HospitalData>,
    pub server_set: Dataset,
    pub unified: UnifiedLabelMap,
    pub partition_hash: String,
    pub warnings: Vec<String>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Experiment> {
    let tasks = cfg.task_specs();
    let (pooled, unified) = build_mixture(&tasks, cfg.seed)?;
    let plan = cfg.partition_plan();
    let out = partition(&pooled, &plan, cfg.seed)?;
    let spec = cfg.model_spec()?;

    let mut hashes = vec![out.server_set.content_hash()];
    for h in &out.hospitals {
        hashes.push(h.train.content_hash());
        hashes.push(h.val.content_hash());
        hashes.push(h.test.content_hash());
    }
    let partition_hash = hash_json(&serde_json::json!(hashes));

    Ok(Experiment {
        spec,
        hospitals: out.hospitals,
        server_set: out.server_set,
        unified,
        partition_hash,
        warnings: out.warnings,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub scenario: String,
    pub seed: u64,
    pub rounds_completed: usize,
    #[serde(flatten)]
    pub metrics: MetricBundle,
    pub epoch_units: u64,
    pub server_epoch_units: u64,
    pub transfers: u64,
    pub payload_floats: u64,
    pub compute_ms: f64,
    pub partition_hash: String,
    pub run_dir: PathBuf,
}

impl RunSummary {
    pub fn one_line(&self) -> String {
        format!(
            "{} seed={} rounds={} acc={:.4} f1={:.4} sens={:.4} spec={:.4} epoch_units={} server_epochs={} transfers={} out={}",
            self.algorithm,
            self.seed,
            self.rounds_completed,
            self.metrics.accuracy,
            self.metrics.f1_macro,
            self.metrics.sensitivity_macro,
            self.metrics.specificity_macro,
            self.epoch_units,
            self.server_epoch_units,
            self.transfers,
            self.run_dir.display(),
        )
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Execute one prepared run into `run_dir`: manifest, streamed `rounds.csv`,
/// per-round checkpoints, `final.bin`.
pub fn execute(
    cfg: &RunConfig,
    algorithm: AlgorithmName,
    exp: &Experiment,
    run_dir: &Path,
) -> Result<RunSummary> {
    std::fs::create_dir_all(run_dir.join("checkpoints")).map_err(|e| Error::io(run_dir, e))?;
    let mut effective = cfg.clone();
    effective.algorithm = algorithm;
    let mut manifest = RunManifest::new(
        effective.seed,
        effective.snapshot(),
        exp.partition_hash.clone(),
    );
    manifest.started_at = now_rfc3339();
    let manifest_path = run_dir.join("manifest.json");
    unifed_core::write_manifest(&manifest, &manifest_path)?;

    let mut log = RoundLogWriter::create(&run_dir.join("rounds.csv"))?;
    let checkpoints = run_dir.join("checkpoints");
    let mut observer =
        |record: &unifed_core::RoundRecord, weights: &unifed_core::WeightVector| -> Result<()> {
            log.append_round(record)?;
            unifed_core::save_checkpoint(
                weights,
                &checkpoints.join(format!("round_{}.bin", record.round_index)),
            )
        };

    let fed_cfg = effective.federation_config(algorithm);
    let output = federation::run(
        &fed_cfg,
        exp.spec,
        &exp.hospitals,
        &exp.server_set,
        &mut observer,
    )?;

    unifed_core::save_checkpoint(&output.final_weights, &run_dir.join("final.bin"))?;
    manifest.finished_at = now_rfc3339();
    unifed_core::write_manifest(&manifest, &manifest_path)?;

    let last = output.rounds.last().expect("at least one round");
    Ok(RunSummary {
        algorithm: algorithm.label().to_string(),
        scenario: effective.scenario.label().to_string(),
        seed: effective.seed,
        rounds_completed: last.round_index,
        metrics: last.metrics,
        epoch_units: output.ledger.epoch_units,
        server_epoch_units: output.ledger.server_epoch_units,
        transfers: output.ledger.transfers,
        payload_floats: output.ledger.payload_floats,
        compute_ms: output.ledger.total_compute_ms(),
        partition_hash: exp.partition_hash.clone(),
        run_dir: run_dir.to_path_buf(),
    })
}

/// Validate, prepare, and execute the configured algorithm once.
pub fn cmd_run(cfg: &RunConfig, out_root: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let exp = prepare(cfg)?;
    for w in &exp.warnings {
        eprintln!("warning: {w}");
    }
    let run_dir = out_root.join(format!("{}_seed{}", cfg.algorithm.label(), cfg.seed));
    let summary = execute(cfg, cfg.algorithm, &exp, &run_dir)?;
    println!("{}", summary.one_line());
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub scenario: String,
    pub method: String,
    pub repetition: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub sensitivity_macro: f64,
    pub specificity_macro: f64,
    pub epoch_units: u64,
    pub server_epoch_units: u64,
    pub transfers: u64,
    pub compute_ms: f64,
    pub rounds: usize,
    pub partition_hash: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchSummaryRow {
    pub scenario: String,
    pub method: String,
    pub repetitions: usize,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub sensitivity_macro: f64,
    pub specificity_macro: f64,
    pub epoch_units: f64,
    pub compute_ms: f64,
}

pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summary: Vec<BenchSummaryRow>,
    pub table: String,
}

/// Run every method on identical partitions and seeds, repeated
/// `repetitions` times with seeds seed, seed+1, ..., and emit per-run and
/// averaged comparison tables (CSV plus aligned text).
pub fn cmd_bench(
    cfg: &RunConfig,
    scenarios: &[ScenarioName],
    repetitions: usize,
    out_root: &Path,
) -> Result<BenchReport> {
    cfg.validate()?;
    if repetitions < 1 {
        return Err(Error::config("repetitions", "must be >= 1"));
    }
    let mut rows: Vec<BenchRow> = Vec::new();
    for &scenario in scenarios {
        for rep in 0..repetitions {
            let mut rep_cfg = cfg.clone();
            rep_cfg.scenario = scenario;
            rep_cfg.seed = cfg.seed + rep as u64;
            let exp = prepare(&rep_cfg)?;
            for method in AlgorithmName::ALL {
                let run_dir = out_root
                    .join(format!("bench_{}", scenario.label()))
                    .join(format!("rep{}_{}", rep, method.label()));
                let summary = execute(&rep_cfg, method, &exp, &run_dir)?;
                println!("{}", summary.one_line());
                rows.push(BenchRow {
                    scenario: scenario.label().to_string(),
                    method: method.label().to_string(),
                    repetition: rep,
                    seed: rep_cfg.seed,
                    accuracy: summary.metrics.accuracy,
                    f1_macro: summary.metrics.f1_macro,
                    sensitivity_macro: summary.metrics.sensitivity_macro,
                    specificity_macro: summary.metrics.specificity_macro,
                    epoch_units: summary.epoch_units,
                    server_epoch_units: summary.server_epoch_units,
                    transfers: summary.transfers,
                    compute_ms: summary.compute_ms,
                    rounds: summary.rounds_completed,
                    partition_hash: summary.partition_hash.clone(),
                });
            }
        }
    }

    let mut summary = Vec::new();
    for &scenario in scenarios {
        for method in AlgorithmName::ALL {
            let group: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.scenario == scenario.label() && r.method == method.label())
                .collect();
            let n = group.len() as f64;
            let mean = |f: &dyn Fn(&BenchRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            summary.push(BenchSummaryRow {
                scenario: scenario.label().to_string(),
                method: method.label().to_string(),
                repetitions: group.len(),
                accuracy: mean(&|r| r.accuracy),
                f1_macro: mean(&|r| r.f1_macro),
                sensitivity_macro: mean(&|r| r.sensitivity_macro),
                specificity_macro: mean(&|r| r.specificity_macro),
                epoch_units: mean(&|r| r.epoch_units as f64),
                compute_ms: mean(&|r| r.compute_ms),
            });
        }
    }

    std::fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    write_csv(&out_root.join("bench.csv"), &rows)?;
    write_csv(&out_root.join("bench_summary.csv"), &summary)?;

    let table = render_table(
        &[
            "scenario",
            "method",
            "acc",
            "f1",
            "sens",
            "spec",
            "epoch_units",
            "compute_ms",
        ],
        summary.iter().map(|r| {
            vec![
                r.scenario.clone(),
                r.method.clone(),
                format!("{:.4}", r.accuracy),
                format!("{:.4}", r.f1_macro),
                format!("{:.4}", r.sensitivity_macro),
                format!("{:.4}", r.specificity_macro),
                format!("{:.1}", r.epoch_units),
                format!("{:.1}", r.compute_ms),
            ]
        }),
    );
    println!("{table}");
    std::fs::write(out_root.join("bench_summary.txt"), &table)
        .map_err(|e| Error::io(out_root, e))?;

    Ok(BenchReport {
        rows,
        summary,
        table,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub sensitivity_macro: f64,
    pub specificity_macro: f64,
    pub epoch_units: u64,
    pub server_epoch_units: u64,
    pub transfers: u64,
    pub rounds: usize,
    pub partition_hash: String,
}

/// One dynamic-federation run per mixing weight on a fixed partition and
/// seed; emits `alpha_sweep.csv`.
pub fn cmd_alpha_sweep(cfg: &RunConfig, alphas: &[f64], out_root: &Path) -> Result<Vec<AlphaRow>> {
    cfg.validate()?;
    if alphas.is_empty() {
        return Err(Error::config("alphas", "at least one alpha is required"));
    }
    if let Some(bad) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::config(
            "alphas",
            format!("must be in [0, 1], got {bad}"),
        ));
    }
    let exp = prepare(cfg)?;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut run_cfg = cfg.clone();
        run_cfg.alpha = alpha;
        let run_dir = out_root.join("alpha_sweep").join(format!("alpha_{alpha}"));
        let summary = execute(&run_cfg, AlgorithmName::Unifed, &exp, &run_dir)?;
        println!("{}", summary.one_line());
        rows.push(AlphaRow {
            alpha,
            seed: run_cfg.seed,
            accuracy: summary.metrics.accuracy,
            f1_macro: summary.metrics.f1_macro,
            sensitivity_macro: summary.metrics.sensitivity_macro,
            specificity_macro: summary.metrics.specificity_macro,
            epoch_units: summary.epoch_units,
            server_epoch_units: summary.server_epoch_units,
            transfers: summary.transfers,
            rounds: summary.rounds_completed,
            partition_hash: summary.partition_hash.clone(),
        });
    }
    std::fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    write_csv(&out_root.join("alpha_sweep.csv"), &rows)?;
    Ok(rows)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::RoundLog(e.to_string()))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::RoundLog(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Output root precedence: `--out` flag, then config `out_dir`, then
/// `UNIFED_OUT`, then `./runs`.
pub fn resolve_out_root(flag_out: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag_out {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.out_dir {
        return p.clone();
    }
    if let Ok(env) = std::env::var("UNIFED_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("runs")
}
