//! Run manifests, round logs, and weight checkpoints.
//!
//! A run directory holds `manifest.json`, `rounds.csv`,
//! `checkpoints/round_<t>.bin`, and `final.bin`. The CSV log is flushed after
//! every round, so an aborted run stays parseable up to the last completed
//! round, and (manifest, round log) together suffice to replay cost totals
//! and orderings without re-running training.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::federation::{HospitalRoundEntry, RoundRecord};
use crate::metrics::MetricBundle;
use crate::model::{hex, ModelKind, ModelSpec, WeightVector};

pub const MANIFEST_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 4] = b"UNFW";
const CHECKPOINT_VERSION: u32 = 1;

/// Snapshot of everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: u32,
    pub seed: u64,
    /// Full configuration snapshot (federation, partition, model, dynamic).
    pub config: serde_json::Value,
    pub started_at: String,
    pub finished_at: String,
    /// Hash of the serialized configuration.
    pub input_hash: String,
    /// Hash of the partitioned datasets all methods of a comparison consume.
    pub partition_hash: String,
}

impl RunManifest {
    pub fn new(seed: u64, config: serde_json::Value, partition_hash: String) -> Self {
        let input_hash = hash_json(&config);
        RunManifest {
            version: MANIFEST_VERSION,
            seed,
            config,
            started_at: String::new(),
            finished_at: String::new(),
            input_hash,
            partition_hash,
        }
    }
}

/// Hash of a JSON value under canonical (sorted-key) serialization.
pub fn hash_json(value: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(value).expect("serializable value");
    hex(&Sha256::digest(canonical.as_bytes()))
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let json =
        serde_json::to_string_pretty(manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| Error::Manifest(e.to_string()))?;
    let found = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Manifest("missing version field".into()))? as u32;
    if found != MANIFEST_VERSION {
        return Err(Error::ManifestVersion {
            supported: MANIFEST_VERSION,
            found,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Manifest(e.to_string()))
}

/// One CSV row: hospitals get `scope=hospital` rows, each round closes with a
/// `scope=round` summary row.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    round: usize,
    scope: String,
    hospital_id: Option<u32>,
    rank: Option<usize>,
    slope: Option<f64>,
    epochs_trained: Option<usize>,
    stop_reason: Option<String>,
    val_loss: Option<f64>,
    incoming_hash: Option<String>,
    outgoing_hash: Option<String>,
    transfers: Option<u64>,
    server_epochs: Option<usize>,
    global_val_loss: Option<f64>,
    accuracy: Option<f64>,
    f1_macro: Option<f64>,
    sensitivity_macro: Option<f64>,
    specificity_macro: Option<f64>,
    theta_k_hash: Option<String>,
    theta_s_hash: Option<String>,
    ordering: Option<String>,
}

/// Streaming `rounds.csv` writer, flushed per round.
pub struct RoundLogWriter {
    writer: csv::Writer<File>,
    path: PathBuf,
}

impl RoundLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(RoundLogWriter {
            writer: csv::Writer::from_writer(file),
            path: path.to_path_buf(),
        })
    }

    pub fn append_round(&mut self, record: &RoundRecord) -> Result<()> {
        for e in &record.per_hospital {
            let row = CsvRow {
                round: record.round_index,
                scope: "hospital".into(),
                hospital_id: Some(e.hospital_id),
                rank: Some(e.rank),
                slope: Some(e.slope),
                epochs_trained: Some(e.epochs_trained),
                stop_reason: Some(e.stop_reason.to_string()),
                val_loss: Some(e.val_loss),
                incoming_hash: Some(e.incoming_hash.clone()),
                outgoing_hash: Some(e.outgoing_hash.clone()),
                transfers: None,
                server_epochs: None,
                global_val_loss: None,
                accuracy: None,
                f1_macro: None,
                sensitivity_macro: None,
                specificity_macro: None,
                theta_k_hash: None,
                theta_s_hash: None,
                ordering: None,
            };
            self.writer
                .serialize(row)
                .map_err(|e| Error::RoundLog(e.to_string()))?;
        }
        let ordering = record
            .ordering
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join("|");
        let row = CsvRow {
            round: record.round_index,
            scope: "round".into(),
            hospital_id: None,
            rank: None,
            slope: None,
            epochs_trained: None,
            stop_reason: None,
            val_loss: None,
            incoming_hash: None,
            outgoing_hash: None,
            transfers: Some(record.transfers),
            server_epochs: Some(record.server_epochs),
            global_val_loss: record.global_val_loss,
            accuracy: Some(record.metrics.accuracy),
            f1_macro: Some(record.metrics.f1_macro),
            sensitivity_macro: Some(record.metrics.sensitivity_macro),
            specificity_macro: Some(record.metrics.specificity_macro),
            theta_k_hash: Some(record.theta_k_hash.clone()),
            theta_s_hash: Some(record.theta_s_hash.clone()),
            ordering: Some(ordering),
        };
        self.writer
            .serialize(row)
            .map_err(|e| Error::RoundLog(e.to_string()))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Reconstruct the round records from a `rounds.csv`.
///
/// Reading stops at the first malformed record, so a log torn by a mid-write
/// abort still yields every fully recorded round.
pub fn read_rounds(path: &Path) -> Result<Vec<RoundRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::RoundLog(e.to_string()))?
        .clone();
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut pending: Vec<HospitalRoundEntry> = Vec::new();
    let mut pending_round = 0usize;
    for record in reader.records() {
        let Ok(record) = record else { break };
        if record.len() != headers.len() {
            break;
        }
        let Ok(row) = record.deserialize::<CsvRow>(Some(&headers)) else {
            break;
        };
        match row.scope.as_str() {
            "hospital" => {
                let missing =
                    || Error::RoundLog(format!("round {}: incomplete hospital row", row.round));
                pending_round = row.round;
                pending.push(HospitalRoundEntry {
                    hospital_id: row.hospital_id.ok_or_else(missing)?,
                    rank: row.rank.ok_or_else(missing)?,
                    slope: row.slope.ok_or_else(missing)?,
                    epochs_trained: row.epochs_trained.ok_or_else(missing)?,
                    stop_reason: row
                        .stop_reason
                        .ok_or_else(missing)?
                        .parse()
                        .map_err(Error::RoundLog)?,
                    val_loss: row.val_loss.ok_or_else(missing)?,
                    incoming_hash: row.incoming_hash.ok_or_else(missing)?,
                    outgoing_hash: row.outgoing_hash.ok_or_else(missing)?,
                });
            }
            "round" => {
                let missing =
                    || Error::RoundLog(format!("round {}: incomplete summary row", row.round));
                if !pending.is_empty() && pending_round != row.round {
                    return Err(Error::RoundLog(format!(
                        "round {} summary follows hospital rows of round {}",
                        row.round, pending_round
                    )));
                }
                let ordering = row
                    .ordering
                    .ok_or_else(missing)?
                    .split('|')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<u32>().map_err(|e| Error::RoundLog(e.to_string())))
                    .collect::<Result<Vec<u32>>>()?;
                rounds.push(RoundRecord {
                    round_index: row.round,
                    ordering,
                    per_hospital: std::mem::take(&mut pending),
                    transfers: row.transfers.ok_or_else(missing)?,
                    server_epochs: row.server_epochs.ok_or_else(missing)?,
                    theta_k_hash: row.theta_k_hash.ok_or_else(missing)?,
                    theta_s_hash: row.theta_s_hash.ok_or_else(missing)?,
                    global_val_loss: row.global_val_loss,
                    metrics: MetricBundle {
                        accuracy: row.accuracy.ok_or_else(missing)?,
                        f1_macro: row.f1_macro.ok_or_else(missing)?,
                        sensitivity_macro: row.sensitivity_macro.ok_or_else(missing)?,
                        specificity_macro: row.specificity_macro.ok_or_else(missing)?,
                    },
                });
            }
            other => {
                return Err(Error::RoundLog(format!("unknown row scope `{other}`")));
            }
        }
    }
    // trailing hospital rows without a summary (mid-round abort) are dropped
    Ok(rounds)
}

fn kind_code(kind: ModelKind) -> u32 {
    match kind {
        ModelKind::Softmax => 0,
        ModelKind::Mlp => 1,
    }
}

fn kind_from_code(code: u32) -> Result<ModelKind> {
    match code {
        0 => Ok(ModelKind::Softmax),
        1 => Ok(ModelKind::Mlp),
        other => Err(Error::CheckpointFormat(format!(
            "unknown model kind code {other}"
        ))),
    }
}

/// Little-endian binary checkpoint: magic "UNFW", u32 version, the four
/// ModelSpec fields as u32s, then `parameter_count` f64 values.
pub fn save_checkpoint(w: &WeightVector, path: &Path) -> Result<()> {
    let spec = w.spec();
    let mut buf = Vec::with_capacity(4 + 4 * 5 + 8 * w.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&kind_code(spec.kind).to_le_bytes());
    buf.extend_from_slice(&(spec.input_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.hidden_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.num_classes as u32).to_le_bytes());
    for v in w.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<WeightVector> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.len() < 24 {
        return Err(Error::CheckpointTruncated {
            expected: 24,
            actual: raw.len(),
        });
    }
    if &raw[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::CheckpointFormat(format!(
            "bad magic {:02x?} (expected \"UNFW\")",
            &raw[0..4]
        )));
    }
    let u32_at =
        |offset: usize| u32::from_le_bytes(raw[offset..offset + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointFormat(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let spec = ModelSpec {
        kind: kind_from_code(u32_at(8))?,
        input_dim: u32_at(12) as usize,
        hidden_dim: u32_at(16) as usize,
        num_classes: u32_at(20) as usize,
    };
    spec.validate()
        .map_err(|e| Error::CheckpointFormat(e.to_string()))?;
    let expected = 24 + 8 * spec.parameter_count();
    if raw.len() != expected {
        return Err(Error::CheckpointTruncated {
            expected,
            actual: raw.len(),
        });
    }
    let values = raw[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    WeightVector::from_values(spec, values)
}
