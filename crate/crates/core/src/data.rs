//! Task generation, ingestion, unified label space, and Non-IID partitioning.
//!
//! A federation mixes several classification tasks. Each task's local label
//! set is mapped into one unified label space by per-task offsets, features
//! are zero-padded to the largest task dimension, and the pooled mixture is
//! partitioned into hospitals plus a small server set.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::hex;
use crate::rng::{mix_seed, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskGenerator {
    /// Class means drawn uniformly in [-center_scale, center_scale]^d, samples
    /// drawn N(mean, noise_sigma^2 I).
    GaussianBlobs { center_scale: f64, noise_sigma: f64 },
    /// Rows of `label,f1,...,fd` with an optional header line.
    CsvFile { path: PathBuf },
}

/// One classification task to be served by a group of hospitals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: u32,
    pub local_num_classes: usize,
    pub feature_dim: usize,
    pub generator: TaskGenerator,
    pub samples_per_class: usize,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.local_num_classes < 2 {
            return Err(Error::config("local_num_classes", "must be >= 2"));
        }
        if self.feature_dim < 1 {
            return Err(Error::config("feature_dim", "must be >= 1"));
        }
        if self.samples_per_class < 1 {
            return Err(Error::config("samples_per_class", "must be >= 1"));
        }
        Ok(())
    }
}

/// Injective mapping of per-task local labels into one global label space.
/// Offsets are prefix sums of local class counts in registration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnifiedLabelMap {
    task_ids: Vec<u32>,
    offsets: Vec<usize>,
    counts: Vec<usize>,
    total_classes: usize,
}

impl UnifiedLabelMap {
    pub fn total_classes(&self) -> usize {
        self.total_classes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn offset_of(&self, task_id: u32) -> Option<usize> {
        self.task_ids
            .iter()
            .position(|&t| t == task_id)
            .map(|i| self.offsets[i])
    }

    pub fn count_of(&self, task_id: u32) -> Option<usize> {
        self.task_ids
            .iter()
            .position(|&t| t == task_id)
            .map(|i| self.counts[i])
    }

    pub fn task_ids(&self) -> &[u32] {
        &self.task_ids
    }
}

/// Prefix-sum construction of the unified label map in registration order.
pub fn build_unified(tasks: &[TaskSpec]) -> Result<UnifiedLabelMap> {
    if tasks.is_empty() {
        return Err(Error::Empty { what: "task list" });
    }
    let mut offsets = Vec::with_capacity(tasks.len());
    let mut counts = Vec::with_capacity(tasks.len());
    let mut task_ids = Vec::with_capacity(tasks.len());
    let mut total = 0usize;
    for t in tasks {
        t.validate()?;
        if task_ids.contains(&t.task_id) {
            return Err(Error::config(
                "task_id",
                format!("duplicate task id {}", t.task_id),
            ));
        }
        task_ids.push(t.task_id);
        offsets.push(total);
        counts.push(t.local_num_classes);
        total += t.local_num_classes;
    }
    Ok(UnifiedLabelMap {
        task_ids,
        offsets,
        counts,
        total_classes: total,
    })
}

/// Sample matrix with unified labels and per-row task provenance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    feature_dim: usize,
    labels: Vec<u32>,
    task_of_sample: Vec<u32>,
}

impl Dataset {
    pub fn new(feature_dim: usize) -> Self {
        Dataset {
            features: Vec::new(),
            feature_dim,
            labels: Vec::new(),
            task_of_sample: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn task_of_sample(&self) -> &[u32] {
        &self.task_of_sample
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn push_row(&mut self, features: &[f64], label: u32, task_id: u32) {
        debug_assert_eq!(features.len(), self.feature_dim);
        self.features.extend_from_slice(features);
        self.labels.push(label);
        self.task_of_sample.push(task_id);
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset::new(self.feature_dim);
        out.features.reserve(indices.len() * self.feature_dim);
        for &i in indices {
            out.push_row(self.row(i), self.labels[i], self.task_of_sample[i]);
        }
        out
    }

    /// Concatenate datasets of equal feature dimension.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let mut iter = parts.into_iter();
        let first = iter.next().ok_or(Error::Empty {
            what: "dataset list",
        })?;
        let mut out = first.clone();
        for ds in iter {
            if ds.feature_dim != out.feature_dim {
                return Err(Error::DimensionMismatch {
                    context: "dataset concat",
                    expected: out.feature_dim.to_string(),
                    actual: ds.feature_dim.to_string(),
                });
            }
            out.features.extend_from_slice(&ds.features);
            out.labels.extend_from_slice(&ds.labels);
            out.task_of_sample.extend_from_slice(&ds.task_of_sample);
        }
        Ok(out)
    }

    /// Copy with feature rows zero-padded to `dim` and labels shifted by
    /// `label_offset`.
    pub fn padded_shifted(&self, dim: usize, label_offset: u32) -> Dataset {
        assert!(dim >= self.feature_dim);
        let mut out = Dataset::new(dim);
        let mut row_buf = vec![0.0; dim];
        for i in 0..self.len() {
            row_buf[..self.feature_dim].copy_from_slice(self.row(i));
            out.push_row(
                &row_buf,
                self.labels[i] + label_offset,
                self.task_of_sample[i],
            );
        }
        out
    }

    /// Distinct labels present, ascending.
    pub fn distinct_labels(&self) -> Vec<u32> {
        let mut v = self.labels.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Hex SHA-256 over dimensions, features, labels, and task markers.
    /// Stable across runs for identically generated data.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.len() as u64).to_le_bytes());
        hasher.update((self.feature_dim as u64).to_le_bytes());
        for v in &self.features {
            hasher.update(v.to_le_bytes());
        }
        for l in &self.labels {
            hasher.update(l.to_le_bytes());
        }
        for t in &self.task_of_sample {
            hasher.update(t.to_le_bytes());
        }
        hex(&hasher.finalize())
    }
}

/// Generate one task's samples. Labels are local (0..local_num_classes);
/// [`build_mixture`] shifts them into the unified space. Deterministic per
/// (spec, seed).
pub fn generate_task(spec: &TaskSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    match &spec.generator {
        TaskGenerator::GaussianBlobs {
            center_scale,
            noise_sigma,
        } => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(seed, stream::TASK, spec.task_id as u64));
            let d = spec.feature_dim;
            let center = Uniform::new_inclusive(-center_scale, *center_scale)
                .map_err(|e| Error::config("center_scale", e.to_string()))?;
            let mut means = Vec::with_capacity(spec.local_num_classes);
            for _ in 0..spec.local_num_classes {
                let mu: Vec<f64> = (0..d).map(|_| center.sample(&mut rng)).collect();
                means.push(mu);
            }
            let mut ds = Dataset::new(d);
            let mut row = vec![0.0; d];
            for (c, mu) in means.iter().enumerate() {
                for _ in 0..spec.samples_per_class {
                    for j in 0..d {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        row[j] = mu[j] + noise_sigma * n;
                    }
                    ds.push_row(&row, c as u32, spec.task_id);
                }
            }
            Ok(ds)
        }
        TaskGenerator::CsvFile { path } => {
            let mut ds = load_csv(path, spec.local_num_classes, spec.feature_dim)?;
            for t in ds.task_of_sample.iter_mut() {
                *t = spec.task_id;
            }
            Ok(ds)
        }
    }
}

/// Parse `label,f1,...,fd` rows. The header line is optional; a first line
/// whose leading field is not an integer is skipped. Errors cite 1-based line
/// numbers.
pub fn load_csv(path: &Path, local_num_classes: usize, feature_dim: usize) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut ds = Dataset::new(feature_dim);
    let mut row = vec![0.0; feature_dim];
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if idx == 0 && fields[0].parse::<i64>().is_err() {
            continue; // header
        }
        if fields.len() != feature_dim + 1 {
            return Err(Error::CsvFormat {
                path: path.to_path_buf(),
                line: line_no,
                message: format!(
                    "expected {} fields (label + {} features), got {}",
                    feature_dim + 1,
                    feature_dim,
                    fields.len()
                ),
            });
        }
        let label: u32 = fields[0].parse().map_err(|_| Error::CsvFormat {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("label `{}` is not a non-negative integer", fields[0]),
        })?;
        if label as usize >= local_num_classes {
            return Err(Error::CsvFormat {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("label {label} out of range (expected < {local_num_classes})"),
            });
        }
        for (j, f) in fields[1..].iter().enumerate() {
            row[j] = f.parse().map_err(|_| Error::CsvFormat {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("feature `{f}` is not a number"),
            })?;
        }
        ds.push_row(&row, label, 0);
    }
    Ok(ds)
}

/// Generate all tasks, zero-pad to the maximum feature dimension, shift
/// labels into the unified space, and pool the rows.
pub fn build_mixture(tasks: &[TaskSpec], seed: u64) -> Result<(Dataset, UnifiedLabelMap)> {
    let unified = build_unified(tasks)?;
    let max_dim = tasks.iter().map(|t| t.feature_dim).max().unwrap_or(1);
    let mut parts = Vec::with_capacity(tasks.len());
    for task in tasks {
        let local = generate_task(task, seed)?;
        let offset = unified.offset_of(task.task_id).expect("registered task") as u32;
        parts.push(local.padded_shifted(max_dim, offset));
    }
    let pooled = Dataset::concat(parts.iter())?;
    Ok((pooled, unified))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scenario {
    /// Per-hospital class proportions drawn from Dirichlet(beta).
    StronglyNonIid { dirichlet_beta: f64 },
    /// Equal per-class proportions per hospital (disjoint pools).
    ModeratelyNonIid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub scenario: Scenario,
    pub hospitals_per_task: usize,
    pub server_fraction: f64,
    pub split_fractions: [f64; 3],
}

impl Default for PartitionPlan {
    fn default() -> Self {
        PartitionPlan {
            scenario: Scenario::StronglyNonIid {
                dirichlet_beta: 0.3,
            },
            hospitals_per_task: 8,
            server_fraction: 0.05,
            split_fractions: [0.70, 0.10, 0.20],
        }
    }
}

impl PartitionPlan {
    pub fn validate(&self) -> Result<()> {
        if self.hospitals_per_task < 1 {
            return Err(Error::config("hospitals_per_task", "must be >= 1"));
        }
        if !(self.server_fraction > 0.0 && self.server_fraction < 1.0) {
            return Err(Error::config(
                "server_fraction",
                format!("must be in (0, 1), got {}", self.server_fraction),
            ));
        }
        if let Scenario::StronglyNonIid { dirichlet_beta } = self.scenario {
            if dirichlet_beta.is_nan() || dirichlet_beta <= 0.0 {
                return Err(Error::config(
                    "dirichlet_beta",
                    format!("must be > 0, got {dirichlet_beta}"),
                ));
            }
        }
        check_fractions(&self.split_fractions)?;
        Ok(())
    }
}

fn check_fractions(fractions: &[f64; 3]) -> Result<()> {
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadFractions { sum });
    }
    if fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::config("split_fractions", "must be non-negative"));
    }
    Ok(())
}

/// One federation participant's local data.
#[derive(Clone, Debug)]
pub struct HospitalData {
    pub hospital_id: u32,
    pub task_id: u32,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

#[derive(Clone, Debug)]
pub struct StratifiedSplit {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct PartitionOutcome {
    pub hospitals: Vec<HospitalData>,
    pub server_set: Dataset,
    pub warnings: Vec<String>,
}

/// Largest-remainder apportionment of `n` items over `weights` (ties toward
/// the lower index).
fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

/// Largest-remainder allocation with a floor of one item per bin. Requires
/// n >= bins; the floor is restored by shaving the largest bins.
fn allocation_with_floor(n: usize, weights: &[f64]) -> Vec<usize> {
    let mut counts = largest_remainder(n, weights);
    loop {
        let Some(zero) = counts.iter().position(|&c| c == 0) else {
            return counts;
        };
        let donor = counts
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .expect("nonempty counts");
        counts[donor] -= 1;
        counts[zero] += 1;
    }
}

/// Per-class split counts for stratification: largest-remainder rounding of
/// `fractions` over `n` samples of one class.
fn split_counts(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let c = largest_remainder(n, fractions);
    [c[0], c[1], c[2]]
}

/// Stratified train/val/test split. Classes with fewer than 3 samples go
/// entirely to train and a warning is recorded. Deterministic per seed.
pub fn stratified_split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<StratifiedSplit> {
    check_fractions(&fractions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in ds.distinct_labels() {
        let mut idxs: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels()[i] == class).collect();
        if idxs.len() < 3 {
            warnings.push(format!(
                "class {class} has only {} sample(s); assigned entirely to train",
                idxs.len()
            ));
            train_idx.extend(idxs);
            continue;
        }
        idxs.shuffle(&mut rng);
        let counts = split_counts(idxs.len(), &fractions);
        train_idx.extend(&idxs[..counts[0]]);
        val_idx.extend(&idxs[counts[0]..counts[0] + counts[1]]);
        test_idx.extend(&idxs[counts[0] + counts[1]..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(StratifiedSplit {
        train: ds.select(&train_idx),
        val: ds.select(&val_idx),
        test: ds.select(&test_idx),
        warnings,
    })
}

/// Partition a pooled mixture into hospitals and a server set.
///
/// For each task, `server_fraction` of the task's rows is removed uniformly
/// at random into the server set; the remainder is divided across
/// `hospitals_per_task` hospitals per the scenario, then each hospital is
/// stratified-split. Hospital ids are assigned task-major in task-id order.
pub fn partition(ds: &Dataset, plan: &PartitionPlan, seed: u64) -> Result<PartitionOutcome> {
    plan.validate()?;
    if ds.is_empty() {
        return Err(Error::Empty { what: "dataset" });
    }
    let mut task_ids = ds.task_of_sample().to_vec();
    task_ids.sort_unstable();
    task_ids.dedup();

    let h_per_task = plan.hospitals_per_task;
    let mut server_rows: Vec<usize> = Vec::new();
    let mut hospitals = Vec::new();
    let mut warnings = Vec::new();

    for (t_idx, &task_id) in task_ids.iter().enumerate() {
        let mut rows: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.task_of_sample()[i] == task_id)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, stream::PARTITION, task_id as u64));
        rows.shuffle(&mut rng);
        let n_server = ((plan.server_fraction * rows.len() as f64).round() as usize)
            .min(rows.len().saturating_sub(h_per_task));
        server_rows.extend(&rows[..n_server]);
        let remaining = &rows[n_server..];

        // group the remainder by class, preserving the shuffled order
        let mut classes: Vec<u32> = remaining.iter().map(|&i| ds.labels()[i]).collect();
        classes.sort_unstable();
        classes.dedup();
        let per_class: Vec<Vec<usize>> = classes
            .iter()
            .map(|&c| {
                remaining
                    .iter()
                    .copied()
                    .filter(|&i| ds.labels()[i] == c)
                    .collect()
            })
            .collect();

        // per-hospital class-proportion vectors
        let proportions: Vec<Vec<f64>> = match plan.scenario {
            Scenario::ModeratelyNonIid => {
                vec![vec![1.0; classes.len()]; h_per_task]
            }
            Scenario::StronglyNonIid { dirichlet_beta } => {
                let gamma = Gamma::new(dirichlet_beta, 1.0)
                    .map_err(|e| Error::config("dirichlet_beta", e.to_string()))?;
                (0..h_per_task)
                    .map(|_| {
                        let raw: Vec<f64> = (0..classes.len())
                            .map(|_| gamma.sample(&mut rng).max(1e-300))
                            .collect();
                        let sum: f64 = raw.iter().sum();
                        raw.into_iter().map(|g| g / sum).collect()
                    })
                    .collect()
            }
        };

        let mut hospital_rows: Vec<Vec<usize>> = vec![Vec::new(); h_per_task];
        for (c_idx, class_rows) in per_class.iter().enumerate() {
            let class = classes[c_idx];
            if class_rows.len() < h_per_task {
                let first_short = class_rows.len() as u32; // hospitals beyond this index get none
                return Err(Error::InfeasiblePartition {
                    hospital: t_idx as u32 * h_per_task as u32 + first_short,
                    class,
                });
            }
            let counts = match plan.scenario {
                Scenario::ModeratelyNonIid => {
                    let base = class_rows.len() / h_per_task;
                    let extra = class_rows.len() % h_per_task;
                    (0..h_per_task)
                        .map(|h| {
                            // rotate the +1 remainder start by class index
                            let slot = (h + h_per_task - (c_idx % h_per_task)) % h_per_task;
                            base + usize::from(slot < extra)
                        })
                        .collect::<Vec<_>>()
                }
                Scenario::StronglyNonIid { .. } => {
                    let weights: Vec<f64> = proportions.iter().map(|p| p[c_idx]).collect();
                    allocation_with_floor(class_rows.len(), &weights)
                }
            };
            let mut cursor = 0;
            for (h, &count) in counts.iter().enumerate() {
                hospital_rows[h].extend(&class_rows[cursor..cursor + count]);
                cursor += count;
            }
        }

        for (h, mut rows) in hospital_rows.into_iter().enumerate() {
            let hospital_id = (t_idx * h_per_task + h) as u32;
            if rows.is_empty() {
                return Err(Error::InfeasiblePartition {
                    hospital: hospital_id,
                    class: classes.first().copied().unwrap_or(0),
                });
            }
            rows.sort_unstable();
            let local = ds.select(&rows);
            let split = stratified_split(
                &local,
                plan.split_fractions,
                mix_seed(seed, stream::SPLIT, hospital_id as u64),
            )?;
            warnings.extend(
                split
                    .warnings
                    .iter()
                    .map(|w| format!("hospital {hospital_id}: {w}")),
            );
            hospitals.push(HospitalData {
                hospital_id,
                task_id,
                train: split.train,
                val: split.val,
                test: split.test,
            });
        }
    }

    server_rows.sort_unstable();
    Ok(PartitionOutcome {
        hospitals,
        server_set: ds.select(&server_rows),
        warnings,
    })
}
