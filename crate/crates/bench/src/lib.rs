//! Shared fixtures for the criterion benchmarks.

use unifed_core::{
    build_mixture, partition, Dataset, HospitalData, PartitionPlan, Scenario, TaskGenerator,
    TaskSpec, UnifiedLabelMap,
};

/// Three-task blob mixture shaped like the default federation (4/11/8-class
/// tasks), scaled by `samples_per_class`.
pub fn default_tasks(feature_dim: usize, samples_per_class: usize) -> Vec<TaskSpec> {
    [4usize, 11, 8]
        .iter()
        .enumerate()
        .map(|(i, &classes)| TaskSpec {
            task_id: i as u32,
            local_num_classes: classes,
            feature_dim,
            generator: TaskGenerator::GaussianBlobs {
                center_scale: 3.0,
                noise_sigma: 1.0,
            },
            samples_per_class,
        })
        .collect()
}

pub fn mixture(samples_per_class: usize, seed: u64) -> (Dataset, UnifiedLabelMap) {
    build_mixture(&default_tasks(16, samples_per_class), seed).expect("valid mixture")
}

pub fn partitioned(
    samples_per_class: usize,
    hospitals_per_task: usize,
    seed: u64,
) -> (Vec<HospitalData>, Dataset, UnifiedLabelMap) {
    let (ds, map) = mixture(samples_per_class, seed);
    let plan = PartitionPlan {
        scenario: Scenario::StronglyNonIid {
            dirichlet_beta: 0.3,
        },
        hospitals_per_task,
        server_fraction: 0.05,
        split_fractions: [0.7, 0.1, 0.2],
    };
    let out = partition(&ds, &plan, seed).expect("feasible partition");
    (out.hospitals, out.server_set, map)
}
