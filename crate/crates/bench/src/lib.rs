//! Benchmark fixtures.

use oadm::harness::{build_instance, ExperimentConfig, ExperimentInstance, ProblemKind};
use oadm::LossTerm;

pub fn instance(problem: ProblemKind, n: usize) -> ExperimentInstance {
    let cfg = ExperimentConfig {
        problem,
        n,
        seed: 1,
        ..Default::default()
    };
    build_instance(&cfg).expect("bench configuration is valid")
}

/// The round-robin loss stream of an instance.
pub fn losses(inst: &ExperimentInstance) -> Vec<LossTerm> {
    let ds = inst.dataset.as_ref().expect("data-backed instance");
    (0..ds.len()).map(|i| ds.squared_term(i)).collect()
}
