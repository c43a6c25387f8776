//! Shared fixtures for the integration tests.
#![allow(dead_code)]

pub mod kernels;

use frontier_sampler::harness::{build_scenario, ExperimentConfig};
use frontier_sampler::model::{LinearCombination, PopulationModel, ProjectedQuantities};

/// Population of the reference design (Haar eigenvectors, three-block
/// spectrum, uniform means) at dimension `p` for sample size `n`.
pub fn design(n: usize, p: usize, seed: u64) -> (ExperimentConfig, PopulationModel) {
    let cfg = ExperimentConfig::from_json(&format!(
        r#"{{"n": {n}, "c": {}, "seed": {seed}}}"#,
        p as f64 / n as f64
    ))
    .unwrap();
    assert_eq!(cfg.p(), p);
    let model = build_scenario(&cfg).unwrap();
    (cfg, model)
}

pub fn first_asset(model: &PopulationModel) -> (LinearCombination, ProjectedQuantities) {
    let l = LinearCombination::select(model.dim(), &[0]).unwrap();
    let proj = ProjectedQuantities::from_model(model, &model.frontier(), &l).unwrap();
    (l, proj)
}

pub fn scaled(xs: &[f64], a: f64) -> Vec<f64> {
    xs.iter().map(|x| x * a).collect()
}
