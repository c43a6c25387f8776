use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::linalg::{haar_orthogonal, symmetrize};
use crate::model::PopulationModel;
use crate::rng::{derive_seed, substream};

/// Number of eigenvalues in each block; rounding slack goes to the last block.
pub fn eigenvalue_counts(cfg: &ExperimentConfig) -> Vec<usize> {
    let p = cfg.p();
    let mut counts: Vec<usize> = cfg
        .eigen_spec
        .iter()
        .map(|b| (b.proportion * p as f64).round() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    if let Some(last) = counts.last_mut() {
        *last = (*last + p).saturating_sub(assigned);
    }
    counts
}

/// The population of an experiment: `Σ = U diag(λ) Uᵀ` with Haar `U` and
/// the configured spectrum, `μ` uniform. Drawn once per experiment from the
/// config seed, or read from `population_file`.
pub fn build_scenario(cfg: &ExperimentConfig) -> Result<PopulationModel> {
    cfg.validate()?;
    let p = cfg.p();
    if let Some(path) = &cfg.population_file {
        let text = std::fs::read_to_string(path)?;
        let model = PopulationModel::from_json(&text)?;
        if model.dim() != p {
            return Err(Error::Config(format!(
                "population file has p = {}, config implies p = {p}",
                model.dim()
            )));
        }
        return Ok(model);
    }
    let mut rng = substream(derive_seed(cfg.seed, "population"), 0);
    let mut values = Vec::with_capacity(p);
    for (block, count) in cfg.eigen_spec.iter().zip(eigenvalue_counts(cfg)) {
        values.extend(std::iter::repeat_n(block.value, count));
    }
    let u = haar_orthogonal(p, &mut rng);
    let mut scaled = u.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    let mut sigma: DMatrix<f64> = scaled * u.transpose();
    symmetrize(&mut sigma);
    let (lo, hi) = (cfg.mu_law.low, cfg.mu_law.high);
    let mu = DVector::from_fn(p, |_, _| rng.random_range(lo..hi));
    PopulationModel::new(mu, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::from_json(r#"{"n": 100, "c": 0.5, "seed": 9}"#).unwrap()
    }

    #[test]
    fn spectrum_matches_spec() {
        let cfg = small();
        let m = build_scenario(&cfg).unwrap();
        let mut ev: Vec<f64> = m.eigen().values.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let mut expected = vec![0.2; 10];
        expected.extend(vec![1.0; 20]);
        expected.extend(vec![5.0; 20]);
        for (a, b) in ev.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-8);
        }
        let trace: f64 = m.sigma().diagonal().sum();
        assert!((trace - 2.44 * 50.0).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_model() {
        let a = build_scenario(&small()).unwrap();
        let b = build_scenario(&small()).unwrap();
        assert_eq!(a.sigma(), b.sigma());
        assert_eq!(a.mu(), b.mu());
        assert!(a.mu().iter().all(|x| (-0.2..0.2).contains(x)));
    }
}
