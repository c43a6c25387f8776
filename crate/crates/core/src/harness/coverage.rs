use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::scenario::build_scenario;
use crate::asymptotics::{omega_lg_consistent, Dimensions};
use crate::brute_force::BruteForceSampler;
use crate::error::{Error, Result};
use crate::estimators::{consistent_estimates, omega_hat_plugin, test_weights, ConfidenceRegion};
use crate::model::{LinearCombination, PortfolioSpec, ProjectedQuantities};
use crate::rng::{derive_seed, substream};

/// Shifts of the hypothesized value, in asymptotic standard deviations.
pub const POWER_SHIFTS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerPoint {
    pub shift_sd: f64,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub portfolio: PortfolioSpec,
    pub reps: usize,
    /// Replications where the region could be built.
    pub valid_reps: usize,
    pub coverage: f64,
    pub coverage_se: f64,
    /// Rejection rate of the test at the true value.
    pub size: f64,
    /// Replications where the test, computed through an independent solve,
    /// disagreed with region membership.
    pub duality_violations: usize,
    pub power: Vec<PowerPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageTable {
    pub n: usize,
    pub p: usize,
    pub beta: f64,
    pub seed: u64,
    pub rows: Vec<CoverageRow>,
    pub runtime_seconds: f64,
}

impl CoverageTable {
    pub fn row(&self, name: &str) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.portfolio.name() == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "portfolio",
            "reps",
            "valid_reps",
            "coverage",
            "coverage_se",
            "size",
            "duality_violations",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        header.extend(POWER_SHIFTS.iter().map(|d| format!("power_{d}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![
                r.portfolio.name().to_string(),
                r.reps.to_string(),
                r.valid_reps.to_string(),
                crate::sampler::fmt17(r.coverage),
                crate::sampler::fmt17(r.coverage_se),
                crate::sampler::fmt17(r.size),
                r.duality_violations.to_string(),
            ];
            row.extend(
                r.power
                    .iter()
                    .map(|p| crate::sampler::fmt17(p.rejection_rate)),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of one replication for one portfolio.
struct RepOutcome {
    covered: bool,
    duality_ok: bool,
    rejected: Vec<bool>,
}

/// `(n−p)dᵀΩ̂⁻¹d` through a Cholesky solve rather than the region's
/// eigen-based inverse.
fn wald_statistic(omega: &DMatrix<f64>, d: &DVector<f64>, n: usize, p: usize) -> Option<f64> {
    let chol = omega.clone().cholesky()?;
    Some((n - p) as f64 * d.dot(&chol.solve(d)))
}

fn one_rep(
    spec: &PortfolioSpec,
    est: &crate::estimators::ConsistentEstimates,
    cfg: &ExperimentConfig,
    truth: &DVector<f64>,
    step: &DVector<f64>,
) -> Option<RepOutcome> {
    let region = ConfidenceRegion::for_weights(spec, est, cfg.covariance_route, cfg.beta).ok()?;
    let omega = omega_hat_plugin(spec, est, cfg.covariance_route).ok()?;
    let center = est.lw(spec).ok()?;
    let covered = region.contains(truth);
    let wald = wald_statistic(&omega, &(&center - truth), est.n, est.p)?;
    let dual_reject = wald > region.chi2_quantile;
    // Only a decision flip away from the boundary counts as a violation.
    let near_boundary = (wald - region.chi2_quantile).abs() <= 1e-9 * region.chi2_quantile;
    let duality_ok = near_boundary || dual_reject == !covered;
    let rejected = POWER_SHIFTS
        .iter()
        .map(|&d| test_weights(&region, &(truth + step * d)).reject)
        .collect();
    Some(RepOutcome {
        covered,
        duality_ok,
        rejected,
    })
}

/// Empirical coverage of the confidence regions for the configured
/// portfolio and for GMV over `reps` simulated data sets, with the size
/// and power of the dual test.
pub fn run_coverage(cfg: &ExperimentConfig, reps: usize) -> Result<CoverageTable> {
    let start = Instant::now();
    cfg.validate()?;
    if reps < 2 {
        return Err(Error::Config("reps must be at least 2".into()));
    }
    if reps < 500 {
        log::warn!("{reps} replications give a coarse coverage estimate");
    }
    let model = build_scenario(cfg)?;
    let (n, p) = (cfg.n, cfg.p());
    let lincomb = LinearCombination::select(p, &cfg.lincomb)?;
    let proj = ProjectedQuantities::from_model(&model, &model.frontier(), &lincomb)?;
    let dims = Dimensions::new(n, p)?;
    let mut specs = vec![cfg.portfolio()];
    if !matches!(specs[0], PortfolioSpec::Gmv) {
        specs.push(PortfolioSpec::Gmv);
    }
    let mut targets = Vec::new();
    for spec in &specs {
        let law = omega_lg_consistent(spec, &proj, dims, cfg.covariance_route)?;
        let step = DVector::from_fn(law.dim(), |i, _| law.sd(i));
        targets.push((law.center, step));
    }

    let sampler = BruteForceSampler::new(&model, &lincomb, n, cfg.sampling_scenario())?;
    let seed = derive_seed(cfg.seed, "coverage");
    let outcomes: Vec<Vec<Option<RepOutcome>>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let stats = sampler.draw_statistics(&mut substream(seed, i))?;
            let est = consistent_estimates(&stats, cfg.slope_correction)?;
            Ok(specs
                .iter()
                .zip(&targets)
                .map(|(spec, (truth, step))| one_rep(spec, &est, cfg, truth, step))
                .collect())
        })
        .collect::<Result<_>>()?;

    let rows = specs
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let valid: Vec<&RepOutcome> = outcomes.iter().filter_map(|o| o[j].as_ref()).collect();
            let m = valid.len().max(1) as f64;
            let coverage = valid.iter().filter(|o| o.covered).count() as f64 / m;
            let power = POWER_SHIFTS
                .iter()
                .enumerate()
                .map(|(d, &shift_sd)| PowerPoint {
                    shift_sd,
                    rejection_rate: valid.iter().filter(|o| o.rejected[d]).count() as f64 / m,
                })
                .collect::<Vec<_>>();
            CoverageRow {
                portfolio: *spec,
                reps,
                valid_reps: valid.len(),
                coverage,
                coverage_se: (coverage * (1.0 - coverage) / m).sqrt(),
                size: power[0].rejection_rate,
                duality_violations: valid.iter().filter(|o| !o.duality_ok).count(),
                power,
            }
        })
        .collect();
    Ok(CoverageTable {
        n,
        p,
        beta: cfg.beta,
        seed: cfg.seed,
        rows,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_coverage_table_is_well_formed() {
        let cfg = ExperimentConfig::from_json(r#"{"n": 80, "c": 0.25, "seed": 4}"#).unwrap();
        let t = run_coverage(&cfg, 60).unwrap();
        assert_eq!(t.rows.len(), 2);
        for r in &t.rows {
            assert_eq!(r.valid_reps, 60);
            assert_eq!(r.duality_violations, 0);
            assert!((r.size - (1.0 - r.coverage)).abs() < 1e-12);
            assert!(r
                .power
                .windows(2)
                .all(|w| w[0].rejection_rate <= w[1].rejection_rate + 0.1));
        }
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
