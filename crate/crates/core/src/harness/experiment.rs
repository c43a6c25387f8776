use std::time::Instant;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::scenario::build_scenario;
use crate::asymptotics::{
    check_regularity, omega_lg, xi_matrix, AsymptoticLaw, CovarianceRoute, Dimensions,
    RegularityBounds, StackLayout,
};
use crate::brute_force::{brute_force_batch, BruteForceSampler};
use crate::diagnostics::{ks_one_sample, ks_two_sample, moments, normal_cdf, qq_fit, KsResult};
use crate::error::Result;
use crate::model::{LinearCombination, PopulationModel, PortfolioSpec, ProjectedQuantities};
use crate::rng::derive_seed;
use crate::sampler::{sample_batch, DrawBatch, SamplerInputs};

/// Center and standard deviation used to standardize one batch column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityLaw {
    pub name: String,
    pub center: f64,
    pub sd: f64,
}

impl QuantityLaw {
    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.center) / self.sd
    }

    pub fn standardize_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.standardize(x)).collect()
    }
}

/// Marginal laws of `V̂, R̂, θ̂, ŝ, η̂` from the joint limit and of `Lŵ_g`
/// from its own limit, in batch column names.
pub fn quantity_laws(
    proj: &ProjectedQuantities,
    dims: Dimensions,
    spec: &PortfolioSpec,
    route: CovarianceRoute,
) -> Result<(Vec<QuantityLaw>, AsymptoticLaw, AsymptoticLaw)> {
    let xi = xi_matrix(proj, dims, route)?;
    let omega = omega_lg(spec, proj, dims, route)?;
    let k = proj.k();
    let lay = StackLayout::new(k);
    let law = |name: String, l: &AsymptoticLaw, i: usize| QuantityLaw {
        name,
        center: l.center[i],
        sd: l.sd(i),
    };
    let mut out = vec![
        law("v_hat".into(), &xi, lay.v()),
        law("r_hat".into(), &xi, lay.r()),
    ];
    out.extend((0..k).map(|j| law(format!("theta_hat_{}", j + 1), &xi, lay.theta(j))));
    out.push(law("s_hat".into(), &xi, lay.s()));
    out.extend((0..k).map(|j| law(format!("eta_hat_{}", j + 1), &xi, lay.eta(j))));
    out.extend((0..k).map(|j| law(format!("lw_hat_{}", j + 1), &omega, j)));
    Ok((out, xi, omega))
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantityRecord {
    pub name: String,
    pub ks_statistic_vs_asymptotic: f64,
    pub ks_p_value_vs_asymptotic: f64,
    /// Two-sample statistic between the fast path and brute force, when
    /// both ran.
    pub ks_statistic_vs_oracle: Option<f64>,
    pub ks_p_value_vs_oracle: Option<f64>,
    pub qq_slope: f64,
    pub qq_intercept: f64,
    /// Mean of the standardized draws and its standard error.
    pub mean_bias: f64,
    pub mean_bias_se: f64,
    /// Variance of the standardized draws.
    pub variance_ratio: f64,
    pub domain_violation_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub c_effective: f64,
    pub b_draws: usize,
    pub portfolio: PortfolioSpec,
    pub covariance_route: CovarianceRoute,
    /// The stochastic representations assume normal returns; under the
    /// t scenario only brute force ran.
    pub representation_valid: bool,
    /// Provenance of the batch the one-sample diagnostics describe.
    pub diagnosed_batch: String,
    pub quantities: Vec<QuantityRecord>,
    pub fast_path_seconds: Option<f64>,
    pub brute_force_seconds: Option<f64>,
    pub runtime_seconds: f64,
    pub warnings: Vec<String>,
}

impl DiagnosticsReport {
    pub fn quantity(&self, name: &str) -> Option<&QuantityRecord> {
        self.quantities.iter().find(|q| q.name == name)
    }

    /// Quantity with the largest one-sample statistic.
    pub fn worst_fit(&self) -> Option<&QuantityRecord> {
        self.quantities.iter().max_by(|a, b| {
            a.ks_statistic_vs_asymptotic
                .total_cmp(&b.ks_statistic_vs_asymptotic)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything a run produced, so callers can emit files or inspect draws.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub model: PopulationModel,
    pub laws: Vec<QuantityLaw>,
    pub xi: AsymptoticLaw,
    pub omega: AsymptoticLaw,
    pub fast: Option<DrawBatch>,
    pub brute: Option<DrawBatch>,
    pub report: DiagnosticsReport,
}

impl ExperimentOutput {
    /// The batch the one-sample diagnostics were computed on.
    pub fn diagnosed(&self) -> &DrawBatch {
        self.fast
            .as_ref()
            .or(self.brute.as_ref())
            .expect("one batch always runs")
    }
}

fn record(
    name: &str,
    law: &QuantityLaw,
    primary: &DrawBatch,
    oracle: Option<&DrawBatch>,
) -> QuantityRecord {
    let raw = primary.column(name).expect("law names are batch columns");
    let z = law.standardize_all(&raw);
    let ks: KsResult = ks_one_sample(&z, normal_cdf);
    let fit = qq_fit(&z);
    let m = moments(&z);
    let two = oracle.map(|o| ks_two_sample(&raw, &o.column(name).expect("same layout")));
    let violation = if name.starts_with("lw_hat") {
        primary.violation_rate()
    } else {
        0.0
    };
    QuantityRecord {
        name: name.to_string(),
        ks_statistic_vs_asymptotic: ks.statistic,
        ks_p_value_vs_asymptotic: ks.p_value,
        ks_statistic_vs_oracle: two.map(|t| t.statistic),
        ks_p_value_vs_oracle: two.map(|t| t.p_value),
        qq_slope: fit.slope,
        qq_intercept: fit.intercept,
        mean_bias: m.mean,
        mean_bias_se: m.std_error,
        variance_ratio: m.variance,
        domain_violation_rate: violation,
    }
}

/// Builds the population, draws `b_draws` statistics and standardizes them
/// by their limit laws. Normal returns use the fast path, plus brute force
/// when `oracle` is set; t returns use brute force only.
pub fn run_experiment(cfg: &ExperimentConfig, oracle: bool) -> Result<ExperimentOutput> {
    let start = Instant::now();
    cfg.validate()?;
    let model = build_scenario(cfg)?;
    let lincomb = LinearCombination::select(cfg.p(), &cfg.lincomb)?;
    let spec = cfg.portfolio();
    let scenario = cfg.sampling_scenario();
    let dims = Dimensions::new(cfg.n, cfg.p())?;
    let proj = ProjectedQuantities::from_model(&model, &model.frontier(), &lincomb)?;
    let (laws, xi, omega) = quantity_laws(&proj, dims, &spec, cfg.covariance_route)?;
    let mut warnings = check_regularity(&proj, RegularityBounds::default());

    let representation_valid = scenario.is_gaussian();
    let (mut fast, mut fast_seconds) = (None, None);
    if representation_valid {
        let t = Instant::now();
        let inputs = SamplerInputs::new(proj.clone(), cfg.n, cfg.p())?;
        fast = Some(sample_batch(
            &inputs,
            &spec,
            cfg.risk_level,
            cfg.b_draws,
            derive_seed(cfg.seed, "fast"),
        )?);
        fast_seconds = Some(t.elapsed().as_secs_f64());
    } else {
        warnings.push("stochastic representation skipped: returns are not normal".into());
    }
    let (mut brute, mut brute_seconds) = (None, None);
    if oracle || !representation_valid {
        let t = Instant::now();
        let sampler = BruteForceSampler::new(&model, &lincomb, cfg.n, scenario)?;
        brute = Some(brute_force_batch(
            &sampler,
            &spec,
            cfg.risk_level,
            cfg.b_draws,
            derive_seed(cfg.seed, "brute"),
        )?);
        brute_seconds = Some(t.elapsed().as_secs_f64());
    }

    let (primary, other) = match &fast {
        Some(f) => (f, brute.as_ref()),
        None => (brute.as_ref().expect("brute force ran"), None),
    };
    let quantities = laws
        .iter()
        .map(|l| record(&l.name, l, primary, other))
        .collect();
    let report = DiagnosticsReport {
        scenario: format!("{:?}", cfg.scenario).to_lowercase(),
        n: cfg.n,
        p: cfg.p(),
        c_effective: cfg.effective_c(),
        b_draws: cfg.b_draws,
        portfolio: spec,
        covariance_route: cfg.covariance_route,
        representation_valid,
        diagnosed_batch: if fast.is_some() {
            "stochastic_representation"
        } else {
            "brute_force"
        }
        .into(),
        quantities,
        fast_path_seconds: fast_seconds,
        brute_force_seconds: brute_seconds,
        runtime_seconds: start.elapsed().as_secs_f64(),
        warnings,
    };
    Ok(ExperimentOutput {
        config: cfg.clone(),
        model,
        laws,
        xi,
        omega,
        fast,
        brute,
        report,
    })
}
