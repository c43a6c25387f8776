use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::asymptotics::CovarianceRoute;
use crate::brute_force::Scenario;
use crate::error::{Error, Result};
use crate::estimators::SlopeCorrection;
use crate::model::PortfolioSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    Normal,
    StudentT,
}

/// A share of the spectrum and the eigenvalue it carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenBlock {
    pub proportion: f64,
    pub value: f64,
}

/// Components of `μ` are i.i.d. uniform on `[low, high)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuLaw {
    pub low: f64,
    pub high: f64,
}

impl Default for MuLaw {
    fn default() -> Self {
        MuLaw {
            low: -0.2,
            high: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sink {
    DrawsCsv,
    QqCsv,
    ReportJson,
    LawsJson,
}

fn default_t_dof() -> f64 {
    10.0
}
fn default_n() -> usize {
    1000
}
fn default_c() -> f64 {
    0.5
}
fn default_gamma() -> f64 {
    20.0
}
fn default_lincomb() -> Vec<usize> {
    vec![0]
}
fn default_b() -> usize {
    5000
}
fn default_eigen() -> Vec<EigenBlock> {
    vec![
        EigenBlock {
            proportion: 0.2,
            value: 0.2,
        },
        EigenBlock {
            proportion: 0.4,
            value: 1.0,
        },
        EigenBlock {
            proportion: 0.4,
            value: 5.0,
        },
    ]
}
fn default_level() -> f64 {
    0.95
}
fn default_beta() -> f64 {
    0.05
}
fn default_outputs() -> Vec<Sink> {
    vec![
        Sink::DrawsCsv,
        Sink::QqCsv,
        Sink::ReportJson,
        Sink::LawsJson,
    ]
}

/// Simulation design. Every field has a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: ScenarioKind,
    #[serde(default = "default_t_dof")]
    pub t_dof: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_c")]
    pub c: f64,
    /// Risk aversion of the default EU portfolio.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Zero-based asset indices; each selects one row of `L`.
    #[serde(default = "default_lincomb")]
    pub lincomb: Vec<usize>,
    #[serde(default = "default_b")]
    pub b_draws: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mu_law: MuLaw,
    #[serde(default = "default_eigen")]
    pub eigen_spec: Vec<EigenBlock>,
    /// Defaults to EU with `gamma`.
    #[serde(default)]
    pub portfolio: Option<PortfolioSpec>,
    /// Confidence level of the quantile-based characteristics.
    #[serde(default = "default_level")]
    pub risk_level: f64,
    /// Significance level of the confidence regions.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub covariance_route: CovarianceRoute,
    #[serde(default)]
    pub slope_correction: SlopeCorrection,
    /// JSON `{"mu": [...], "sigma": [[...]]}` replacing the random population.
    #[serde(default)]
    pub population_file: Option<PathBuf>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Sink>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// `p = round(c·n)`.
    pub fn p(&self) -> usize {
        (self.c * self.n as f64).round() as usize
    }

    /// `p/n` after rounding.
    pub fn effective_c(&self) -> f64 {
        self.p() as f64 / self.n as f64
    }

    pub fn portfolio(&self) -> PortfolioSpec {
        self.portfolio
            .unwrap_or(PortfolioSpec::ExpectedUtility { gamma: self.gamma })
    }

    pub fn sampling_scenario(&self) -> Scenario {
        match self.scenario {
            ScenarioKind::Normal => Scenario::Normal,
            ScenarioKind::StudentT => Scenario::StudentT { dof: self.t_dof },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.c > 0.0 && self.c < 1.0) {
            return bad(format!("c = {} must lie in (0, 1)", self.c));
        }
        let p = self.p();
        if p < 2 || self.n <= p {
            return bad(format!("need 2 <= p < n, got p = {p}, n = {}", self.n));
        }
        if self.b_draws < 2 {
            return bad("b_draws must be at least 2".into());
        }
        if self.lincomb.is_empty() || self.lincomb.iter().any(|&a| a >= p) {
            return bad(format!("lincomb indices must be in 0..{p}"));
        }
        if !(self.mu_law.low < self.mu_law.high) {
            return bad("mu_law needs low < high".into());
        }
        let total: f64 = self.eigen_spec.iter().map(|b| b.proportion).sum();
        if self.eigen_spec.is_empty() || (total - 1.0).abs() > 1e-12 {
            return bad(format!("eigen_spec proportions sum to {total}, not 1"));
        }
        if self
            .eigen_spec
            .iter()
            .any(|b| !(b.value > 0.0 && b.proportion >= 0.0))
        {
            return bad("eigenvalues must be positive and proportions nonnegative".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta = {} must lie in (0, 1)", self.beta));
        }
        if !(self.risk_level > 0.5 && self.risk_level < 1.0) {
            return bad(format!(
                "risk_level = {} must lie in (0.5, 1)",
                self.risk_level
            ));
        }
        self.sampling_scenario()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.portfolio()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}
