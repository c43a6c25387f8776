//! Reference sampler that simulates the full `n × p` return matrix and
//! computes the sample estimators from it.
//!
//! Returns are generated as `x = μ + C u` with `C Cᵀ = Σ`. The estimators
//! are evaluated in the whitened coordinates `u`, which is an algebraic
//! identity rather than an approximation: with `S_u` the sample covariance of
//! the `u`'s, `Σ̂⁻¹ = C⁻ᵀ S_u⁻¹ C⁻¹`, so every quadratic form the estimators
//! need is a Gram entry of `S_u^{-1/2}[C⁻¹1, C⁻¹μ + ū, C⁻¹Lᵀ]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::ChiSquare;
use crate::error::{Error, Result};
use crate::estimators::{sample_estimates, PlugInStatistics};
use crate::linalg::{gram, Cholesky};
use crate::model::{LinearCombination, PopulationModel, PortfolioSpec};
use crate::rng::substream;
use crate::sampler::{check_violations, DrawBatch, DrawRecord, JointDraw, Provenance};

/// Distribution of the return vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// `N_p(μ, Σ)`.
    Normal,
    /// Multivariate t with `dof` degrees of freedom, location `μ` and scale
    /// `(dof − 2)/dof·Σ`, so the covariance is `Σ`.
    StudentT { dof: f64 },
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Scenario::Normal => Ok(()),
            Scenario::StudentT { dof } if dof > 2.0 && dof.is_finite() => Ok(()),
            Scenario::StudentT { dof } => Err(Error::InvalidParameter(format!(
                "t degrees of freedom {dof} must exceed 2"
            ))),
        }
    }

    /// Whether the exact finite-sample representations apply.
    pub fn is_gaussian(&self) -> bool {
        matches!(self, Scenario::Normal)
    }
}

/// Simulates data sets and evaluates the estimators on them.
#[derive(Debug, Clone)]
pub struct BruteForceSampler {
    model: PopulationModel,
    lincomb: LinearCombination,
    n: usize,
    scenario: Scenario,
    /// `[C⁻¹1, C⁻¹μ, C⁻¹Lᵀ]`, `p × (k + 2)`.
    whitened: DMatrix<f64>,
    factor: DMatrix<f64>,
    radius: Option<ChiSquare>,
}

impl BruteForceSampler {
    pub fn new(
        model: &PopulationModel,
        lincomb: &LinearCombination,
        n: usize,
        scenario: Scenario,
    ) -> Result<Self> {
        let p = model.dim();
        scenario.validate()?;
        if n <= p + 2 {
            return Err(Error::InsufficientSample { n, p });
        }
        if lincomb.p() != p {
            return Err(Error::Dimension(format!(
                "L has {} columns but p = {p}",
                lincomb.p()
            )));
        }
        let k = lincomb.k();
        let cinv = model.whitening();
        let mut whitened = DMatrix::zeros(p, k + 2);
        whitened.set_column(0, &(&cinv * DVector::from_element(p, 1.0)));
        whitened.set_column(1, &(&cinv * model.mu()));
        whitened
            .columns_mut(2, k)
            .copy_from(&(&cinv * lincomb.matrix().transpose()));
        let radius = match scenario {
            Scenario::Normal => None,
            Scenario::StudentT { dof } => Some(ChiSquare::new(dof)?),
        };
        Ok(BruteForceSampler {
            model: model.clone(),
            lincomb: lincomb.clone(),
            n,
            scenario,
            whitened,
            factor: model.covariance_factor(),
            radius,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.model.dim()
    }

    pub fn k(&self) -> usize {
        self.lincomb.k()
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    /// `n × p` standardized innovations: rows i.i.d. with identity covariance.
    pub fn simulate_innovations<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let (n, p) = (self.n, self.p());
        let mut u = DMatrix::<f64>::from_fn(n, p, |_, _| rng.sample(StandardNormal));
        if let (Scenario::StudentT { dof }, Some(chi)) = (self.scenario, &self.radius) {
            for i in 0..n {
                let scale = ((dof - 2.0) / chi.sample(rng)).sqrt();
                u.row_mut(i).scale_mut(scale);
            }
        }
        u
    }

    /// Returns `x_i = μ + C u_i` for one simulated data set.
    pub fn simulate_returns<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        self.returns_from_innovations(&self.simulate_innovations(rng))
    }

    pub fn returns_from_innovations(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = u * self.factor.transpose();
        for mut row in x.row_iter_mut() {
            row += self.model.mu().transpose();
        }
        x
    }

    /// The plug-in statistics of the data set `μ + C u`, evaluated in
    /// whitened coordinates.
    pub fn statistics_from_innovations(&self, u: &DMatrix<f64>) -> Result<PlugInStatistics> {
        let (n, p, k) = (self.n, self.p(), self.k());
        let nf = n as f64;
        let ubar = DVector::from_fn(p, |j, _| u.column(j).mean());
        let mut s = gram(u);
        s.ger(-nf, &ubar, &ubar, 1.0);
        s /= nf - 1.0;
        let chol = Cholesky::new(&s).map_err(|_| Error::SingularSampleCovariance)?;

        let mut y = self.whitened.clone();
        {
            let mut col = y.column_mut(1);
            col += &ubar;
        }
        chol.solve_lower_in_place(&mut y);
        let h = y.tr_mul(&y);

        let h11 = h[(0, 0)];
        let h1b = h[(0, 1)];
        let hbb = h[(1, 1)];
        let v_hat = 1.0 / h11;
        let r_hat = h1b / h11;
        let s_hat = (hbb - h1b * h1b / h11).max(0.0);
        let la = DVector::from_fn(k, |i, _| h[(2 + i, 0)]);
        let lb = DVector::from_fn(k, |i, _| h[(2 + i, 1)]);
        let ll = h.view((2, 2), (k, k)).into_owned();
        let theta_hat = &la / h11;
        let lq_mu = &lb - &la * (h1b / h11);
        let eta_hat = if s_hat > crate::model::SLOPE_EPS {
            lq_mu / s_hat
        } else {
            DVector::zeros(k)
        };
        let mut lql_hat = ll - &la * la.transpose() / h11;
        crate::linalg::symmetrize(&mut lql_hat);
        Ok(PlugInStatistics {
            n,
            p,
            v_hat,
            r_hat,
            s_hat,
            theta_hat,
            eta_hat,
            lql_hat,
        })
    }

    /// The same statistics computed from the returns themselves through the
    /// general sample-estimator path. Much slower; kept as a cross-check.
    pub fn statistics_literal(&self, u: &DMatrix<f64>) -> Result<PlugInStatistics> {
        sample_estimates(&self.returns_from_innovations(u))?.statistics(&self.lincomb)
    }

    pub fn draw_statistics<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PlugInStatistics> {
        self.statistics_from_innovations(&self.simulate_innovations(rng))
    }

    pub fn draw_record<R: Rng + ?Sized>(
        &self,
        spec: &PortfolioSpec,
        level: f64,
        rng: &mut R,
    ) -> Result<DrawRecord> {
        let st = self.draw_statistics(rng)?;
        Ok(record_from_statistics(&st, spec, level))
    }
}

/// Packs plug-in statistics into a draw record. `f` has no counterpart
/// outside the stochastic representation and is left NaN.
pub fn record_from_statistics(
    st: &PlugInStatistics,
    spec: &PortfolioSpec,
    level: f64,
) -> DrawRecord {
    let joint = JointDraw {
        v_hat: st.v_hat,
        r_hat: st.r_hat,
        theta_hat: st.theta_hat.clone(),
        s_hat: st.s_hat,
        eta_hat: st.eta_hat.clone(),
        f: f64::NAN,
    };
    let lw = st
        .lw(spec)
        .unwrap_or_else(|_| DVector::from_element(st.k(), f64::NAN));
    DrawRecord::new(joint, lw, spec, level)
}

/// `b` simulated data sets; data set `i` uses substream `i` of `seed`.
pub fn brute_force_batch(
    sampler: &BruteForceSampler,
    spec: &PortfolioSpec,
    level: f64,
    b: usize,
    seed: u64,
) -> Result<DrawBatch> {
    spec.validate()?;
    let records: Result<Vec<DrawRecord>> = (0..b as u64)
        .into_par_iter()
        .map(|i| {
            sampler
                .draw_record(spec, level, &mut substream(seed, i))
                .map_err(|e| {
                    log::error!("data set {i}: {e}");
                    e
                })
        })
        .collect();
    let batch = DrawBatch::from_records(Provenance::BruteForce, seed, sampler.k(), records?);
    check_violations(&batch)?;
    Ok(batch)
}
