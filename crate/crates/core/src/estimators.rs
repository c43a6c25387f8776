//! Estimators computed from an observed return sample: the plug-in
//! quantities, their high-dimensional corrections, plug-in estimates of the
//! limit covariances, confidence ellipsoids and the dual test.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::asymptotics::{omega_lg_consistent_cov, CovarianceRoute, LimitParameters};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SymEigen};
use crate::model::{
    characteristics, FrontierQuantities, Lambda, LinearCombination, PopulationModel,
    PortfolioCharacteristics, PortfolioSpec, ProjectedQuantities,
};

/// Sample mean, sample covariance (denominator `n − 1`) and the plug-in
/// frontier quantities derived from them.
#[derive(Debug, Clone)]
pub struct SampleEstimates {
    pub n: usize,
    pub model: PopulationModel,
    pub frontier: FrontierQuantities,
}

impl SampleEstimates {
    pub fn p(&self) -> usize {
        self.model.dim()
    }

    pub fn mu_hat(&self) -> &DVector<f64> {
        self.model.mu()
    }

    pub fn sigma_hat(&self) -> &DMatrix<f64> {
        self.model.sigma()
    }

    /// The plug-in statistics of the linear combination `L`.
    pub fn statistics(&self, lincomb: &LinearCombination) -> Result<PlugInStatistics> {
        let proj = ProjectedQuantities::from_model(&self.model, &self.frontier, lincomb)?;
        Ok(PlugInStatistics::from_projected(&proj, self.n, self.p()))
    }
}

/// Sample mean and sample covariance with denominator `n − 1`.
pub fn sample_moments(returns: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = returns.shape();
    if n < 2 {
        return Err(Error::InsufficientSample { n, p });
    }
    if returns.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "returns contain non-finite entries".into(),
        ));
    }
    let mu = DVector::from_fn(p, |j, _| returns.column(j).mean());
    let mut centered = returns.clone();
    for j in 0..p {
        let m = mu[j];
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let mut sigma = crate::linalg::gram(&centered) / (n as f64 - 1.0);
    symmetrize(&mut sigma);
    Ok((mu, sigma))
}

/// `n × p` returns (rows are periods) to sample estimates.
pub fn sample_estimates(returns: &DMatrix<f64>) -> Result<SampleEstimates> {
    let (n, p) = returns.shape();
    if n <= p + 2 {
        return Err(Error::InsufficientSample { n, p });
    }
    let (mu, sigma) = sample_moments(returns)?;
    let model = PopulationModel::new(mu, sigma).map_err(|e| match e {
        Error::SingularCovariance { .. } => Error::SingularSampleCovariance,
        other => other,
    })?;
    let frontier = model.frontier();
    Ok(SampleEstimates { n, model, frontier })
}

/// `(V̂, R̂, ŝ, θ̂, η̂, LQ̂Lᵀ)` from a sample of size `n` in dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlugInStatistics {
    pub n: usize,
    pub p: usize,
    pub v_hat: f64,
    pub r_hat: f64,
    pub s_hat: f64,
    pub theta_hat: DVector<f64>,
    pub eta_hat: DVector<f64>,
    pub lql_hat: DMatrix<f64>,
}

impl PlugInStatistics {
    pub fn from_projected(proj: &ProjectedQuantities, n: usize, p: usize) -> Self {
        PlugInStatistics {
            n,
            p,
            v_hat: proj.v_gmv,
            r_hat: proj.r_gmv,
            s_hat: proj.s,
            theta_hat: proj.theta.clone(),
            eta_hat: proj.eta.clone(),
            lql_hat: proj.lql.clone(),
        }
    }

    pub fn k(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn c(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    pub fn lambda(&self) -> Lambda {
        Lambda::new(self.r_hat, self.v_hat, self.s_hat)
    }

    /// Plug-in `L ŵ_g = θ̂ + g(R̂, V̂, ŝ)·η̂`.
    pub fn lw(&self, spec: &PortfolioSpec) -> Result<DVector<f64>> {
        let g = spec.g(self.lambda())?;
        Ok(&self.theta_hat + &self.eta_hat * g)
    }
}

/// How `ŝ` is corrected for its high-dimensional bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeCorrection {
    /// `ŝ_c = (n−p)/n·(ŝ − p/(p+n))`.
    #[default]
    Reference,
    /// Inverts the finite-n centering `(s + p/n)(1 − 1/n)/(1 − p/n + 2/n)`.
    ExactCentering,
}

impl SlopeCorrection {
    pub fn apply(self, s_hat: f64, n: usize, p: usize) -> f64 {
        let (nf, pf) = (n as f64, p as f64);
        let c = pf / nf;
        match self {
            SlopeCorrection::Reference => (nf - pf) / nf * (s_hat - pf / (pf + nf)),
            SlopeCorrection::ExactCentering => s_hat * (1.0 - c + 2.0 / nf) / (1.0 - 1.0 / nf) - c,
        }
    }
}

/// Consistent estimates of `(V, R, θ, s, η, LQLᵀ)`. When `ŝ_c ≤ 0` the
/// `η`-dependent fields are NaN and `slope_valid` is false.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistentEstimates {
    pub n: usize,
    pub p: usize,
    pub v_c: f64,
    pub r_c: f64,
    pub s_c: f64,
    pub theta_c: DVector<f64>,
    pub eta_c: DVector<f64>,
    /// `(1 − p/n)·LQ̂Lᵀ`.
    pub lql_c: DMatrix<f64>,
    pub slope_valid: bool,
    pub correction: SlopeCorrection,
}

pub fn consistent_estimates(
    stats: &PlugInStatistics,
    correction: SlopeCorrection,
) -> Result<ConsistentEstimates> {
    let (n, p) = (stats.n, stats.p);
    if p == 0 || n <= p {
        return Err(Error::InsufficientSample { n, p });
    }
    let c = stats.c();
    let s_c = correction.apply(stats.s_hat, n, p);
    let slope_valid = s_c > 0.0;
    let eta_c = if slope_valid {
        &stats.eta_hat * ((s_c + c) / s_c)
    } else {
        log::warn!("consistent slope estimate {s_c:e} is not positive");
        DVector::from_element(stats.k(), f64::NAN)
    };
    Ok(ConsistentEstimates {
        n,
        p,
        v_c: stats.v_hat / (1.0 - c),
        r_c: stats.r_hat,
        s_c,
        theta_c: stats.theta_hat.clone(),
        eta_c,
        lql_c: &stats.lql_hat * (1.0 - c),
        slope_valid,
        correction,
    })
}

impl ConsistentEstimates {
    pub fn c(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    pub fn lambda(&self) -> Lambda {
        Lambda::new(self.r_c, self.v_c, self.s_c)
    }

    /// `L ŵ_{g;c} = θ̂ + g(R̂_c, V̂_c, ŝ_c)·η̂_c`.
    pub fn lw(&self, spec: &PortfolioSpec) -> Result<DVector<f64>> {
        if matches!(spec, PortfolioSpec::Gmv) {
            return Ok(self.theta_c.clone());
        }
        if !self.slope_valid {
            return Err(Error::NonpositiveSlopeEstimate(self.s_c));
        }
        let g = spec.g(self.lambda())?;
        Ok(&self.theta_c + &self.eta_c * g)
    }

    /// `h(R̂_c, V̂_c, ŝ_c)` for the six characteristics.
    pub fn characteristics(
        &self,
        spec: &PortfolioSpec,
        level: f64,
    ) -> Result<PortfolioCharacteristics> {
        if !self.slope_valid && !matches!(spec, PortfolioSpec::Gmv) {
            return Err(Error::NonpositiveSlopeEstimate(self.s_c));
        }
        characteristics(spec, self.lambda(), level)
    }

    pub fn limit_parameters(&self) -> LimitParameters {
        LimitParameters {
            r: self.r_c,
            v: self.v_c,
            s: self.s_c,
            theta: self.theta_c.clone(),
            eta: self.eta_c.clone(),
            lql: self.lql_c.clone(),
        }
    }
}

fn floor_spectrum(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    symmetrize(&mut m);
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularOmega);
    }
    let eig = SymEigen::new(&m)?;
    let top = eig.max_value();
    if !(top > 0.0) || eig.min_value() < -1e-8 * top {
        return Err(Error::SingularOmega);
    }
    let floor = 1e-12 * top;
    if eig.min_value() >= floor {
        return Ok(m);
    }
    Ok(eig.map(|l| l.max(floor)))
}

/// Plug-in estimate of the limit covariance of `L ŵ_{g;c}`, with the
/// spectrum floored at `1e−12·λ_max`. Materially indefinite estimates are
/// rejected rather than repaired.
pub fn omega_hat_plugin(
    spec: &PortfolioSpec,
    est: &ConsistentEstimates,
    route: CovarianceRoute,
) -> Result<DMatrix<f64>> {
    let raw = if matches!(spec, PortfolioSpec::Gmv) {
        &est.lql_c * est.v_c
    } else {
        if !est.slope_valid {
            return Err(Error::NonpositiveSlopeEstimate(est.s_c));
        }
        omega_lg_consistent_cov(spec, &est.limit_parameters(), est.c(), route)?
    };
    floor_spectrum(raw)
}

/// The quoted EU estimate
/// `((1−c)/(ŝ_c+c) + (ŝ_c+c)γ⁻¹)γ⁻¹ + V̂_c)(1−c)LQ̂Lᵀ + γ⁻²{…}η̂_cη̂_cᵀ`,
/// evaluated as written.
pub fn omega_hat_eu_display(gamma: f64, est: &ConsistentEstimates) -> Result<DMatrix<f64>> {
    if !est.slope_valid {
        return Err(Error::NonpositiveSlopeEstimate(est.s_c));
    }
    let c = est.c();
    let s = est.s_c;
    let gi = 1.0 / gamma;
    let sc = s + c;
    let coef_g = ((1.0 - c) / sc + sc * gi) * gi + est.v_c;
    let coef_eta = gi
        * gi
        * (2.0 * (1.0 - c) * c.powi(3) / (sc * sc)
            + 4.0 * (1.0 - c) * c * s * (s + 2.0 * c) / (sc * sc)
            + 2.0 * (1.0 - c) * c * c * sc * sc / (s * s)
            - s * s);
    Ok(&est.lql_c * coef_g + &est.eta_c * est.eta_c.transpose() * coef_eta)
}

/// `{ω : (n−p)(center − ω)ᵀΩ̂⁻¹(center − ω) ≤ χ²_{k;1−β}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRegion {
    pub center: DVector<f64>,
    /// `(n − p)·Ω̂⁻¹`
    pub shape: DMatrix<f64>,
    pub level: f64,
    pub chi2_quantile: f64,
}

/// `χ²_{k;q}`, the `q`-quantile of the chi-square law with `k` degrees of freedom.
pub fn chi2_quantile(k: usize, q: f64) -> Result<f64> {
    let law = ChiSquared::new(k as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(law.inverse_cdf(q))
}

impl ConfidenceRegion {
    pub fn new(
        center: DVector<f64>,
        omega_hat: &DMatrix<f64>,
        n: usize,
        p: usize,
        beta: f64,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta = {beta} must lie in (0, 1)"
            )));
        }
        let k = center.len();
        if omega_hat.nrows() != k || omega_hat.ncols() != k {
            return Err(Error::Dimension(format!("omega must be {k}x{k}")));
        }
        let eig = SymEigen::new(omega_hat)?;
        if !(eig.min_value() > 0.0) {
            return Err(Error::SingularOmega);
        }
        let shape = eig.inverse() * (n - p) as f64;
        Ok(ConfidenceRegion {
            center,
            shape,
            level: 1.0 - beta,
            chi2_quantile: chi2_quantile(k, 1.0 - beta)?,
        })
    }

    /// Region for `L w_g` from consistent estimates.
    pub fn for_weights(
        spec: &PortfolioSpec,
        est: &ConsistentEstimates,
        route: CovarianceRoute,
        beta: f64,
    ) -> Result<Self> {
        let omega = omega_hat_plugin(spec, est, route)?;
        ConfidenceRegion::new(est.lw(spec)?, &omega, est.n, est.p, beta)
    }

    /// `(n−p)(center − r)ᵀΩ̂⁻¹(center − r)`.
    pub fn statistic(&self, r: &DVector<f64>) -> f64 {
        let d = &self.center - r;
        d.dot(&(&self.shape * &d))
    }

    pub fn contains(&self, r: &DVector<f64>) -> bool {
        self.statistic(r) <= self.chi2_quantile
    }

    /// Half-widths of the axis-aligned bounding box of the ellipsoid.
    pub fn half_widths(&self) -> Option<DVector<f64>> {
        let inv = self.shape.clone().try_inverse()?;
        Some(inv.diagonal().map(|d| (d * self.chi2_quantile).sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOutcome {
    pub reject: bool,
    pub statistic: f64,
    pub quantile: f64,
}

/// Tests `H₀: L w_g = r` by asking whether `r` lies outside the region.
pub fn test_weights(region: &ConfidenceRegion, r: &DVector<f64>) -> TestOutcome {
    let statistic = region.statistic(r);
    TestOutcome {
        reject: !(statistic <= region.chi2_quantile),
        statistic,
        quantile: region.chi2_quantile,
    }
}

/// Reads a returns matrix (rows are periods, columns assets) from CSV. A
/// first row that does not parse as numbers is taken as a header.
pub fn read_returns_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Config(format!("row {}: {e}", i + 1))),
        }
    }
    let p = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || p == 0 {
        return Err(Error::Config("returns file holds no data".into()));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(Error::Config(format!(
            "data row {} has {} fields, expected {p}",
            i + 1,
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}
