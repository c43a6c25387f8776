//! Population model, frontier quantities, the portfolio family and the
//! portfolio characteristics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{max_asymmetry, SymEigen};

/// Slopes at or below this value are treated as a degenerate frontier.
pub const SLOPE_EPS: f64 = 1e-14;

/// Mean vector and covariance matrix of the asset returns.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    eigen: SymEigen,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PopulationModelJson {
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

impl PopulationModel {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let p = mu.len();
        if p < 2 {
            return Err(Error::Dimension(format!("need at least 2 assets, got {p}")));
        }
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(Error::Dimension(format!(
                "sigma is {}x{} but mu has length {p}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let asym = max_asymmetry(&sigma);
        if asym > 1e-10 {
            return Err(Error::NotSymmetric(asym));
        }
        if !mu.iter().chain(sigma.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite entry in mu or sigma".into(),
            ));
        }
        let eigen = SymEigen::new(&sigma)?;
        let (lo, hi) = (eigen.min_value(), eigen.max_value());
        if !(lo > 1e-12 * hi) {
            return Err(Error::SingularCovariance { min_eigenvalue: lo });
        }
        Ok(PopulationModel { mu, sigma, eigen })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn eigen(&self) -> &SymEigen {
        &self.eigen
    }

    /// `Σ⁻¹ b` through the stored eigendecomposition.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.eigen.solve_vec(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.eigen.solve(b)
    }

    /// A factor `C` with `C Cᵀ = Σ`, namely `U Λ^{1/2}`.
    pub fn covariance_factor(&self) -> DMatrix<f64> {
        let mut c = self.eigen.vectors.clone();
        for (j, &lam) in self.eigen.values.iter().enumerate() {
            c.column_mut(j).scale_mut(lam.sqrt());
        }
        c
    }

    /// `C⁻¹ = Λ^{-1/2} Uᵀ` for the factor returned by [`covariance_factor`](Self::covariance_factor).
    pub fn whitening(&self) -> DMatrix<f64> {
        let mut w = self.eigen.vectors.transpose();
        for (i, &lam) in self.eigen.values.iter().enumerate() {
            w.row_mut(i).scale_mut(1.0 / lam.sqrt());
        }
        w
    }

    pub fn frontier(&self) -> FrontierQuantities {
        frontier_quantities(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: PopulationModelJson = serde_json::from_str(text)?;
        let p = raw.mu.len();
        if raw.sigma.len() != p || raw.sigma.iter().any(|row| row.len() != p) {
            return Err(Error::Config(format!("sigma must be {p}x{p}")));
        }
        let sigma = DMatrix::from_fn(p, p, |i, j| raw.sigma[i][j]);
        PopulationModel::new(DVector::from_vec(raw.mu), sigma)
    }

    pub fn to_json(&self) -> String {
        let p = self.dim();
        let raw = PopulationModelJson {
            mu: self.mu.iter().copied().collect(),
            sigma: (0..p)
                .map(|i| (0..p).map(|j| self.sigma[(i, j)]).collect())
                .collect(),
        };
        serde_json::to_string(&raw).expect("plain numbers serialize")
    }
}

/// The five quantities that pin down the efficient frontier, plus `Q`.
#[derive(Debug, Clone)]
pub struct FrontierQuantities {
    pub v_gmv: f64,
    pub w_gmv: DVector<f64>,
    pub r_gmv: f64,
    pub s: f64,
    /// Self-financing direction `Qμ/s`; all NaN when `slope_valid` is false.
    pub v_sf: DVector<f64>,
    pub q: DMatrix<f64>,
    pub slope_valid: bool,
}

impl FrontierQuantities {
    pub fn lambda(&self) -> Lambda {
        Lambda::new(self.r_gmv, self.v_gmv, self.s)
    }
}

pub fn frontier_quantities(model: &PopulationModel) -> FrontierQuantities {
    let p = model.dim();
    let ones = DVector::from_element(p, 1.0);
    let a = model.solve(&ones);
    let b = model.solve(model.mu());
    let v_gmv = 1.0 / ones.dot(&a);
    let h1m = ones.dot(&b);
    let r_gmv = h1m * v_gmv;
    let w_gmv = &a * v_gmv;
    let q_mu = &b - &a * (h1m * v_gmv);
    let s = model.mu().dot(&q_mu).max(0.0);
    let mut q = model.eigen().inverse() - &a * a.transpose() * v_gmv;
    crate::linalg::symmetrize(&mut q);
    let slope_valid = s > SLOPE_EPS;
    let v_sf = if slope_valid {
        q_mu / s
    } else {
        DVector::from_element(p, f64::NAN)
    };
    FrontierQuantities {
        v_gmv,
        w_gmv,
        r_gmv,
        s,
        v_sf,
        q,
        slope_valid,
    }
}

/// The argument `(R_GMV, V_GMV, s)` of the portfolio functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambda {
    pub r: f64,
    pub v: f64,
    pub s: f64,
}

impl Lambda {
    pub fn new(r: f64, v: f64, s: f64) -> Self {
        Lambda { r, v, s }
    }
}

/// Sign used by the mean-variance row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MvSign {
    /// `g = μ0 − R_GMV`, so the portfolio's expected return equals `μ0`.
    #[default]
    TargetMinusReturn,
    /// `g = R_GMV − μ0`.
    ReturnMinusTarget,
}

/// One member of the efficient-frontier portfolio family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PortfolioSpec {
    #[serde(rename = "GMV")]
    Gmv,
    #[serde(rename = "MV")]
    MeanVariance {
        mu0: f64,
        #[serde(default)]
        sign: MvSign,
    },
    #[serde(rename = "EU")]
    ExpectedUtility { gamma: f64 },
    #[serde(rename = "T")]
    Tangency { rf: f64 },
    #[serde(rename = "SR")]
    SharpeRatio,
    #[serde(rename = "MVaR")]
    MinVaR { alpha: f64 },
    #[serde(rename = "MCVaR")]
    MinCVaR { alpha: f64 },
    #[serde(rename = "MVoR")]
    MaxVoR { alpha: f64, v0: f64 },
    #[serde(rename = "MCVoR")]
    MaxCVoR { alpha: f64, k0: f64 },
}

/// `z_α = Φ⁻¹(α)`.
pub fn z_alpha(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(alpha)
}

/// `k_α = exp(−z_α²/2) / (2π(1−α))`.
pub fn k_alpha(alpha: f64) -> f64 {
    let z = z_alpha(alpha);
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI * (1.0 - alpha))
}

fn domain(kind: &'static str, detail: String) -> Error {
    Error::Domain { kind, detail }
}

impl PortfolioSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PortfolioSpec::Gmv => "GMV",
            PortfolioSpec::MeanVariance { .. } => "MV",
            PortfolioSpec::ExpectedUtility { .. } => "EU",
            PortfolioSpec::Tangency { .. } => "T",
            PortfolioSpec::SharpeRatio => "SR",
            PortfolioSpec::MinVaR { .. } => "MVaR",
            PortfolioSpec::MinCVaR { .. } => "MCVaR",
            PortfolioSpec::MaxVoR { .. } => "MVoR",
            PortfolioSpec::MaxCVoR { .. } => "MCVoR",
        }
    }

    /// Checks the parameters that do not depend on the evaluation point.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let check_alpha = |alpha: f64| {
            if alpha > 0.5 && alpha < 1.0 {
                Ok(())
            } else {
                bad(format!("alpha = {alpha} must lie in (0.5, 1)"))
            }
        };
        match *self {
            PortfolioSpec::ExpectedUtility { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                bad(format!("gamma = {gamma} must be positive"))
            }
            PortfolioSpec::MeanVariance { mu0, .. } if !mu0.is_finite() => {
                bad("mu0 must be finite".into())
            }
            PortfolioSpec::Tangency { rf } if !rf.is_finite() => bad("rf must be finite".into()),
            PortfolioSpec::MinVaR { alpha } | PortfolioSpec::MinCVaR { alpha } => {
                check_alpha(alpha)
            }
            PortfolioSpec::MaxVoR { alpha, v0 } => {
                check_alpha(alpha)?;
                if v0 > 0.0 {
                    Ok(())
                } else {
                    bad(format!("v0 = {v0} must be positive"))
                }
            }
            PortfolioSpec::MaxCVoR { alpha, k0 } => {
                check_alpha(alpha)?;
                if k0.is_finite() {
                    Ok(())
                } else {
                    bad("k0 must be finite".into())
                }
            }
            _ => Ok(()),
        }
    }

    /// `g(R_GMV, V_GMV, s)`.
    pub fn g(&self, lam: Lambda) -> Result<f64> {
        Ok(self.g_with_gradient(lam)?.0)
    }

    /// `(∂g/∂R, ∂g/∂V, ∂g/∂s)`.
    pub fn gradient(&self, lam: Lambda) -> Result<[f64; 3]> {
        Ok(self.g_with_gradient(lam)?.1)
    }

    pub fn g_with_gradient(&self, lam: Lambda) -> Result<(f64, [f64; 3])> {
        let Lambda { r, v, s } = lam;
        match *self {
            PortfolioSpec::Gmv => Ok((0.0, [0.0; 3])),
            PortfolioSpec::MeanVariance { mu0, sign } => Ok(match sign {
                MvSign::TargetMinusReturn => (mu0 - r, [-1.0, 0.0, 0.0]),
                MvSign::ReturnMinusTarget => (r - mu0, [1.0, 0.0, 0.0]),
            }),
            PortfolioSpec::ExpectedUtility { gamma } => Ok((s / gamma, [0.0, 0.0, 1.0 / gamma])),
            PortfolioSpec::Tangency { rf } => ratio_form("tangency", v, s, r - rf),
            PortfolioSpec::SharpeRatio => ratio_form("Sharpe ratio", v, s, r),
            PortfolioSpec::MinVaR { alpha } => risk_form("MVaR", v, s, z_alpha(alpha)),
            PortfolioSpec::MinCVaR { alpha } => risk_form("MCVaR", v, s, k_alpha(alpha)),
            PortfolioSpec::MaxVoR { alpha, v0 } => {
                return_form("MVoR", r + v0, v, s, z_alpha(alpha))
            }
            PortfolioSpec::MaxCVoR { alpha, k0 } => {
                return_form("MCVoR", r + k0, v, s, k_alpha(alpha))
            }
        }
    }
}

/// `g = V s / d` with `d = R − r_f` (tangency) or `d = R` (Sharpe ratio).
fn ratio_form(kind: &'static str, v: f64, s: f64, d: f64) -> Result<(f64, [f64; 3])> {
    if d.abs() <= 1e-14 {
        return Err(domain(
            kind,
            format!("denominator R_GMV - r = {d:e} vanishes"),
        ));
    }
    let g = v * s / d;
    Ok((g, [-g / d, s / d, v / d]))
}

/// `g = s √(V / (q² − s))` for the minimum-risk rows, `q` being `z_α` or `k_α`.
fn risk_form(kind: &'static str, v: f64, s: f64, q: f64) -> Result<(f64, [f64; 3])> {
    let d = q * q - s;
    if !(d > 0.0) {
        return Err(domain(kind, format!("quantile^2 = {} <= s = {s}", q * q)));
    }
    if !(v > 0.0) {
        return Err(domain(kind, format!("V_GMV = {v} must be positive")));
    }
    let root = (v / d).sqrt();
    let g = s * root;
    let g2 = s / (2.0 * (v * d).sqrt());
    let g3 = root + 0.5 * s * root / d;
    Ok((g, [0.0, g2, g3]))
}

/// `g = (a s + √(q² s (a² + (s − q²) V))) / (q² − s)` for the value-of-return
/// rows, `a` being `R_GMV` plus the target.
fn return_form(kind: &'static str, a: f64, v: f64, s: f64, q: f64) -> Result<(f64, [f64; 3])> {
    let q2 = q * q;
    let d = q2 - s;
    if !(d > 0.0) {
        return Err(domain(kind, format!("quantile^2 = {q2} <= s = {s}")));
    }
    let rad = q2 * s * (a * a + (s - q2) * v);
    if !(rad > 0.0) {
        return Err(domain(
            kind,
            format!("square-root argument {rad:e} is not positive"),
        ));
    }
    let root = rad.sqrt();
    let num = a * s + root;
    let g = num / d;
    let rad_r = 2.0 * q2 * s * a;
    let rad_v = q2 * s * (s - q2);
    let rad_s = q2 * (a * a + (2.0 * s - q2) * v);
    let g1 = (s + rad_r / (2.0 * root)) / d;
    let g2 = (rad_v / (2.0 * root)) / d;
    let g3 = (a + rad_s / (2.0 * root)) / d + num / (d * d);
    Ok((g, [g1, g2, g3]))
}

/// `w = w_GMV + g·v`.
pub fn weights(spec: &PortfolioSpec, frontier: &FrontierQuantities) -> Result<DVector<f64>> {
    let g = spec.g(frontier.lambda())?;
    if g == 0.0 {
        return Ok(frontier.w_gmv.clone());
    }
    if !frontier.slope_valid {
        return Err(Error::DegenerateSlope(frontier.s));
    }
    Ok(&frontier.w_gmv + &frontier.v_sf * g)
}

/// The six characteristics of a frontier portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Characteristic {
    ExpectedReturn,
    Variance,
    ValueAtRisk,
    ConditionalValueAtRisk,
    ValueOfReturn,
    ConditionalValueOfReturn,
}

impl Characteristic {
    pub const ALL: [Characteristic; 6] = [
        Characteristic::ExpectedReturn,
        Characteristic::Variance,
        Characteristic::ValueAtRisk,
        Characteristic::ConditionalValueAtRisk,
        Characteristic::ValueOfReturn,
        Characteristic::ConditionalValueOfReturn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Characteristic::ExpectedReturn => "r_g",
            Characteristic::Variance => "v_g",
            Characteristic::ValueAtRisk => "var_g",
            Characteristic::ConditionalValueAtRisk => "cvar_g",
            Characteristic::ValueOfReturn => "vor_g",
            Characteristic::ConditionalValueOfReturn => "cvor_g",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioCharacteristics {
    pub r_g: f64,
    pub v_g: f64,
    pub var_g: f64,
    pub cvar_g: f64,
    pub vor_g: f64,
    pub cvor_g: f64,
}

impl PortfolioCharacteristics {
    pub fn get(&self, c: Characteristic) -> f64 {
        match c {
            Characteristic::ExpectedReturn => self.r_g,
            Characteristic::Variance => self.v_g,
            Characteristic::ValueAtRisk => self.var_g,
            Characteristic::ConditionalValueAtRisk => self.cvar_g,
            Characteristic::ValueOfReturn => self.vor_g,
            Characteristic::ConditionalValueOfReturn => self.cvor_g,
        }
    }

    pub fn nan() -> Self {
        PortfolioCharacteristics {
            r_g: f64::NAN,
            v_g: f64::NAN,
            var_g: f64::NAN,
            cvar_g: f64::NAN,
            vor_g: f64::NAN,
            cvor_g: f64::NAN,
        }
    }
}

/// A value and its gradient in `(R, V, s)`.
type WithGradient = (f64, [f64; 3]);

/// Expected return and variance of the portfolio together with their gradients.
fn mean_variance_parts(spec: &PortfolioSpec, lam: Lambda) -> Result<(WithGradient, WithGradient)> {
    let (g, [g1, g2, g3]) = spec.g_with_gradient(lam)?;
    let r_g = (lam.r + g, [1.0 + g1, g2, g3]);
    if g == 0.0 && g1 == 0.0 && g2 == 0.0 && g3 == 0.0 {
        return Ok((r_g, (lam.v, [0.0, 1.0, 0.0])));
    }
    if !(lam.s > SLOPE_EPS) {
        return Err(Error::DegenerateSlope(lam.s));
    }
    let s = lam.s;
    let v_g = (
        lam.v + g * g / s,
        [
            2.0 * g * g1 / s,
            1.0 + 2.0 * g * g2 / s,
            2.0 * g * g3 / s - g * g / (s * s),
        ],
    );
    Ok((r_g, v_g))
}

/// Characteristics at `λ`; `level` is the confidence level of the four
/// quantile-based measures.
pub fn characteristics(
    spec: &PortfolioSpec,
    lam: Lambda,
    level: f64,
) -> Result<PortfolioCharacteristics> {
    let ((r_g, _), (v_g, _)) = mean_variance_parts(spec, lam)?;
    let (z, k) = (z_alpha(level), k_alpha(level));
    let sd = v_g.sqrt();
    Ok(PortfolioCharacteristics {
        r_g,
        v_g,
        var_g: -r_g - z * sd,
        cvar_g: -r_g - k * sd,
        vor_g: r_g - z * sd,
        cvor_g: r_g - k * sd,
    })
}

/// Value and gradient in `(R, V, s)` of one characteristic.
pub fn characteristic_with_gradient(
    spec: &PortfolioSpec,
    which: Characteristic,
    lam: Lambda,
    level: f64,
) -> Result<(f64, [f64; 3])> {
    let ((r_g, dr), (v_g, dv)) = mean_variance_parts(spec, lam)?;
    let sd = v_g.sqrt();
    let (sign, q) = match which {
        Characteristic::ExpectedReturn => return Ok((r_g, dr)),
        Characteristic::Variance => return Ok((v_g, dv)),
        Characteristic::ValueAtRisk => (-1.0, z_alpha(level)),
        Characteristic::ConditionalValueAtRisk => (-1.0, k_alpha(level)),
        Characteristic::ValueOfReturn => (1.0, z_alpha(level)),
        Characteristic::ConditionalValueOfReturn => (1.0, k_alpha(level)),
    };
    let value = sign * r_g - q * sd;
    let mut grad = [0.0; 3];
    for i in 0..3 {
        grad[i] = sign * dr[i] - q * dv[i] / (2.0 * sd);
    }
    Ok((value, grad))
}

/// A `k × p` matrix selecting the linear combinations `L w` under study.
#[derive(Debug, Clone)]
pub struct LinearCombination {
    l: DMatrix<f64>,
}

impl LinearCombination {
    pub fn new(l: DMatrix<f64>) -> Result<Self> {
        let (k, p) = l.shape();
        if k == 0 || k + 1 >= p {
            return Err(Error::Dimension(format!(
                "need 1 <= k < p - 1, got k = {k}, p = {p}"
            )));
        }
        let sv = l.clone().singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        if !(lo > 1e-10 * hi) {
            return Err(Error::InvalidParameter(format!(
                "L must have full row rank {k}"
            )));
        }
        Ok(LinearCombination { l })
    }

    /// Rows selecting the given assets.
    pub fn select(p: usize, assets: &[usize]) -> Result<Self> {
        let mut l = DMatrix::zeros(assets.len(), p);
        for (row, &a) in assets.iter().enumerate() {
            if a >= p {
                return Err(Error::Dimension(format!(
                    "asset index {a} out of range for p = {p}"
                )));
            }
            l[(row, a)] = 1.0;
        }
        LinearCombination::new(l)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn k(&self) -> usize {
        self.l.nrows()
    }

    pub fn p(&self) -> usize {
        self.l.ncols()
    }
}

/// Everything the sampling laws of `L ŵ` depend on: the frontier scalars,
/// `θ = L w_GMV`, `η = L v`, `L Q Lᵀ` and `μᵀAμ`, where
/// `A = Q − QLᵀ(LQLᵀ)⁻¹LQ`.
#[derive(Debug, Clone)]
pub struct ProjectedQuantities {
    pub r_gmv: f64,
    pub v_gmv: f64,
    pub s: f64,
    pub theta: DVector<f64>,
    pub eta: DVector<f64>,
    pub lql: DMatrix<f64>,
    pub mu_a_mu: f64,
}

impl ProjectedQuantities {
    /// Builds the projection directly from its ingredients; `μᵀAμ` is implied
    /// as `s − s² ηᵀ(LQLᵀ)⁻¹η`.
    pub fn new(
        lam: Lambda,
        theta: DVector<f64>,
        eta: DVector<f64>,
        lql: DMatrix<f64>,
    ) -> Result<Self> {
        let k = theta.len();
        if eta.len() != k || lql.nrows() != k || lql.ncols() != k {
            return Err(Error::Dimension(
                "theta, eta and LQL' must share dimension k".into(),
            ));
        }
        if !(lam.v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "V_GMV = {} must be positive",
                lam.v
            )));
        }
        if !(lam.s >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "s = {} must be nonnegative",
                lam.s
            )));
        }
        let eig = SymEigen::new(&lql)?;
        if !(eig.min_value() > 1e-12 * eig.max_value()) {
            return Err(Error::NotPositiveDefinite);
        }
        let explained = lam.s * lam.s * eta.dot(&eig.solve_vec(&eta));
        let mu_a_mu = lam.s - explained;
        if mu_a_mu < -1e-10 * lam.s {
            return Err(Error::InvalidParameter(format!(
                "s^2 eta'(LQL')^-1 eta = {explained} exceeds s = {}",
                lam.s
            )));
        }
        Ok(ProjectedQuantities {
            r_gmv: lam.r,
            v_gmv: lam.v,
            s: lam.s,
            theta,
            eta,
            lql,
            mu_a_mu: mu_a_mu.max(0.0),
        })
    }

    pub fn from_model(
        model: &PopulationModel,
        frontier: &FrontierQuantities,
        lincomb: &LinearCombination,
    ) -> Result<Self> {
        if lincomb.p() != model.dim() {
            return Err(Error::Dimension(format!(
                "L has {} columns but p = {}",
                lincomb.p(),
                model.dim()
            )));
        }
        let l = lincomb.matrix();
        let theta = l * &frontier.w_gmv;
        // With a flat frontier `sη = LQμ` vanishes and η itself is immaterial.
        let eta = if frontier.slope_valid {
            l * &frontier.v_sf
        } else {
            DVector::zeros(lincomb.k())
        };
        let lam = if frontier.slope_valid {
            frontier.lambda()
        } else {
            Lambda::new(frontier.r_gmv, frontier.v_gmv, 0.0)
        };
        let sigma_inv_lt = model.solve_matrix(&l.transpose());
        let mut lql = l * sigma_inv_lt - &theta * theta.transpose() / frontier.v_gmv;
        crate::linalg::symmetrize(&mut lql);
        ProjectedQuantities::new(lam, theta, eta, lql).map_err(|e| match e {
            Error::NotPositiveDefinite => {
                Error::InvalidParameter("(L', mu, 1) must have full column rank k + 2".into())
            }
            other => other,
        })
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn lambda(&self) -> Lambda {
        Lambda::new(self.r_gmv, self.v_gmv, self.s)
    }

    /// Population value of `L w_g`.
    pub fn lw(&self, spec: &PortfolioSpec) -> Result<DVector<f64>> {
        let g = spec.g(self.lambda())?;
        Ok(&self.theta + &self.eta * g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_model() -> PopulationModel {
        PopulationModel::new(
            DVector::from_vec(vec![0.1, 0.2, 0.3]),
            DMatrix::identity(3, 3),
        )
        .unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_covariance_hand_values() {
        let f = identity_model().frontier();
        assert!(close(f.v_gmv, 1.0 / 3.0, 1e-14));
        assert!(f.w_gmv.iter().all(|&w| close(w, 1.0 / 3.0, 1e-14)));
        assert!(close(f.r_gmv, 0.2, 1e-14));
        assert!(close(f.s, 0.02, 1e-14));
        let expected = [-5.0, 0.0, 5.0];
        for (v, e) in f.v_sf.iter().zip(expected) {
            assert!(close(*v, e, 1e-10));
        }
        assert!(f.slope_valid);
    }

    #[test]
    fn zero_mean_flags_slope() {
        let m = PopulationModel::new(DVector::zeros(4), DMatrix::identity(4, 4)).unwrap();
        let f = m.frontier();
        assert_eq!(f.s, 0.0);
        assert!(!f.slope_valid);
        assert!(f.v_sf.iter().all(|x| x.is_nan()));
        assert_eq!(weights(&PortfolioSpec::Gmv, &f).unwrap(), f.w_gmv);
        let eu = PortfolioSpec::ExpectedUtility { gamma: 1.0 };
        assert!(weights(&eu, &f).is_ok());
        let mv = PortfolioSpec::MeanVariance {
            mu0: 0.1,
            sign: MvSign::default(),
        };
        assert!(matches!(weights(&mv, &f), Err(Error::DegenerateSlope(_))));
    }

    #[test]
    fn rejects_bad_covariance() {
        let mu = DVector::from_vec(vec![0.0, 0.0]);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            PopulationModel::new(mu.clone(), sing),
            Err(Error::SingularCovariance { .. })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            PopulationModel::new(mu, asym),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn g_values_by_hand() {
        let lam = Lambda::new(0.2, 1.0 / 3.0, 0.02);
        assert_eq!(PortfolioSpec::Gmv.g(lam).unwrap(), 0.0);
        let eu = PortfolioSpec::ExpectedUtility { gamma: 20.0 };
        assert!(close(eu.g(lam).unwrap(), 0.001, 1e-15));
        assert_eq!(eu.gradient(lam).unwrap(), [0.0, 0.0, 0.05]);
        assert!(close(
            PortfolioSpec::SharpeRatio.g(lam).unwrap(),
            1.0 / 30.0,
            1e-15
        ));
        let mv = PortfolioSpec::MeanVariance {
            mu0: 0.25,
            sign: MvSign::TargetMinusReturn,
        };
        assert!(close(mv.g(lam).unwrap(), 0.05, 1e-15));
        let mv_rev = PortfolioSpec::MeanVariance {
            mu0: 0.25,
            sign: MvSign::ReturnMinusTarget,
        };
        assert!(close(mv_rev.g(lam).unwrap(), -0.05, 1e-15));
    }

    #[test]
    fn risk_rows_need_quantile_above_slope() {
        let lam = Lambda::new(0.2, 1.0 / 3.0, 5.0);
        let e = PortfolioSpec::MinVaR { alpha: 0.95 }.g(lam).unwrap_err();
        assert!(e.to_string().contains("MVaR"));
        let t = PortfolioSpec::Tangency { rf: 0.2 };
        assert!(matches!(t.g(lam), Err(Error::Domain { .. })));
    }

    #[test]
    fn cvar_constant_uses_two_pi() {
        let z = z_alpha(0.95);
        assert!(close(z, 1.6448536269514722, 1e-12));
        let k = k_alpha(0.95);
        assert!(close(
            k,
            (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI * 0.05),
            1e-15
        ));
    }

    #[test]
    fn characteristics_by_hand() {
        let lam = Lambda::new(0.2, 1.0 / 3.0, 0.02);
        let gmv = characteristics(&PortfolioSpec::Gmv, lam, 0.95).unwrap();
        assert!(close(gmv.r_g, 0.2, 1e-15));
        assert!(close(gmv.v_g, 1.0 / 3.0, 1e-15));
        let z = z_alpha(0.95);
        assert!(close(gmv.var_g, -0.2 - z * (1.0f64 / 3.0).sqrt(), 1e-14));
        let eu =
            characteristics(&PortfolioSpec::ExpectedUtility { gamma: 20.0 }, lam, 0.95).unwrap();
        assert!(close(eu.r_g, 0.201, 1e-15));
        assert!(close(eu.v_g, 1.0 / 3.0 + 5e-5, 1e-15));
    }

    #[test]
    fn eu_weights_by_hand() {
        let f = identity_model().frontier();
        let w = weights(&PortfolioSpec::ExpectedUtility { gamma: 20.0 }, &f).unwrap();
        let expected = [1.0 / 3.0 - 0.005, 1.0 / 3.0, 1.0 / 3.0 + 0.005];
        for (a, b) in w.iter().zip(expected) {
            assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn json_round_trip() {
        let m = identity_model();
        let back = PopulationModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back.mu(), m.mu());
        assert_eq!(back.sigma(), m.sigma());
        assert!(PopulationModel::from_json(r#"{"mu":[1,2],"sigma":[[1,0]]}"#).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let s: PortfolioSpec = serde_json::from_str(r#"{"kind":"EU","gamma":20}"#).unwrap();
        assert_eq!(s, PortfolioSpec::ExpectedUtility { gamma: 20.0 });
        let s: PortfolioSpec = serde_json::from_str(r#"{"kind":"MV","mu0":0.1}"#).unwrap();
        assert_eq!(
            s,
            PortfolioSpec::MeanVariance {
                mu0: 0.1,
                sign: MvSign::TargetMinusReturn
            }
        );
        let s: PortfolioSpec = serde_json::from_str(r#"{"kind":"GMV"}"#).unwrap();
        assert_eq!(s, PortfolioSpec::Gmv);
    }

    #[test]
    fn linear_combination_checks() {
        assert!(LinearCombination::select(5, &[0]).is_ok());
        assert!(LinearCombination::select(3, &[0, 1]).is_err());
        let dup =
            DMatrix::from_row_slice(2, 5, &[1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(LinearCombination::new(dup).is_err());
    }

    #[test]
    fn projection_of_identity_model() {
        let m = PopulationModel::new(
            DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]),
            DMatrix::identity(4, 4),
        )
        .unwrap();
        let f = m.frontier();
        let lc = LinearCombination::select(4, &[0]).unwrap();
        let proj = ProjectedQuantities::from_model(&m, &f, &lc).unwrap();
        // Q = I − 11ᵀ/4, so LQLᵀ = 3/4.
        assert!(close(proj.lql[(0, 0)], 0.75, 1e-14));
        assert!(close(proj.theta[0], 0.25, 1e-14));
        assert!(close(proj.eta[0], f.v_sf[0], 1e-14));
        let direct = f.s - f.s * f.s * proj.eta[0] * proj.eta[0] / 0.75;
        assert!(close(proj.mu_a_mu, direct, 1e-14));
    }
}
