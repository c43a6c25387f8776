//! Limit laws as `n, p → ∞` with `p/n → c ∈ (0, 1)`.
//!
//! Every law is reported for the √(n−p)-scaled deviation from a finite-n
//! centering. Stacked quantities are ordered `(V̂, R̂, θ̂, ŝ, η̂)`.
//!
//! Two routes are offered for the covariances. [`CovarianceRoute::Displayed`]
//! evaluates the closed-form expressions term by term as they are usually
//! quoted. [`CovarianceRoute::Representation`] propagates the limiting
//! normal representation ([`limit_loadings`]) through the first-order
//! expansion of each estimator. The two agree on most blocks; where they do
//! not, the representation route is the one reproduced by simulation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::standard_normal_vector;
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SymEigen};
use crate::model::{
    characteristic_with_gradient, Characteristic, Lambda, PortfolioSpec, ProjectedQuantities,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceRoute {
    /// Closed-form covariance expressions evaluated as written.
    #[default]
    Displayed,
    /// Covariances propagated from the limiting normal representation.
    Representation,
}

/// Sample size and dimension; `c = p/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub n: usize,
    pub p: usize,
}

impl Dimensions {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if p == 0 || n <= p {
            return Err(Error::InsufficientSample { n, p });
        }
        Ok(Dimensions { n, p })
    }

    pub fn c(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    /// `√(n − p)`.
    pub fn scale(&self) -> f64 {
        ((self.n - self.p) as f64).sqrt()
    }
}

/// `√(n−p)(estimate − center) → N(0, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticLaw {
    pub center: DVector<f64>,
    pub scale: f64,
    pub cov: DMatrix<f64>,
}

#[derive(Serialize)]
struct AsymptoticLawJson<'a> {
    center: Vec<f64>,
    scale: &'a str,
    cov: Vec<Vec<f64>>,
}

impl AsymptoticLaw {
    pub fn new(center: DVector<f64>, scale: f64, mut cov: DMatrix<f64>) -> Self {
        symmetrize(&mut cov);
        AsymptoticLaw { center, scale, cov }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Asymptotic standard deviation of component `i` on the original scale.
    pub fn sd(&self, i: usize) -> f64 {
        self.cov[(i, i)].sqrt() / self.scale
    }

    /// `√(n−p)(x − center_i)/√cov_ii`.
    pub fn standardize(&self, i: usize, x: f64) -> f64 {
        (x - self.center[i]) / self.sd(i)
    }

    /// Smallest eigenvalue of `cov` relative to its spectral radius.
    pub fn min_eigenvalue_ratio(&self) -> Result<f64> {
        let eig = SymEigen::new(&self.cov)?;
        let top = eig.values.amax();
        Ok(if top > 0.0 {
            eig.min_value() / top
        } else {
            0.0
        })
    }

    /// Eigenvalue floor `−1e−10·λ_max`.
    pub fn is_psd(&self) -> Result<bool> {
        Ok(self.min_eigenvalue_ratio()? >= -1e-10)
    }

    pub fn to_json(&self) -> String {
        let k = self.dim();
        let raw = AsymptoticLawJson {
            center: self.center.iter().copied().collect(),
            scale: "sqrt(n-p)",
            cov: (0..k)
                .map(|i| (0..k).map(|j| self.cov[(i, j)]).collect())
                .collect(),
        };
        serde_json::to_string(&raw).expect("plain numbers serialize")
    }
}

/// `λ = (R_GMV, (1−c)V_GMV, (s+c)/(1−c))`, the almost-sure limit of
/// `(R̂, V̂, ŝ)`.
pub fn limit_lambda(lam: Lambda, c: f64) -> Lambda {
    Lambda::new(lam.r, (1.0 - c) * lam.v, (lam.s + c) / (1.0 - c))
}

/// The estimated, limiting and population evaluation points together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub lambda_hat: Option<Lambda>,
    pub lambda_limit: Lambda,
    pub lambda_population: Lambda,
    pub c: f64,
}

impl LambdaPoint {
    pub fn new(population: Lambda, c: f64) -> Result<Self> {
        check_c(c)?;
        Ok(LambdaPoint {
            lambda_hat: None,
            lambda_limit: limit_lambda(population, c),
            lambda_population: population,
            c,
        })
    }

    pub fn with_estimate(mut self, lambda_hat: Lambda) -> Self {
        self.lambda_hat = Some(lambda_hat);
        self
    }
}

fn check_c(c: f64) -> Result<()> {
    if c.is_finite() && (0.0..1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::Domain {
            kind: "concentration ratio",
            detail: format!("c = {c} must lie in [0, 1)"),
        })
    }
}

/// `(R, V, s, θ, η, LQLᵀ)` at which a covariance is evaluated. Unlike
/// [`ProjectedQuantities`] this carries no consistency requirement, so
/// estimates can be plugged in.
#[derive(Debug, Clone)]
pub struct LimitParameters {
    pub r: f64,
    pub v: f64,
    pub s: f64,
    pub theta: DVector<f64>,
    pub eta: DVector<f64>,
    pub lql: DMatrix<f64>,
}

impl LimitParameters {
    pub fn from_projected(proj: &ProjectedQuantities) -> Self {
        LimitParameters {
            r: proj.r_gmv,
            v: proj.v_gmv,
            s: proj.s,
            theta: proj.theta.clone(),
            eta: proj.eta.clone(),
            lql: proj.lql.clone(),
        }
    }

    pub fn k(&self) -> usize {
        self.eta.len()
    }

    pub fn lambda(&self) -> Lambda {
        Lambda::new(self.r, self.v, self.s)
    }

    fn eta_outer(&self) -> DMatrix<f64> {
        &self.eta * self.eta.transpose()
    }
}

/// Index of each block in the stacked `(V̂, R̂, θ̂, ŝ, η̂)` vector.
#[derive(Debug, Clone, Copy)]
pub struct StackLayout {
    k: usize,
}

impl StackLayout {
    pub fn new(k: usize) -> Self {
        StackLayout { k }
    }
    pub fn len(&self) -> usize {
        2 * self.k + 3
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn v(&self) -> usize {
        0
    }
    pub fn r(&self) -> usize {
        1
    }
    pub fn theta(&self, j: usize) -> usize {
        2 + j
    }
    pub fn s(&self) -> usize {
        2 + self.k
    }
    pub fn eta(&self, j: usize) -> usize {
        3 + self.k + j
    }

    /// Names in stack order: `v_hat, r_hat, theta_hat_1.., s_hat, eta_hat_1..`.
    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["v_hat".to_string(), "r_hat".into()];
        out.extend((1..=self.k).map(|j| format!("theta_hat_{j}")));
        out.push("s_hat".into());
        out.extend((1..=self.k).map(|j| format!("eta_hat_{j}")));
        out
    }
}

/// Finite-n centering of `(V̂, R̂, θ̂, ŝ, η̂)`.
pub fn joint_center(par: &LimitParameters, dims: Dimensions) -> DVector<f64> {
    let (n, cn) = (dims.n as f64, dims.c());
    let k = par.k();
    let lay = StackLayout::new(k);
    let mut center = DVector::zeros(lay.len());
    center[lay.v()] = (1.0 - cn) / (1.0 - 1.0 / n) * par.v;
    center[lay.r()] = par.r;
    center[lay.s()] = (par.s + cn) * (1.0 - 1.0 / n) / (1.0 - cn + 2.0 / n);
    for j in 0..k {
        center[lay.theta(j)] = par.theta[j];
        center[lay.eta(j)] = par.s / (par.s + cn) * par.eta[j];
    }
    center
}

/// Variance of the limit of `√(n−p)(ŝ − center)`.
pub fn xi_ss(s: f64, c: f64) -> f64 {
    2.0 * (c + 2.0 * s) / (1.0 - c) + 2.0 * (s + c).powi(2) / (1.0 - c).powi(2)
}

/// Limit covariance of `η̂`.
pub fn xi_eta_eta(par: &LimitParameters, c: f64) -> DMatrix<f64> {
    let s = par.s;
    let sc = s + c;
    &par.lql * ((s + 1.0) / (sc * sc))
        - par.eta_outer() * (s * s * (2.0 * c * (1.0 - c) + sc * sc) / sc.powi(4))
}

/// `Cov(ŝ, η̂)` in the quoted closed form, `2s(2c − s + 4μᵀAμ)/(s+c)²·η`.
pub fn xi_s_eta_displayed(par: &LimitParameters, mu_a_mu: f64, c: f64) -> DVector<f64> {
    let s = par.s;
    &par.eta * (2.0 * s * (2.0 * c - s + 4.0 * mu_a_mu) / (s + c).powi(2))
}

/// `Cov(ŝ, η̂)` implied by the limiting representation, `−2s²/(s+c)²·η`;
/// the `μᵀAμ` contributions of the two shared normals cancel.
pub fn xi_s_eta_representation(par: &LimitParameters, c: f64) -> DVector<f64> {
    let s = par.s;
    &par.eta * (-2.0 * s * s / (s + c).powi(2))
}

fn xi_closed_form(par: &LimitParameters, c: f64, s_eta: &DVector<f64>) -> DMatrix<f64> {
    let k = par.k();
    let lay = StackLayout::new(k);
    let (v, s) = (par.v, par.s);
    let mut xi = DMatrix::zeros(lay.len(), lay.len());
    xi[(lay.v(), lay.v())] = 2.0 * v * v * (1.0 - c).powi(2);
    xi[(lay.r(), lay.r())] = v * (1.0 + s);
    xi[(lay.s(), lay.s())] = xi_ss(s, c);
    let ee = xi_eta_eta(par, c);
    for i in 0..k {
        let rt = v * s * par.eta[i];
        xi[(lay.r(), lay.theta(i))] = rt;
        xi[(lay.theta(i), lay.r())] = rt;
        xi[(lay.s(), lay.eta(i))] = s_eta[i];
        xi[(lay.eta(i), lay.s())] = s_eta[i];
        for j in 0..k {
            xi[(lay.theta(i), lay.theta(j))] = v * par.lql[(i, j)];
            xi[(lay.eta(i), lay.eta(j))] = ee[(i, j)];
        }
    }
    xi
}

/// Loading matrix `B` of the limiting representation: the √(n−p)-scaled
/// deviations of `(V̂, R̂, θ̂, ŝ, η̂)` converge to `B u` with
/// `u = (u₁, u₂, u₃, u₄, u₅, u₆, u₇, u₈)` standard normal, `u₃, u₆, u₈` of
/// length `k`. `B` is `(2k+3) × (3k+5)`.
pub fn limit_loadings(proj: &ProjectedQuantities, c: f64) -> Result<DMatrix<f64>> {
    check_c(c)?;
    let k = proj.k();
    let lay = StackLayout::new(k);
    let (v, s, m) = (proj.v_gmv, proj.s, proj.mu_a_mu);
    let sc = s + c;
    let oc = 1.0 - c;
    let eta = &proj.eta;
    let eta_outer = eta * eta.transpose();

    let g_eig = SymEigen::new(&proj.lql)?;
    let g_inv_sqrt = g_eig.inv_sqrt();
    let h = &proj.lql - &eta_outer * (s * s / sc);
    let h_sqrt = SymEigen::new(&h)?.sqrt();

    // Column offsets of u₁ … u₈.
    let (u1, u2, u3) = (0, 1, 2);
    let (u4, u5, u6) = (2 + k, 3 + k, 4 + k);
    let (u7, u8) = (4 + 2 * k, 5 + 2 * k);

    let mut b = DMatrix::zeros(lay.len(), 3 * k + 5);
    let sv = v.sqrt();
    b[(lay.v(), u1)] = 2f64.sqrt() * oc * v;
    b[(lay.r(), u4)] = sv * oc.sqrt();
    b[(lay.r(), u5)] = sv * sc.sqrt();

    let kappa = (2.0 * oc * (c + 2.0 * m)).sqrt();
    b[(lay.s(), u2)] = kappa / oc;
    let s_u3 = g_inv_sqrt.tr_mul(eta) * (2.0 * s * oc.sqrt() / oc);
    b[(lay.s(), u7)] = 2f64.sqrt() * sc / oc;

    let eta_u3 = (&proj.lql - &eta_outer * (2.0 * s * s / sc)) * &g_inv_sqrt * (oc.sqrt() / sc);
    for i in 0..k {
        b[(lay.theta(i), u5)] = sv * s / sc.sqrt() * eta[i];
        b[(lay.s(), u3 + i)] = s_u3[i];
        b[(lay.eta(i), u2)] = -s * kappa / (sc * sc) * eta[i];
        for j in 0..k {
            b[(lay.theta(i), u6 + j)] = sv * h_sqrt[(i, j)];
            b[(lay.eta(i), u3 + j)] = eta_u3[(i, j)];
            b[(lay.eta(i), u8 + j)] = h_sqrt[(i, j)] / sc.sqrt();
        }
    }
    Ok(b)
}

/// One draw from the limiting representation of the scaled deviations.
pub fn limit_representation_draw<R: Rng + ?Sized>(
    loadings: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    loadings * standard_normal_vector(rng, loadings.ncols())
}

/// Joint limit law of `(V̂, R̂, θ̂, ŝ, η̂)`.
pub fn xi_matrix(
    proj: &ProjectedQuantities,
    dims: Dimensions,
    route: CovarianceRoute,
) -> Result<AsymptoticLaw> {
    let c = dims.c();
    let cov = xi_cov(proj, c, route)?;
    let par = LimitParameters::from_projected(proj);
    Ok(AsymptoticLaw::new(
        joint_center(&par, dims),
        dims.scale(),
        cov,
    ))
}

pub fn xi_cov(proj: &ProjectedQuantities, c: f64, route: CovarianceRoute) -> Result<DMatrix<f64>> {
    check_c(c)?;
    let par = LimitParameters::from_projected(proj);
    Ok(match route {
        CovarianceRoute::Displayed => {
            xi_closed_form(&par, c, &xi_s_eta_displayed(&par, proj.mu_a_mu, c))
        }
        CovarianceRoute::Representation => {
            let b = limit_loadings(proj, c)?;
            &b * b.transpose()
        }
    })
}

/// Closed-form joint covariance with the representation's `Cov(ŝ, η̂)`;
/// equals `B Bᵀ` and needs no `μᵀAμ`.
pub fn xi_cov_representation(par: &LimitParameters, c: f64) -> DMatrix<f64> {
    xi_closed_form(par, c, &xi_s_eta_representation(par, c))
}

fn eval_g(spec: &PortfolioSpec, lam: Lambda) -> Result<(f64, [f64; 3])> {
    spec.g_with_gradient(lam).and_then(|(g, d)| {
        if g.is_finite() && d.iter().all(|x| x.is_finite()) {
            Ok((g, d))
        } else {
            Err(Error::Domain {
                kind: "portfolio function",
                detail: format!("g or its gradient is not finite at {lam:?}"),
            })
        }
    })
}

fn check_slope(s: f64, c: f64) -> Result<()> {
    if s + c > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateSlope(s))
    }
}

/// `coefG·LQLᵀ + coefη·ηηᵀ` for the plug-in weights, quoted closed form,
/// with `(g, g₁, g₂, g₃)` evaluated at the limit point.
fn omega_displayed(par: &LimitParameters, c: f64, g: f64, d: [f64; 3]) -> DMatrix<f64> {
    let (s, v) = (par.s, par.v);
    let [g1, g2, g3] = d;
    let sc = s + c;
    let oc = 1.0 - c;
    let coef_g = (oc / sc + g) * g / sc + v;
    let dd = g3 / oc - g / sc;
    let coef_eta = s
        * s
        * (2.0 * oc * oc * v * v / (sc * sc) * g2
            + dd * dd * 2.0 * oc * c / (sc * sc)
            + 4.0 * oc / (sc * sc) * (g * dd + s * dd * dd)
            + v * oc / (sc * sc) * g1 * g1
            + v / sc * g1
            + 2.0 / oc * g3 * g3
            - g * g / (sc * sc));
    &par.lql * coef_g + par.eta_outer() * coef_eta
}

/// The consistent-weights counterpart, `g` evaluated at the population point.
fn omega_consistent_displayed(par: &LimitParameters, c: f64, g: f64, d: [f64; 3]) -> DMatrix<f64> {
    let (s, v) = (par.s, par.v);
    let [g1, g2, g3] = d;
    let sc = s + c;
    let oc = 1.0 - c;
    let coef_g = (oc / sc + sc / s * g) * g / s + v;
    let dd = g3 * sc / s - g / s;
    let coef_eta = s
        * s
        * (2.0 * oc * v * v / (s * sc) * g2
            + dd * dd * 2.0 * oc * c / (sc * sc)
            + 4.0 * oc / (sc * sc) * (sc / s * g * dd + s * dd * dd)
            + v * oc / (s * s) * g1 * g1
            + v / s * g1
            + 2.0 * oc * sc * sc / (s * s) * g3 * g3
            - g * g / (s * s));
    &par.lql * coef_g + par.eta_outer() * coef_eta
}

/// Jacobian of `θ̂ + g(R̂, V̂, ŝ)η̂` with respect to the stacked quantities.
fn weights_jacobian(par: &LimitParameters, c: f64, g: f64, d: [f64; 3]) -> DMatrix<f64> {
    let k = par.k();
    let lay = StackLayout::new(k);
    let a = par.s / (par.s + c);
    let [g1, g2, g3] = d;
    let mut j = DMatrix::zeros(k, lay.len());
    for i in 0..k {
        j[(i, lay.v())] = g2 * a * par.eta[i];
        j[(i, lay.r())] = g1 * a * par.eta[i];
        j[(i, lay.s())] = g3 * a * par.eta[i];
        j[(i, lay.theta(i))] = 1.0;
        j[(i, lay.eta(i))] = g;
    }
    j
}

/// Jacobian of `θ̂ + g(R̂, V̂/(1−c), ŝ_c)·(ŝ_c + c)/ŝ_c·η̂` with
/// `ŝ_c = (1−c)ŝ − c`, at the population point.
fn consistent_weights_jacobian(par: &LimitParameters, c: f64, g: f64, d: [f64; 3]) -> DMatrix<f64> {
    let k = par.k();
    let lay = StackLayout::new(k);
    let s = par.s;
    let sc = s + c;
    let [g1, g2, g3] = d;
    let ds = (1.0 - c) * (g3 - g * c / (s * sc));
    let mut j = DMatrix::zeros(k, lay.len());
    for i in 0..k {
        j[(i, lay.v())] = g2 / (1.0 - c) * par.eta[i];
        j[(i, lay.r())] = g1 * par.eta[i];
        j[(i, lay.s())] = ds * par.eta[i];
        j[(i, lay.theta(i))] = 1.0;
        j[(i, lay.eta(i))] = g * sc / s;
    }
    j
}

fn sandwich(j: &DMatrix<f64>, xi: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = j * xi * j.transpose();
    symmetrize(&mut out);
    out
}

/// Limit covariance of the plug-in `L ŵ_g`.
pub fn omega_lg_cov(
    spec: &PortfolioSpec,
    par: &LimitParameters,
    c: f64,
    route: CovarianceRoute,
) -> Result<DMatrix<f64>> {
    check_c(c)?;
    check_slope(par.s, c)?;
    let lam = limit_lambda(par.lambda(), c);
    let (g, d) = eval_g(spec, lam)?;
    Ok(match route {
        CovarianceRoute::Displayed => omega_displayed(par, c, g, d),
        CovarianceRoute::Representation => sandwich(
            &weights_jacobian(par, c, g, d),
            &xi_cov_representation(par, c),
        ),
    })
}

/// Limit law of the plug-in `L ŵ_g`, centered at `θ + s·g(λ)/(s + p/n)·η`.
pub fn omega_lg(
    spec: &PortfolioSpec,
    proj: &ProjectedQuantities,
    dims: Dimensions,
    route: CovarianceRoute,
) -> Result<AsymptoticLaw> {
    let c = dims.c();
    let par = LimitParameters::from_projected(proj);
    let cov = omega_lg_cov(spec, &par, c, route)?;
    let g = eval_g(spec, limit_lambda(par.lambda(), c))?.0;
    let center = &par.theta + &par.eta * (par.s * g / (par.s + c));
    Ok(AsymptoticLaw::new(center, dims.scale(), cov))
}

/// Quoted closed form for the EU portfolio,
/// `(((1−c)/(s+c) + γ⁻¹(s+c)/(1−c))γ⁻¹/(1−c) + V)LQLᵀ + (1−2c)γ⁻²s²/(1−c)²·ηηᵀ`.
pub fn omega_eu_closed_form(gamma: f64, par: &LimitParameters, c: f64) -> DMatrix<f64> {
    let (s, v) = (par.s, par.v);
    let gi = 1.0 / gamma;
    let oc = 1.0 - c;
    let coef_g = ((oc / (s + c)) + gi * (s + c) / oc) * gi / oc + v;
    let coef_eta = (1.0 - 2.0 * c) * gi * gi * s * s / (oc * oc);
    &par.lql * coef_g + par.eta_outer() * coef_eta
}

/// Limit covariance of the consistent weights `L ŵ_{g;c}`.
pub fn omega_lg_consistent_cov(
    spec: &PortfolioSpec,
    par: &LimitParameters,
    c: f64,
    route: CovarianceRoute,
) -> Result<DMatrix<f64>> {
    check_c(c)?;
    if !(par.s > 0.0) {
        return Err(Error::DegenerateSlope(par.s));
    }
    let (g, d) = eval_g(spec, par.lambda())?;
    Ok(match route {
        CovarianceRoute::Displayed => omega_consistent_displayed(par, c, g, d),
        CovarianceRoute::Representation => sandwich(
            &consistent_weights_jacobian(par, c, g, d),
            &xi_cov_representation(par, c),
        ),
    })
}

/// Limit law of `L ŵ_{g;c}`, centered at the population `L w_g`.
pub fn omega_lg_consistent(
    spec: &PortfolioSpec,
    proj: &ProjectedQuantities,
    dims: Dimensions,
    route: CovarianceRoute,
) -> Result<AsymptoticLaw> {
    let par = LimitParameters::from_projected(proj);
    let cov = omega_lg_consistent_cov(spec, &par, dims.c(), route)?;
    Ok(AsymptoticLaw::new(proj.lw(spec)?, dims.scale(), cov))
}

/// `diag(Ξ_RVs)` in the order `(R, V, s)`.
pub fn xi_rvs_diagonal(lam: Lambda, c: f64) -> [f64; 3] {
    [
        lam.v * (1.0 + lam.s),
        2.0 * lam.v * lam.v * (1.0 - c).powi(2),
        xi_ss(lam.s, c),
    ]
}

/// Coefficients of the consistent characteristics, `(V(1+s), 2V², 2s² + 4s + 2c)`.
pub fn xi_rvs_consistent_diagonal(lam: Lambda, c: f64) -> [f64; 3] {
    let s = lam.s;
    [
        lam.v * (1.0 + s),
        2.0 * lam.v * lam.v,
        2.0 * s * s + 4.0 * s + 2.0 * c,
    ]
}

/// A characteristic of one frontier portfolio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicSpec {
    pub portfolio: PortfolioSpec,
    pub which: Characteristic,
}

fn gradient_sum(
    items: &[CharacteristicSpec],
    at: Lambda,
    level: f64,
    weights: [f64; 3],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let q = items.len();
    let mut values = DVector::zeros(q);
    let mut grads = Vec::with_capacity(q);
    for (i, it) in items.iter().enumerate() {
        let (h, d) = characteristic_with_gradient(&it.portfolio, it.which, at, level)?;
        if !h.is_finite() || d.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain {
                kind: "portfolio characteristic",
                detail: format!("{} is not differentiable at {at:?}", it.which.name()),
            });
        }
        values[i] = h;
        grads.push(d);
    }
    let cov = DMatrix::from_fn(q, q, |i, j| {
        (0..3).map(|l| weights[l] * grads[i][l] * grads[j][l]).sum()
    });
    Ok((values, cov))
}

/// Limit law of plug-in characteristics `h(R̂, V̂, ŝ)`, centered at `h` of
/// the limit point. Gradients are taken there; the diagonal `Ξ_RVs` is
/// evaluated at the population point.
pub fn xi_h(
    items: &[CharacteristicSpec],
    lam: Lambda,
    dims: Dimensions,
    level: f64,
) -> Result<AsymptoticLaw> {
    let c = dims.c();
    let at = limit_lambda(lam, c);
    let (values, cov) = gradient_sum(items, at, level, xi_rvs_diagonal(lam, c))?;
    Ok(AsymptoticLaw::new(values, dims.scale(), cov))
}

/// Limit covariance of plug-in characteristics at concentration `c`.
pub fn xi_h_cov(
    items: &[CharacteristicSpec],
    lam: Lambda,
    c: f64,
    level: f64,
) -> Result<DMatrix<f64>> {
    check_c(c)?;
    let at = limit_lambda(lam, c);
    Ok(gradient_sum(items, at, level, xi_rvs_diagonal(lam, c))?.1)
}

/// Limit law of consistent characteristics, centered at `h(λ₀)`.
pub fn xi_h_consistent(
    items: &[CharacteristicSpec],
    lam: Lambda,
    dims: Dimensions,
    level: f64,
) -> Result<AsymptoticLaw> {
    let (values, cov) = gradient_sum(items, lam, level, xi_rvs_consistent_diagonal(lam, dims.c()))?;
    Ok(AsymptoticLaw::new(values, dims.scale(), cov))
}

pub fn xi_h_consistent_cov(
    items: &[CharacteristicSpec],
    lam: Lambda,
    c: f64,
    level: f64,
) -> Result<DMatrix<f64>> {
    check_c(c)?;
    Ok(gradient_sum(items, lam, level, xi_rvs_consistent_diagonal(lam, c))?.1)
}

/// Bounds `(m, M)` of the regularity diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityBounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for RegularityBounds {
    fn default() -> Self {
        RegularityBounds {
            lower: 1e-6,
            upper: 1e6,
        }
    }
}

/// Checks `m ≤ μᵀΣ⁻¹μ, 1ᵀΣ⁻¹1, lᵢᵀΣ⁻¹lᵢ ≤ M` and returns one message per
/// violation. These are diagnostics only.
pub fn check_regularity(proj: &ProjectedQuantities, bounds: RegularityBounds) -> Vec<String> {
    let mut checks = vec![
        (
            "mu' Sigma^-1 mu".to_string(),
            proj.s + proj.r_gmv * proj.r_gmv / proj.v_gmv,
        ),
        ("1' Sigma^-1 1".to_string(), 1.0 / proj.v_gmv),
    ];
    for i in 0..proj.k() {
        checks.push((
            format!("l_{}' Sigma^-1 l_{}", i + 1, i + 1),
            proj.lql[(i, i)] + proj.theta[i] * proj.theta[i] / proj.v_gmv,
        ));
    }
    let mut out = Vec::new();
    for (name, value) in checks {
        if !(value >= bounds.lower && value <= bounds.upper) {
            let msg = format!(
                "{name} = {value:e} outside [{:e}, {:e}]",
                bounds.lower, bounds.upper
            );
            log::warn!("{msg}");
            out.push(msg);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn proj() -> ProjectedQuantities {
        ProjectedQuantities::new(
            Lambda::new(0.05, 0.4, 0.8),
            DVector::from_vec(vec![0.3, -0.2]),
            DVector::from_vec(vec![0.4, 0.25]),
            DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 1.1]),
        )
        .unwrap()
    }

    #[test]
    fn xi_ss_at_zero_concentration() {
        assert!((xi_ss(0.02, 0.0) - 0.0808).abs() < 1e-15);
    }

    #[test]
    fn loadings_reproduce_closed_form_except_s_eta() {
        let pr = proj();
        let par = LimitParameters::from_projected(&pr);
        for &c in &[0.1, 0.5, 0.9] {
            let b = limit_loadings(&pr, c).unwrap();
            let bb = &b * b.transpose();
            let closed = xi_cov_representation(&par, c);
            assert!((&bb - &closed).amax() < 1e-12, "c = {c}");
            let displayed = xi_cov(&pr, c, CovarianceRoute::Displayed).unwrap();
            let lay = StackLayout::new(2);
            for i in 0..lay.len() {
                for j in 0..lay.len() {
                    let s_eta =
                        (i == lay.s() && j >= lay.eta(0)) || (j == lay.s() && i >= lay.eta(0));
                    if !s_eta {
                        assert!((bb[(i, j)] - displayed[(i, j)]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn v_block_is_isolated() {
        let pr = proj();
        let xi = xi_cov(&pr, 0.5, CovarianceRoute::Displayed).unwrap();
        let lay = StackLayout::new(2);
        for j in 1..lay.len() {
            assert_eq!(xi[(lay.v(), j)], 0.0);
        }
        assert_eq!(xi[(lay.r(), lay.s())], 0.0);
    }

    #[test]
    fn gmv_omega_is_v_times_lql() {
        let pr = proj();
        let par = LimitParameters::from_projected(&pr);
        for route in [CovarianceRoute::Displayed, CovarianceRoute::Representation] {
            let om = omega_lg_cov(&PortfolioSpec::Gmv, &par, 0.4, route).unwrap();
            assert!((om - &pr.lql * pr.v_gmv).amax() < 1e-14);
            let omc = omega_lg_consistent_cov(&PortfolioSpec::Gmv, &par, 0.4, route).unwrap();
            assert!((omc - &pr.lql * pr.v_gmv).amax() < 1e-14);
        }
    }

    #[test]
    fn eu_generic_matches_closed_form() {
        let pr = proj();
        let par = LimitParameters::from_projected(&pr);
        let gamma = 7.0;
        let spec = PortfolioSpec::ExpectedUtility { gamma };
        for &c in &[0.05, 0.5, 0.8] {
            let lam = limit_lambda(par.lambda(), c);
            let (g, [_, _, g3]) = spec.g_with_gradient(lam).unwrap();
            assert!((g3 / (1.0 - c) - g / (par.s + c)).abs() <= 1e-15);
            let om = omega_lg_cov(&spec, &par, c, CovarianceRoute::Displayed).unwrap();
            assert!((om - omega_eu_closed_form(gamma, &par, c)).amax() < 1e-12);
        }
    }

    #[test]
    fn eu_representation_route_closed_form() {
        // (γ⁻²(1+s)/(1−c)² + V)·LQLᵀ + s²γ⁻²/(1−c)²·ηηᵀ
        let pr = proj();
        let par = LimitParameters::from_projected(&pr);
        let gamma = 3.0;
        let spec = PortfolioSpec::ExpectedUtility { gamma };
        let c = 0.3;
        let om = omega_lg_cov(&spec, &par, c, CovarianceRoute::Representation).unwrap();
        let gi2 = 1.0 / (gamma * gamma);
        let oc2 = (1.0 - c) * (1.0 - c);
        let expected = &pr.lql * (gi2 * (1.0 + pr.s) / oc2 + pr.v_gmv)
            + &pr.eta * pr.eta.transpose() * (pr.s * pr.s * gi2 / oc2);
        assert!((om - expected).amax() < 1e-12);
    }

    #[test]
    fn representation_omega_equals_propagated_loadings() {
        let pr = proj();
        let par = LimitParameters::from_projected(&pr);
        let spec = PortfolioSpec::MinVaR { alpha: 0.95 };
        let c = 0.4;
        let lam = limit_lambda(par.lambda(), c);
        let (g, d) = spec.g_with_gradient(lam).unwrap();
        let jb = weights_jacobian(&par, c, g, d) * limit_loadings(&pr, c).unwrap();
        let om = omega_lg_cov(&spec, &par, c, CovarianceRoute::Representation).unwrap();
        assert!((&jb * jb.transpose() - om).amax() < 1e-12);
    }

    #[test]
    fn single_characteristic_variances() {
        let lam = Lambda::new(0.1, 0.3, 0.5);
        let dims = Dimensions::new(1000, 500).unwrap();
        let item = |which| CharacteristicSpec {
            portfolio: PortfolioSpec::Gmv,
            which,
        };
        let law = xi_h(&[item(Characteristic::ExpectedReturn)], lam, dims, 0.95).unwrap();
        assert!((law.cov[(0, 0)] - lam.v * (1.0 + lam.s)).abs() < 1e-15);
        // Variance and slope entries use the population point; only the
        // gradients move to the limit.
        let law = xi_h(&[item(Characteristic::Variance)], lam, dims, 0.95).unwrap();
        assert!((law.cov[(0, 0)] - 2.0 * lam.v * lam.v * 0.25).abs() < 1e-15);
        let pair = [
            item(Characteristic::ExpectedReturn),
            item(Characteristic::Variance),
        ];
        let law = xi_h(&pair, lam, dims, 0.95).unwrap();
        assert_eq!(law.cov[(0, 1)], 0.0);
        let cons =
            xi_h_consistent(&[item(Characteristic::ExpectedReturn)], lam, dims, 0.95).unwrap();
        assert!((cons.cov[(0, 0)] - lam.v * (1.0 + lam.s)).abs() < 1e-15);
    }

    #[test]
    fn consistent_coefficients_are_rescaled_plug_in() {
        // (1−c)²·Ξ_ss equals 2s² + 4s + 2c.
        for &(s, c) in &[(0.3, 0.2), (2.0, 0.7), (0.05, 0.0)] {
            let lhs = (1.0 - c) * (1.0 - c) * xi_ss(s, c);
            assert!((lhs - (2.0 * s * s + 4.0 * s + 2.0 * c)).abs() < 1e-12);
        }
    }

    #[test]
    fn limit_draws_have_representation_covariance() {
        let pr = proj();
        let b = limit_loadings(&pr, 0.5).unwrap();
        let reps = 40_000;
        let mut rng = substream(1, 0);
        let d = b.nrows();
        let mut acc = DMatrix::<f64>::zeros(d, d);
        for _ in 0..reps {
            let x = limit_representation_draw(&b, &mut rng);
            acc += &x * x.transpose();
        }
        acc /= reps as f64;
        let target = &b * b.transpose();
        for i in 0..d {
            let rel = (acc[(i, i)] - target[(i, i)]).abs() / target[(i, i)];
            assert!(rel < 0.05, "entry {i}: {rel}");
        }
    }

    #[test]
    fn regularity_flags_out_of_range() {
        let pr = proj();
        assert!(check_regularity(&pr, RegularityBounds::default()).is_empty());
        let tight = RegularityBounds {
            lower: 10.0,
            upper: 20.0,
        };
        assert_eq!(check_regularity(&pr, tight).len(), 2 + pr.k());
    }

    #[test]
    fn law_json_shape() {
        let law = AsymptoticLaw::new(
            DVector::from_vec(vec![1.0]),
            2.0,
            DMatrix::from_element(1, 1, 3.0),
        );
        let v: serde_json::Value = serde_json::from_str(&law.to_json()).unwrap();
        assert_eq!(v["scale"], "sqrt(n-p)");
        assert_eq!(v["cov"][0][0], 3.0);
    }

    #[test]
    fn concentration_domain() {
        let pr = proj();
        assert!(matches!(
            xi_cov(&pr, 1.0, CovarianceRoute::Displayed),
            Err(Error::Domain { .. })
        ));
        assert!(LambdaPoint::new(pr.lambda(), 0.0).unwrap().lambda_limit == pr.lambda());
    }
}
