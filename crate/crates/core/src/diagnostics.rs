//! Distributional diagnostics: Kolmogorov-Smirnov statistics, reference
//! CDFs, QQ regressions and moment summaries.

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Effective sample size: `n` for one sample, `n₁n₂/(n₁+n₂)` for two.
    pub effective_n: f64,
    pub p_value: f64,
}

impl KsResult {
    fn new(statistic: f64, effective_n: f64) -> Self {
        KsResult {
            statistic,
            effective_n,
            p_value: kolmogorov_survival(effective_n.sqrt() * statistic),
        }
    }

    /// Whether the statistic stays below the asymptotic critical value at `alpha`.
    pub fn passes(&self, alpha: f64) -> bool {
        self.statistic < ks_critical_value(self.effective_n, alpha)
    }
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        // The alternating series converges slowly here and the value is 1 to
        // double precision anyway.
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `x` with `P(K > x) = alpha`.
pub fn kolmogorov_quantile(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_survival(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Asymptotic critical value of the KS statistic at level `alpha`.
pub fn ks_critical_value(effective_n: f64, alpha: f64) -> f64 {
    kolmogorov_quantile(alpha) / effective_n.sqrt()
}

fn sorted_finite(xs: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample statistic `sup |F_n − F|` against a continuous CDF. Non-finite
/// values are dropped.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let v = sorted_finite(xs);
    let n = v.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult::new(d, n)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let (a, b) = (sorted_finite(a), sorted_finite(b));
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let (naf, nbf) = (na as f64, nb as f64);
    KsResult::new(d, naf * nbf / (naf + nbf))
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn normal_quantile(q: f64) -> f64 {
    Normal::standard().inverse_cdf(q)
}

pub fn chi2_cdf(dof: f64, x: f64) -> Result<f64> {
    let law = ChiSquared::new(dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(law.cdf(x))
}

/// CDF of the noncentral F law with `(d1, d2)` degrees of freedom and
/// noncentrality `nc`, as a Poisson mixture of regularized incomplete betas.
pub fn noncentral_f_cdf(d1: f64, d2: f64, nc: f64, x: f64) -> Result<f64> {
    if !(d1 > 0.0 && d2 > 0.0 && nc >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noncentral F needs d1, d2 > 0 and nc >= 0, got ({d1}, {d2}, {nc})"
        )));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let y = d1 * x / (d1 * x + d2);
    let half = nc / 2.0;
    let term = |j: f64| -> f64 {
        let log_w = -half + j * half.max(f64::MIN_POSITIVE).ln() - ln_gamma(j + 1.0);
        let w = if nc == 0.0 {
            if j == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            log_w.exp()
        };
        w * beta_reg(d1 / 2.0 + j, d2 / 2.0, y)
    };
    // Sum outwards from the Poisson mode until the weights are negligible.
    let mode = half.floor();
    let mut total = term(mode);
    let mut j = mode + 1.0;
    loop {
        let t = term(j);
        total += t;
        if (t < 1e-16 && j > half) || j > mode + 10_000.0 {
            break;
        }
        j += 1.0;
    }
    let mut j = mode - 1.0;
    while j >= 0.0 {
        let t = term(j);
        total += t;
        if t < 1e-16 {
            break;
        }
        j -= 1.0;
    }
    Ok(total.clamp(0.0, 1.0))
}

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Blom plotting position `(i − 3/8)/(B + 1/4)` for 1-based `i`.
pub fn blom_position(i: usize, b: usize) -> f64 {
    (i as f64 - 0.375) / (b as f64 + 0.25)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QqFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Sorted sample against standard normal quantiles at the Blom positions.
pub fn qq_points(xs: &[f64]) -> Vec<(f64, f64)> {
    let v = sorted_finite(xs);
    let b = v.len();
    v.into_iter()
        .enumerate()
        .map(|(i, x)| (x, normal_quantile(blom_position(i + 1, b))))
        .collect()
}

/// Least-squares line of the order statistics on the normal quantiles.
pub fn qq_fit(xs: &[f64]) -> QqFit {
    fit_points(&qq_points(xs))
}

/// Least-squares line through `(empirical, theoretical)` pairs, regressing
/// the empirical value on the theoretical one.
pub fn fit_points(points: &[(f64, f64)]) -> QqFit {
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.1).sum::<f64>() / m;
    let my = points.iter().map(|p| p.0).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(y, x) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    QqFit {
        slope,
        intercept: my - slope * mx,
    }
}

/// Mean, unbiased variance and standard error of the mean over the finite
/// entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let variance = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    Moments {
        count: n,
        mean,
        variance,
        std_error: (variance / n as f64).sqrt(),
    }
}

/// Sample covariance of the columns of `draws` (rows are draws).
pub fn empirical_covariance(draws: &DMatrix<f64>) -> DMatrix<f64> {
    let (b, d) = draws.shape();
    let mean = draws.row_mean();
    let mut centered = draws.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let mut cov = crate::linalg::gram(&centered) / (b as f64 - 1.0);
    debug_assert_eq!(cov.nrows(), d);
    crate::linalg::symmetrize(&mut cov);
    cov
}

/// Relative error of entry `(i, j)` of `emp` against `target`: diagonal
/// entries relative to themselves, off-diagonal entries relative to
/// `√(target_ii·target_jj)`.
pub fn covariance_relative_error(
    emp: &DMatrix<f64>,
    target: &DMatrix<f64>,
    i: usize,
    j: usize,
) -> f64 {
    let scale = (target[(i, i)] * target[(j, j)]).sqrt();
    (emp[(i, j)] - target[(i, j)]).abs() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn kolmogorov_reference_points() {
        assert!((kolmogorov_quantile(0.05) - 1.3581).abs() < 1e-4);
        assert!((kolmogorov_quantile(0.01) - 1.6276).abs() < 1e-4);
        assert!((kolmogorov_survival(1.0) - 0.26999967).abs() < 1e-6);
    }

    #[test]
    fn normal_sample_passes_and_shifted_fails() {
        let mut rng = substream(1, 0);
        let xs: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let ks = ks_one_sample(&xs, normal_cdf);
        assert!(ks.p_value > 0.001);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.2).collect();
        assert!(ks_one_sample(&shifted, normal_cdf).p_value < 1e-6);
        let two = ks_two_sample(&xs, &shifted);
        assert!(!two.passes(0.01));
    }

    #[test]
    fn two_sample_identical_is_zero() {
        let xs = [1.0, 2.0, 3.0, 3.0, 5.0];
        assert_eq!(ks_two_sample(&xs, &xs).statistic, 0.0);
        let ys = [10.0, 11.0];
        assert_eq!(ks_two_sample(&xs, &ys).statistic, 1.0);
    }

    #[test]
    fn noncentral_f_reduces_to_central() {
        // Central F(4, 10) at its median-ish point against the beta form.
        let x = 0.9;
        let y = 4.0 * x / (4.0 * x + 10.0);
        let central = beta_reg(2.0, 5.0, y);
        assert!((noncentral_f_cdf(4.0, 10.0, 0.0, x).unwrap() - central).abs() < 1e-14);
        let shifted = noncentral_f_cdf(4.0, 10.0, 3.0, x).unwrap();
        assert!(shifted < central);
        assert!((noncentral_f_cdf(4.0, 10.0, 300.0, 1e6).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn chi2_median() {
        assert!((chi2_cdf(2.0, 2.0 * 2f64.ln()).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn qq_of_normal_sample_is_diagonal() {
        let mut rng = substream(2, 0);
        let xs: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let fit = qq_fit(&xs);
        assert!((0.97..=1.03).contains(&fit.slope), "{fit:?}");
        assert!(fit.intercept.abs() < 0.05);
        let scaled: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let fit2 = qq_fit(&scaled);
        assert!((fit2.slope - 2.0 * fit.slope).abs() < 1e-12);
    }

    #[test]
    fn blom_positions_are_symmetric() {
        let b = 11;
        for i in 1..=b {
            assert!((blom_position(i, b) + blom_position(b + 1 - i, b) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn covariance_of_known_rows() {
        let d = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        let c = empirical_covariance(&d);
        let v = 5.0 / 3.0;
        assert!((c[(0, 0)] - v).abs() < 1e-14 && (c[(0, 1)] - 2.0 * v).abs() < 1e-14);
        assert_eq!(covariance_relative_error(&c, &c, 0, 1), 0.0);
    }
}
