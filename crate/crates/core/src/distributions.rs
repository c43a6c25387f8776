//! Sampling primitives for the latent variables of the exact representations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};

fn check_dof(dof: f64) -> Result<()> {
    if dof > 0.0 && dof.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "degrees of freedom {dof} must be positive"
        )))
    }
}

/// Central χ² sampler with a fixed number of degrees of freedom.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquare {
    gamma: Gamma<f64>,
}

impl ChiSquare {
    pub fn new(dof: f64) -> Result<Self> {
        check_dof(dof)?;
        let gamma = Gamma::new(0.5 * dof, 2.0)
            .map_err(|e| Error::InvalidParameter(format!("chi-square({dof}): {e}")))?;
        Ok(ChiSquare { gamma })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.gamma.sample(rng)
    }
}

pub fn sample_chi2<R: Rng + ?Sized>(rng: &mut R, dof: f64) -> Result<f64> {
    Ok(ChiSquare::new(dof)?.sample(rng))
}

/// Noncentral χ² as a Poisson mixture: `χ²_{dof + 2J}` with `J ~ Poisson(nc/2)`.
pub fn sample_noncentral_chi2<R: Rng + ?Sized>(rng: &mut R, dof: f64, nc: f64) -> Result<f64> {
    check_dof(dof)?;
    if !(nc >= 0.0 && nc.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noncentrality {nc} must be nonnegative"
        )));
    }
    let j = if nc > 0.0 {
        Poisson::new(0.5 * nc)
            .map_err(|e| Error::InvalidParameter(format!("poisson({}): {e}", 0.5 * nc)))?
            .sample(rng)
    } else {
        0.0
    };
    sample_chi2(rng, dof + 2.0 * j)
}

/// `(χ²_{d1}(nc)/d1) / (χ²_{d2}/d2)`.
pub fn sample_noncentral_f<R: Rng + ?Sized>(rng: &mut R, d1: f64, d2: f64, nc: f64) -> Result<f64> {
    let num = sample_noncentral_chi2(rng, d1, nc)? / d1;
    let den = sample_chi2(rng, d2)? / d2;
    Ok(num / den)
}

pub fn sample_student_t<R: Rng + ?Sized>(rng: &mut R, dof: f64) -> Result<f64> {
    let z: f64 = rng.sample(StandardNormal);
    Ok(z / (sample_chi2(rng, dof)? / dof).sqrt())
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |_, _| rng.sample(StandardNormal))
}

/// `t_k(ν)` with identity scale: `N_k(0, I)·√(ν/χ²_ν)`.
pub fn sample_mv_t<R: Rng + ?Sized>(rng: &mut R, k: usize, dof: f64) -> Result<DVector<f64>> {
    let z = standard_normal_vector(rng, k);
    let w = sample_chi2(rng, dof)?;
    Ok(z * (dof / w).sqrt())
}

/// `N_k(0, S Sᵀ)` given a square root `S`.
pub fn sample_gaussian_vector<R: Rng + ?Sized>(
    rng: &mut R,
    cov_sqrt: &DMatrix<f64>,
) -> DVector<f64> {
    cov_sqrt * standard_normal_vector(rng, cov_sqrt.ncols())
}
