//! Exact finite-sample draws of the estimated frontier quantities, portfolio
//! weights and portfolio characteristics from their stochastic
//! representations.
//!
//! Each draw costs a handful of univariate variates and a few `k × k`
//! operations, independently of `p`: all matrix roots and inverses are either
//! precomputed once or come from the rank-one identities in [`crate::linalg`].

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    sample_noncentral_chi2, sample_noncentral_f, standard_normal_vector, ChiSquare,
};
use crate::error::{Error, Result};
use crate::linalg::{sqrt_downdate_with_complement, sqrt_update_identity, SymEigen};
use crate::model::{
    characteristics, Lambda, LinearCombination, PopulationModel, PortfolioCharacteristics,
    PortfolioSpec, ProjectedQuantities,
};
use crate::rng::substream;

/// Population objects and dimensions the exact samplers need.
#[derive(Debug, Clone)]
pub struct SamplerInputs {
    proj: ProjectedQuantities,
    n: usize,
    p: usize,
    lql_sqrt: DMatrix<f64>,
    lql_inv: DMatrix<f64>,
    noncentrality: f64,
    dof3: f64,
    chi_xi1: ChiSquare,
    chi_xi2: ChiSquare,
    chi_t1: ChiSquare,
    chi_t2: ChiSquare,
    chi_t3: ChiSquare,
}

/// The independent latent variables behind one draw.
#[derive(Debug, Clone)]
pub struct Latent {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub z1: f64,
    pub z2: DVector<f64>,
    pub t1: f64,
    pub t2: DVector<f64>,
    pub t3: DVector<f64>,
}

/// One draw of `(V̂, R̂, θ̂, ŝ, η̂)`.
#[derive(Debug, Clone)]
pub struct JointDraw {
    pub v_hat: f64,
    pub r_hat: f64,
    pub theta_hat: DVector<f64>,
    pub s_hat: f64,
    pub eta_hat: DVector<f64>,
    /// `ξ3/n + yᵀ(LQLᵀ)⁻¹y`, the sample slope before the final rescaling.
    pub f: f64,
}

impl JointDraw {
    pub fn lambda(&self) -> Lambda {
        Lambda::new(self.r_hat, self.v_hat, self.s_hat)
    }
}

/// `θ̂ + g(R̂, V̂, ŝ)·η̂`, or `None` outside the domain of `g`.
pub fn weights_from_joint(spec: &PortfolioSpec, draw: &JointDraw) -> Option<DVector<f64>> {
    let g = spec.g(draw.lambda()).ok()?;
    Some(&draw.theta_hat + &draw.eta_hat * g)
}

fn dof_check(n: usize, p: usize, dof: i64) -> Result<()> {
    if dof < 1 {
        Err(Error::DegenerateDof { n, p, dof })
    } else {
        Ok(())
    }
}

impl SamplerInputs {
    pub fn new(proj: ProjectedQuantities, n: usize, p: usize) -> Result<Self> {
        let k = proj.k();
        if n <= p {
            return Err(Error::InsufficientSample { n, p });
        }
        dof_check(n, p, p as i64 - k as i64 - 1)?;
        let eig = SymEigen::new(&proj.lql)?;
        let lql_sqrt = eig.sqrt();
        let lql_inv = eig.inverse();
        let nf = n as f64;
        let nu = (n - p) as f64;
        Ok(SamplerInputs {
            noncentrality: nf * proj.mu_a_mu,
            dof3: (p - k - 1) as f64,
            chi_xi1: ChiSquare::new(nu)?,
            chi_xi2: ChiSquare::new(nu + 2.0)?,
            chi_t1: ChiSquare::new(nu + 1.0)?,
            chi_t2: ChiSquare::new(nu + 2.0)?,
            chi_t3: ChiSquare::new(nu + 3.0)?,
            proj,
            n,
            p,
            lql_sqrt,
            lql_inv,
        })
    }

    pub fn from_model(
        model: &PopulationModel,
        lincomb: &LinearCombination,
        n: usize,
    ) -> Result<Self> {
        let frontier = model.frontier();
        let proj = ProjectedQuantities::from_model(model, &frontier, lincomb)?;
        SamplerInputs::new(proj, n, model.dim())
    }

    pub fn projected(&self) -> &ProjectedQuantities {
        &self.proj
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.proj.k()
    }

    /// `n μᵀAμ`, the noncentrality of `ξ3`.
    pub fn noncentrality(&self) -> f64 {
        self.noncentrality
    }

    pub fn draw_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Latent {
        let k = self.k();
        let xi1 = self.chi_xi1.sample(rng);
        let xi2 = self.chi_xi2.sample(rng);
        let xi3 = sample_noncentral_chi2(rng, self.dof3, self.noncentrality)
            .expect("validated degrees of freedom");
        let z1: f64 = rng.sample(StandardNormal);
        let z2 = &self.lql_sqrt * standard_normal_vector(rng, k);
        let nu = (self.n - self.p) as f64;
        let t1 = {
            let z: f64 = rng.sample(StandardNormal);
            z / (self.chi_t1.sample(rng) / (nu + 1.0)).sqrt()
        };
        let t2 = {
            let z = standard_normal_vector(rng, k);
            z * ((nu + 2.0) / self.chi_t2.sample(rng)).sqrt()
        };
        let t3 = {
            let z = standard_normal_vector(rng, k);
            z * ((nu + 3.0) / self.chi_t3.sample(rng)).sqrt()
        };
        Latent {
            xi1,
            xi2,
            xi3,
            z1,
            z2,
            t1,
            t2,
            t3,
        }
    }

    /// Maps a latent tuple to `(V̂, R̂, θ̂, ŝ, η̂)`.
    pub fn assemble(&self, lat: &Latent) -> JointDraw {
        let pr = &self.proj;
        let n = self.n as f64;
        let nu = (self.n - self.p) as f64;
        let (nu1, nu2, nu3) = (nu + 1.0, nu + 2.0, nu + 3.0);
        let sqrt_v = pr.v_gmv.sqrt();

        let y = &pr.eta * pr.s + &lat.z2 / n.sqrt();
        let ginv_y = &self.lql_inv * &y;
        let resid = lat.xi3 / n;
        let f = resid + y.dot(&ginv_y);
        let sqrt_f = f.sqrt();

        let v_hat = pr.v_gmv * lat.xi1 / (n - 1.0);
        let r_hat = pr.r_gmv + sqrt_v * (lat.z1 / n.sqrt() + sqrt_f * lat.t1 / nu1.sqrt());

        // (LQLᵀ − yyᵀ/f)^{1/2}; its complement 1 − yᵀG⁻¹y/f is ξ3/(nf) exactly.
        let b = &y / sqrt_f;
        let ginv_b = &ginv_y / sqrt_f;
        let s1 = sqrt_downdate_with_complement(&self.lql_sqrt, &ginv_b, &b, resid / f)
            .expect("xi3 > 0 keeps the downdate positive definite");
        let s1_t2 = s1.apply(&lat.t2);
        let stretch = (1.0 + lat.t1 * lat.t1 / nu1).sqrt();

        let theta_hat = &pr.theta
            + (&y * (lat.t1 / (sqrt_f * nu1.sqrt())) + &s1_t2 * (stretch / nu2.sqrt())) * sqrt_v;

        let s_hat = (n - 1.0) * stretch * stretch * f / lat.xi2;

        // (n−1)(MΣ̂⁻¹Mᵀ)⁻¹ is Wishart, so given t1 and t2 the rest of η̂ is
        // S1(I + t2t2ᵀ/ν2)^{1/2}t3 / (stretch·√ν3·√f). Neither f inside the
        // update root nor a missing 1/stretch survives a brute-force check.
        let s2 = sqrt_update_identity(&(&lat.t2 / nu2.sqrt()));
        let s1_s2_t3 = s1.apply(&s2.apply(&lat.t3));
        let eta_hat = &y / f
            + (&s1_t2 * (lat.t1 / (stretch * nu2.sqrt() * nu1.sqrt()))
                + s1_s2_t3 / (stretch * nu3.sqrt()))
                / sqrt_f;

        JointDraw {
            v_hat,
            r_hat,
            theta_hat,
            s_hat,
            eta_hat,
            f,
        }
    }

    pub fn draw_joint<R: Rng + ?Sized>(&self, rng: &mut R) -> JointDraw {
        self.assemble(&self.draw_latent(rng))
    }

    /// One draw of `L ŵ_g` together with the coupled joint draw.  Outside the
    /// domain of `g` the weights are NaN and the flag is set.
    pub fn draw_weights<R: Rng + ?Sized>(&self, spec: &PortfolioSpec, rng: &mut R) -> WeightDraw {
        let joint = self.draw_joint(rng);
        let (lw, domain_violation) = match weights_from_joint(spec, &joint) {
            Some(w) => (w, false),
            None => (DVector::from_element(self.k(), f64::NAN), true),
        };
        WeightDraw {
            joint,
            lw,
            domain_violation,
        }
    }

    /// A full record: joint draw, weights and the characteristics evaluated
    /// at the same `(R̂, V̂, ŝ)`.
    pub fn draw_record<R: Rng + ?Sized>(
        &self,
        spec: &PortfolioSpec,
        level: f64,
        rng: &mut R,
    ) -> DrawRecord {
        let w = self.draw_weights(spec, rng);
        DrawRecord::new(w.joint, w.lw, spec, level)
    }
}

#[derive(Debug, Clone)]
pub struct WeightDraw {
    pub joint: JointDraw,
    pub lw: DVector<f64>,
    pub domain_violation: bool,
}

/// Draws `(V̂, R̂, ŝ)` directly from the three-variate representation, without
/// the `k`-dimensional parts.
#[derive(Debug, Clone)]
pub struct CharacteristicsSampler {
    lam: Lambda,
    n: usize,
    p: usize,
    chi: ChiSquare,
}

impl CharacteristicsSampler {
    pub fn new(lam: Lambda, n: usize, p: usize) -> Result<Self> {
        if n <= p {
            return Err(Error::InsufficientSample { n, p });
        }
        dof_check(n, p, p as i64 - 1)?;
        if !(lam.v > 0.0 && lam.s >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need V_GMV > 0 and s >= 0, got {} and {}",
                lam.v, lam.s
            )));
        }
        Ok(CharacteristicsSampler {
            lam,
            n,
            p,
            chi: ChiSquare::new((n - p) as f64)?,
        })
    }

    /// `(R̂, V̂, ŝ)` from `ξ ~ χ²_{n−p}`, `ψ ~ F(p−1, n−p+1; ns)` and `z ~ N(0, 1)`.
    pub fn draw_lambda<R: Rng + ?Sized>(&self, rng: &mut R) -> Lambda {
        let (n, p) = (self.n as f64, self.p as f64);
        let xi = self.chi.sample(rng);
        let psi = sample_noncentral_f(rng, p - 1.0, n - p + 1.0, n * self.lam.s)
            .expect("validated degrees of freedom");
        let z: f64 = rng.sample(StandardNormal);
        let v_hat = self.lam.v * xi / (n - 1.0);
        let r_hat =
            self.lam.r + (self.lam.v / n * (1.0 + psi * (p - 1.0) / (n - p + 1.0))).sqrt() * z;
        let s_hat = (n - 1.0) * (p - 1.0) / (n * (n - p + 1.0)) * psi;
        Lambda::new(r_hat, v_hat, s_hat)
    }

    pub fn draw_characteristics<R: Rng + ?Sized>(
        &self,
        spec: &PortfolioSpec,
        level: f64,
        rng: &mut R,
    ) -> (Lambda, Result<PortfolioCharacteristics>) {
        let lam = self.draw_lambda(rng);
        (lam, characteristics(spec, lam, level))
    }
}

#[derive(Debug, Clone)]
pub struct DrawRecord {
    pub joint: JointDraw,
    pub lw: DVector<f64>,
    pub characteristics: PortfolioCharacteristics,
    pub domain_violation: bool,
}

impl DrawRecord {
    /// Builds a record from a joint draw and its weights, evaluating the
    /// characteristics at the draw's `(R̂, V̂, ŝ)`.
    pub fn new(joint: JointDraw, lw: DVector<f64>, spec: &PortfolioSpec, level: f64) -> Self {
        let chars = characteristics(spec, joint.lambda(), level);
        let domain_violation = lw.iter().any(|x| x.is_nan()) || chars.is_err();
        DrawRecord {
            characteristics: chars.unwrap_or_else(|_| PortfolioCharacteristics::nan()),
            joint,
            lw,
            domain_violation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    StochasticRep,
    BruteForce,
}

/// Column store of `b` draws.
#[derive(Debug, Clone)]
pub struct DrawBatch {
    pub provenance: Provenance,
    pub seed: u64,
    pub v_hat: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub s_hat: Vec<f64>,
    /// `b × k`
    pub theta_hat: DMatrix<f64>,
    pub eta_hat: DMatrix<f64>,
    pub lw_hat: DMatrix<f64>,
    pub characteristics: Vec<PortfolioCharacteristics>,
    pub domain_violation: Vec<bool>,
}

/// Maximum tolerated share of draws outside the portfolio domain.
pub const MAX_VIOLATION_RATE: f64 = 0.5;

impl DrawBatch {
    pub fn from_records(
        provenance: Provenance,
        seed: u64,
        k: usize,
        records: Vec<DrawRecord>,
    ) -> Self {
        let b = records.len();
        let mut batch = DrawBatch {
            provenance,
            seed,
            v_hat: Vec::with_capacity(b),
            r_hat: Vec::with_capacity(b),
            s_hat: Vec::with_capacity(b),
            theta_hat: DMatrix::zeros(b, k),
            eta_hat: DMatrix::zeros(b, k),
            lw_hat: DMatrix::zeros(b, k),
            characteristics: Vec::with_capacity(b),
            domain_violation: Vec::with_capacity(b),
        };
        for (i, rec) in records.into_iter().enumerate() {
            batch.v_hat.push(rec.joint.v_hat);
            batch.r_hat.push(rec.joint.r_hat);
            batch.s_hat.push(rec.joint.s_hat);
            for j in 0..k {
                batch.theta_hat[(i, j)] = rec.joint.theta_hat[j];
                batch.eta_hat[(i, j)] = rec.joint.eta_hat[j];
                batch.lw_hat[(i, j)] = rec.lw[j];
            }
            batch.characteristics.push(rec.characteristics);
            batch.domain_violation.push(rec.domain_violation);
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.v_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_hat.is_empty()
    }

    pub fn k(&self) -> usize {
        self.theta_hat.ncols()
    }

    pub fn violation_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.domain_violation.iter().filter(|&&v| v).count() as f64 / self.len() as f64
    }

    /// Column by name: `v_hat`, `r_hat`, `s_hat`, `theta_hat_j`, `eta_hat_j`,
    /// `lw_hat_j` (1-based `j`) or a characteristic name such as `var_g`.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        match name {
            "v_hat" => return Some(self.v_hat.clone()),
            "r_hat" => return Some(self.r_hat.clone()),
            "s_hat" => return Some(self.s_hat.clone()),
            _ => {}
        }
        for c in crate::model::Characteristic::ALL {
            if c.name() == name {
                return Some(self.characteristics.iter().map(|x| x.get(c)).collect());
            }
        }
        let (stem, idx) = name.rsplit_once('_')?;
        let j: usize = idx.parse().ok()?;
        if j == 0 || j > self.k() {
            return None;
        }
        let m = match stem {
            "theta_hat" => &self.theta_hat,
            "eta_hat" => &self.eta_hat,
            "lw_hat" => &self.lw_hat,
            _ => return None,
        };
        Some(m.column(j - 1).iter().copied().collect())
    }

    pub fn csv_header(k: usize) -> Vec<String> {
        let mut h = vec![
            "draw_index".to_string(),
            "v_hat".into(),
            "r_hat".into(),
            "s_hat".into(),
        ];
        for stem in ["theta_hat", "eta_hat", "lw_hat"] {
            for j in 1..=k {
                h.push(format!("{stem}_{j}"));
            }
        }
        for c in crate::model::Characteristic::ALL {
            h.push(c.name().into());
        }
        h.push("domain_violation".into());
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.k();
        w.write_record(Self::csv_header(k))?;
        for i in 0..self.len() {
            let mut row = vec![
                i.to_string(),
                fmt17(self.v_hat[i]),
                fmt17(self.r_hat[i]),
                fmt17(self.s_hat[i]),
            ];
            for m in [&self.theta_hat, &self.eta_hat, &self.lw_hat] {
                for j in 0..k {
                    row.push(fmt17(m[(i, j)]));
                }
            }
            for c in crate::model::Characteristic::ALL {
                row.push(fmt17(self.characteristics[i].get(c)));
            }
            row.push(if self.domain_violation[i] {
                "1".into()
            } else {
                "0".into()
            });
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seventeen significant digits, independent of locale.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Fills a batch of `b` draws; draw `i` uses substream `i` of `seed`, so the
/// result does not depend on how the work is scheduled.
pub fn sample_batch(
    inputs: &SamplerInputs,
    spec: &PortfolioSpec,
    level: f64,
    b: usize,
    seed: u64,
) -> Result<DrawBatch> {
    spec.validate()?;
    let records: Vec<DrawRecord> = (0..b as u64)
        .into_par_iter()
        .map(|i| inputs.draw_record(spec, level, &mut substream(seed, i)))
        .collect();
    let batch = DrawBatch::from_records(Provenance::StochasticRep, seed, inputs.k(), records);
    check_violations(&batch)?;
    Ok(batch)
}

pub(crate) fn check_violations(batch: &DrawBatch) -> Result<()> {
    let rate = batch.violation_rate();
    if rate > MAX_VIOLATION_RATE {
        return Err(Error::ExcessiveDomainViolations(rate));
    }
    if rate > 0.0 {
        log::warn!(
            "{:.2}% of draws fell outside the portfolio domain",
            100.0 * rate
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::factorization_count;

    fn small_inputs() -> SamplerInputs {
        let proj = ProjectedQuantities::new(
            Lambda::new(0.01, 0.5, 0.3),
            DVector::from_vec(vec![0.2, -0.1]),
            DVector::from_vec(vec![0.5, 0.3]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]),
        )
        .unwrap();
        SamplerInputs::new(proj, 40, 10).unwrap()
    }

    #[test]
    fn gmv_weights_equal_theta_bitwise() {
        let inputs = small_inputs();
        for i in 0..200 {
            let w = inputs.draw_weights(&PortfolioSpec::Gmv, &mut substream(3, i));
            assert_eq!(w.lw, w.joint.theta_hat);
            assert!(!w.domain_violation);
        }
    }

    #[test]
    fn draws_respect_support() {
        let inputs = small_inputs();
        for i in 0..500 {
            let d = inputs.draw_joint(&mut substream(4, i));
            assert!(d.v_hat > 0.0 && d.s_hat >= 0.0 && d.f > 0.0);
        }
    }

    #[test]
    fn no_factorization_per_draw() {
        let inputs = small_inputs();
        let spec = PortfolioSpec::ExpectedUtility { gamma: 5.0 };
        let before = factorization_count();
        for i in 0..1000 {
            let _ = inputs.draw_record(&spec, 0.95, &mut substream(5, i));
        }
        assert_eq!(factorization_count(), before);
    }

    #[test]
    fn batches_are_deterministic() {
        let inputs = small_inputs();
        let spec = PortfolioSpec::ExpectedUtility { gamma: 5.0 };
        let a = sample_batch(&inputs, &spec, 0.95, 300, 17).unwrap();
        let b = sample_batch(&inputs, &spec, 0.95, 300, 17).unwrap();
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        let c = sample_batch(&inputs, &spec, 0.95, 300, 18).unwrap();
        assert_ne!(a.v_hat, c.v_hat);
    }

    #[test]
    fn degenerate_dof_rejected() {
        let proj = ProjectedQuantities::new(
            Lambda::new(0.0, 1.0, 0.2),
            DVector::from_vec(vec![0.1, 0.1]),
            DVector::from_vec(vec![0.1, 0.1]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        assert!(matches!(
            SamplerInputs::new(proj, 10, 3),
            Err(Error::DegenerateDof { .. })
        ));
    }

    #[test]
    fn csv_header_layout() {
        let h = DrawBatch::csv_header(2);
        assert_eq!(h[0], "draw_index");
        assert_eq!(h[4], "theta_hat_1");
        assert_eq!(h[9], "lw_hat_2");
        assert_eq!(h.last().unwrap(), "domain_violation");
        assert_eq!(h.len(), 4 + 6 + 6 + 1);
    }

    #[test]
    fn eu_characteristics_shift_by_slope() {
        let cs = CharacteristicsSampler::new(Lambda::new(0.1, 0.5, 0.4), 30, 8).unwrap();
        let gamma = 4.0;
        let spec = PortfolioSpec::ExpectedUtility { gamma };
        for i in 0..200 {
            let (lam, ch) = cs.draw_characteristics(&spec, 0.95, &mut substream(9, i));
            let ch = ch.unwrap();
            assert_eq!(ch.r_g, lam.r + lam.s / gamma);
            assert!((ch.v_g - (lam.v + lam.s / (gamma * gamma))).abs() <= 1e-15 * ch.v_g);
        }
    }
}
